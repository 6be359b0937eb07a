import numpy as np
import pytest
from hypothesis import given

from popdyn.core import (SimplexError, as_payoff, as_state, best_response_profile,
                         best_response_selection, excess_payoff, payoff_gap, project_simplex)
from strategies import state_payoff, states


def test_projection_examples():
    np.testing.assert_array_equal(project_simplex([0.5, 0.5]), [0.5, 0.5])
    np.testing.assert_allclose(project_simplex([1 + 1e-9, -1e-9]), [1, 0], atol=1e-15)
    y = project_simplex([0.3334, 0.3333, 0.3333], radius=1e-3)
    assert y.sum() == pytest.approx(1.0, abs=1e-15)


def test_projection_rejects_blowup():
    with pytest.raises(SimplexError):
        project_simplex([2.0, -1.0])
    with pytest.raises(SimplexError):
        project_simplex([np.nan, 1.0])
    with pytest.raises(SimplexError):
        project_simplex([-1.0, -1.0], radius=10)


@given(states())
def test_projection_is_identity_on_simplex(x):
    np.testing.assert_allclose(project_simplex(x), x, atol=1e-14)


def test_excess_payoff_examples():
    np.testing.assert_allclose(excess_payoff([1 / 3] * 3, [1, 1, 1]), 0, atol=1e-15)
    np.testing.assert_allclose(excess_payoff([1, 0], [2, 5]), [0, 3])
    np.testing.assert_allclose(excess_payoff([0.5, 0.5], [1, 3]), [-1, 1])


@given(state_payoff())
def test_excess_payoff_has_zero_mean(xp):
    x, p = xp
    assert abs(x @ excess_payoff(x, p)) <= 1e-12 * (1 + np.abs(p).max())


def test_best_response_examples():
    prof = best_response_profile([1, 2, 3], 0)
    assert prof.argmax_set == (2,)
    np.testing.assert_array_equal(prof.selection, [0, 0, 1])
    np.testing.assert_array_equal(best_response_selection([2, 2, 1], 0), [0.5, 0.5, 0])
    np.testing.assert_allclose(best_response_selection([4.0] * 5), [0.2] * 5)
    assert best_response_profile([1, 1 + 1e-12, 0]).count == 2


def test_validation():
    with pytest.raises(ValueError):
        as_payoff([[1, 2]])
    with pytest.raises(ValueError):
        as_payoff([1, np.inf])
    with pytest.raises(SimplexError):
        as_state([0.6, 0.6])
    with pytest.raises(ValueError):
        best_response_selection([1, 2], eps_tie=-1)


@given(state_payoff())
def test_payoff_gap_nonnegative(xp):
    x, p = xp
    assert payoff_gap(x, p) >= -1e-12
