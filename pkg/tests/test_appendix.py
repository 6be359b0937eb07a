import numpy as np
import pytest
from hypothesis import given, strategies as st

from popdyn.appendix import (J_batch, J_value, cross_term_batch, h_vector, lp_certificate,
                             lp_vertices, minmax_check, n2_cross_term_check, ordered_context,
                             sept_ipc_identity_residual)
from popdyn.rules import IPC, RateShape, smith
from strategies import state_payoff


def test_h_examples():
    np.testing.assert_array_equal(h_vector([0, 1, 2]), [5, 1, 0])
    np.testing.assert_array_equal(h_vector([3, 3, 3]), 0)


@given(state_payoff())
def test_h_is_sorted_opposite_to_p(xp):
    _, p = xp
    h = h_vector(p)
    o = np.argsort(p)
    assert np.all(np.diff(h[o]) <= 1e-12)


def test_J_examples():
    assert J_value([0.2, 0.3, 0.5], [1, 1, 1]) == 0
    assert J_value([0, 0, 1], [0, 1, 2]) == 0


@given(state_payoff(min_n=2, max_n=6))
def test_J_nonpositive_and_forms_agree(xp):
    x, p = xp
    assert J_value(x, p) <= 1e-10
    assert J_value(x, p, RateShape("power", 1.0, 2.0)) <= 1e-10


def test_J_batch(rng):
    X = rng.dirichlet(np.ones(4), 1000)
    P = rng.standard_normal((1000, 4))
    a, b = J_batch(X, P)
    np.testing.assert_allclose(a, b, atol=1e-12)
    assert a.max() <= 1e-10


def test_minmax_examples():
    ctx = ordered_context([0.5, 0.5, 0], [0, 1, 2])
    assert ctx.k == 1 and list(ctx.upper) == [2] and list(ctx.lower) == [0]
    r = minmax_check([0.5, 0.5, 0], [0, 1, 2])
    assert r.holds and not r.vacuous and r.lhs <= r.rhs
    assert minmax_check([1, 0, 0], [0, 1, 2]).vacuous


@given(state_payoff(min_n=3, max_n=6))
def test_minmax_holds(xp):
    x, p = xp
    assert minmax_check(x, p).holds


def test_lp_examples():
    c = lp_certificate([0.5, 0.5, 0], [0, 1, 2])
    np.testing.assert_array_equal(c.z, [0, 1, 0])
    assert c.objective == 1 and c.ok
    c = lp_certificate([0, 0, 1], [0, 1, 2])
    np.testing.assert_array_equal(c.z, [0, 0, 1])
    assert c.objective == 0 and c.ok
    with pytest.raises(ValueError):
        lp_certificate([0.5, 0.5], [1, 1])


def test_lp_vertices():
    V = lp_vertices(np.array([0.0, 1.0, 2.0]), 1.0)
    assert V.shape[0] == 3
    np.testing.assert_allclose(V @ [0, 1, 2], [0, 1, 1])


@given(st.integers(2, 6).flatmap(lambda n: state_payoff(min_n=n, max_n=n)))
def test_lp_certificate_random(xp):
    x, p = xp
    if np.ptp(p) > 0:
        assert lp_certificate(x, p).ok


def test_cross_terms(rng):
    u = np.ones((1, 2)) / 2
    assert cross_term_batch(smith(), RateShape(), u, np.ones((1, 2)))[0] == 0
    res = n2_cross_term_check(samples=20_000)
    assert res.passed and res.worst <= 1e-10
    res3 = n2_cross_term_check(samples=1000, n=3)
    assert res3.passed is None
    X = rng.dirichlet(np.ones(4), 1000)
    P = rng.standard_normal((1000, 4))
    r = sept_ipc_identity_residual(IPC(RateShape("power", 1.0, 2.0)), RateShape(), X, P)
    assert r.max() < 1e-9
