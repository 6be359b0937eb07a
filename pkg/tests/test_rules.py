import numpy as np
import pytest
from hypothesis import given

from popdyn.rules import (IPC, SEPT, BestResponse, Contrarian, Hybrid, Logit, RateShape, bnn,
                          eval_rule, logit_choice, logit_limit_check, pack_rule, equal_hybrid,
                          rate_matrix, rule_from_dict, rule_to_dict, smith)
from strategies import state_payoff


def test_smith_example():
    T = eval_rule(smith(1.0), [0.3, 0.7], [0, 2])
    assert T[0, 1] == 2 and T[1, 0] == 0


def test_bnn_example():
    T = eval_rule(bnn(1.0), [0.5, 0.5], [1, 3])
    np.testing.assert_array_equal(T, [[0, 1], [0, 1]])


def test_br_rows():
    T = eval_rule(BestResponse(), [0.2, 0.3, 0.5], [2, 2, 1])
    np.testing.assert_array_equal(T, np.tile([0.5, 0.5, 0], (3, 1)))


def test_hybrid_is_average():
    x, p = np.array([0.5, 0.5]), np.array([1.0, 3.0])
    parts = [eval_rule(r, x, p) for r in (BestResponse(), smith(), bnn())]
    np.testing.assert_allclose(eval_rule(equal_hybrid(), x, p), sum(parts) / 3, rtol=1e-15)


def test_logit_examples():
    y = logit_choice(np.array([0.0, 1.0]), 0.01)
    assert y[0] == pytest.approx(np.exp(-100) / (1 + np.exp(-100)), rel=1e-12)
    assert 3.6e-44 < y[0] < 3.8e-44
    np.testing.assert_array_equal(eval_rule(Logit(0.3), [0.5, 0.5], [5, 5])[0], [0.5, 0.5])
    assert logit_limit_check([0.0, 1.0], [0.1, 0.01, 0.001]) < 1e-4
    with pytest.raises(ValueError):
        logit_limit_check([0.0, 0.0], [0.1])


def test_rate_shapes():
    lin = RateShape("linear", 2.0)
    assert lin(3.0) == 6.0 and lin.integral(3.0) == 9.0
    pw = RateShape("power", 1.0, 3.0)
    assert pw.integral(2.0) == pytest.approx(4.0)
    tab = RateShape("table", knots=(0.0, 1.0, 2.0), values=(0.0, 1.0, 1.0))
    assert tab(5.0) == 1.0
    assert tab.integral(2.0) == pytest.approx(1.5, abs=1e-10)
    capped = RateShape("linear", 1.0, rate_cap=2.0)
    assert capped(5.0) == 2.0 and capped.integral(5.0) == pytest.approx(2.0 + 2.0 * 3)
    for bad in ({"kind": "cubic"}, {"gain": -1.0}, {"kind": "table", "knots": (0, 1),
                                                       "values": (1, 1)}):
        with pytest.raises(ValueError):
            RateShape(**bad)


def test_hybrid_validation():
    with pytest.raises(ValueError):
        Hybrid(-1.0, 0, 0)
    with pytest.raises(ValueError):
        Hybrid(0, 0, 0)
    with pytest.raises(ValueError):
        Hybrid(0, 1.0, 0)
    with pytest.raises(ValueError):
        eval_rule(equal_hybrid(), [0.5, 0.5], [np.nan, 1.0])


@pytest.mark.parametrize("rule", [BestResponse(), Logit(0.5), smith(2.0), bnn(), equal_hybrid(),
                                  Contrarian(), IPC(RateShape("power", 1.0, 2.0)),
                                  SEPT((RateShape(), RateShape("power", 1.0, 2.0), RateShape()))])
def test_dict_roundtrip(rule):
    assert rule_from_dict(rule_to_dict(rule)) == rule
    assert rule_to_dict(rule_from_dict(rule_to_dict(rule))) == rule_to_dict(rule)


def test_named_kinds():
    assert rule_from_dict({"kind": "smith", "gain": 2}) == smith(2.0)
    assert rule_from_dict({"kind": "bnn"}) == bnn(1.0)
    with pytest.raises(ValueError):
        rule_from_dict({"kind": "replicator"})


@given(state_payoff())
def test_rates_nonnegative(xp):
    x, p = xp
    for rule in (BestResponse(), smith(), bnn(), equal_hybrid(), Logit(0.1)):
        assert rate_matrix(rule, x, p).min() >= 0


def test_batched_matches_single(rng):
    X = rng.dirichlet(np.ones(4), 50)
    P = rng.standard_normal((50, 4))
    for rule in (smith(), bnn(), equal_hybrid()):
        B = rate_matrix(rule, X, P)
        for i in range(0, 50, 7):
            np.testing.assert_allclose(B[i], eval_rule(rule, X[i], P[i]))


def test_pack_rule_shapes():
    pr = pack_rule(equal_hybrid(), 3)
    np.testing.assert_allclose(pr.weights, [1 / 3, 1 / 3, 1 / 3, 0])
    assert pr.sept_par.shape == (3, 3)
    assert pack_rule(Logit(0.2), 3).beta == 0.2
    with pytest.raises(ValueError):
        pack_rule(IPC((RateShape(), RateShape(rate_cap=5.0))), 2)
