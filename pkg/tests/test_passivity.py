import numpy as np
import pytest
from hypothesis import given

from popdyn.dynamics import IntegratorConfig, simulate
from popdyn.games import AffineCongestionGame
from popdyn.passivity import (EMPIRICAL, StorageSpec, audit_trajectory, dissipation,
                              equivalence_scan, grad_x_storage, br_inner_product_check,
                              pc_check, storage, theorem_coverage)
from popdyn.rules import (IPC, SEPT, BestResponse, Contrarian, Hybrid, RateShape, bnn,
                          equal_hybrid, smith)
from strategies import state_payoff

BR = StorageSpec.for_rule(BestResponse())
SMITH = StorageSpec.for_rule(smith())
BNN = StorageSpec.for_rule(bnn())
HYB = StorageSpec.for_rule(equal_hybrid())
POW = StorageSpec.for_rule(Hybrid(0.5, 0.7, 1.2, SEPT(RateShape("power", 1.0, 2.0)),
                                  IPC(RateShape("power", 1.0, 3.0))))


def test_storage_examples():
    assert storage(BR, [1, 0], [1, 2]) == 1
    assert storage(BR, [0.3, 0.7], [4, 4]) == 0
    assert storage(SMITH, [1, 0], [0, 2]) == pytest.approx(2)
    assert storage(BNN, [0.5, 0.5], [1, 3]) == pytest.approx(0.5)


def test_dissipation_examples():
    assert dissipation(SMITH, [1, 0], [0, 2]) == pytest.approx(4)
    assert dissipation(BNN, [0.5, 0.5], [1, 3]) == pytest.approx(1)
    for spec in (BR, SMITH, BNN, HYB):
        assert dissipation(spec, [0, 0, 1], [0, 1, 2]) == 0
        assert storage(spec, [0, 0, 1], [0, 1, 2]) == 0


def test_hybrid_weights():
    x, p = np.array([0.2, 0.5, 0.3]), np.array([1.0, -1.0, 0.5])
    parts = [storage(s, x, p) for s in (BR, BNN, SMITH)]
    assert storage(HYB, x, p) == pytest.approx(sum(parts) / 3)
    d = [dissipation(s, x, p) for s in (BR, BNN, SMITH)]
    assert dissipation(HYB, x, p) == pytest.approx(sum(d) / 9)


@given(state_payoff())
def test_storage_and_dissipation_nonnegative(xp):
    x, p = xp
    for spec in (BR, SMITH, BNN, HYB, POW):
        assert storage(spec, x, p) >= -1e-12
        assert dissipation(spec, x, p) >= -1e-10


@given(state_payoff(min_n=3, max_n=5))
def test_gradient_matches_finite_differences(xp):
    x, p = xp
    n = len(x)
    x = 0.9 * x + 0.1 / n                 # interior, so tangent probes stay feasible
    h = 1e-6
    # tangent directions e_i - e_n: the BR storage is clamped at 0 and has a
    # kink off the simplex on the best-response set
    D = np.eye(n)[:-1] - np.eye(n)[-1]
    for spec in (BR, SMITH, BNN, HYB, POW):
        g = D @ grad_x_storage(spec, x, p)
        fd = np.array([(storage(spec, x + h * d, p) - storage(spec, x - h * d, p)) / (2 * h)
                       for d in D])
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-5 * (1 + np.abs(p).max() ** 3))


def test_gradient_ambient_formula():
    x, p = np.array([0.2, 0.3, 0.5]), np.array([1.0, -1.0, 0.5])
    np.testing.assert_allclose(grad_x_storage(BR, x, p), -p)
    phat = p - x @ p
    np.testing.assert_allclose(grad_x_storage(BNN, x, p), -p * np.maximum(phat, 0).sum())


def test_sept_gradient_vanishes_on_uniform_payoff():
    np.testing.assert_array_equal(grad_x_storage(BNN, [0.2, 0.3, 0.5], [1, 1, 1]), 0)


def test_theorem_coverage():
    assert theorem_coverage(BestResponse(), 3) == "br"
    assert theorem_coverage(smith(), 3) == "ipc"
    assert theorem_coverage(bnn(), 3) == "sept"
    assert theorem_coverage(Hybrid(1, 0, 1, ipc=IPC(RateShape("power", 1, 2))), 3) == "cone:br+ipc"
    assert theorem_coverage(equal_hybrid(), 3) == "cone:br+sept+smith"
    pw = Hybrid(1, 1, 1, bnn(), IPC(RateShape("power", 1, 2)))
    assert theorem_coverage(pw, 2) == "cone:br+sept+ipc,n=2"
    assert theorem_coverage(pw, 3) == EMPIRICAL
    assert theorem_coverage(Contrarian(), 3) == EMPIRICAL


def test_equivalence_examples():
    for spec in (BR, SMITH, BNN, HYB):
        x, p = np.eye(3)[2], np.array([0.0, 1.0, 2.0])
        assert storage(spec, x, p) < 1e-8 and dissipation(spec, x, p) < 1e-8
        u = np.ones(3) / 3
        assert storage(spec, u, p) > 1e-8 and dissipation(spec, u, p) > 1e-8
        assert storage(spec, u, np.ones(3)) == 0 and dissipation(spec, u, np.ones(3)) == 0


def test_equivalence_scan_small():
    rep = equivalence_scan(HYB, equal_hybrid(), resolution=10, n_payoffs=20)
    assert rep.passed and rep.details["zero_set_size"] > 0
    with pytest.raises(ValueError):
        equivalence_scan(HYB, equal_hybrid(), resolution=5)


def test_br_inner_product_and_pc():
    for spec in (SMITH, BNN, POW):
        assert br_inner_product_check(spec, 10_000).passed
    with pytest.raises(ValueError):
        br_inner_product_check(BR)
    for rule in (BestResponse(), smith(), bnn(), equal_hybrid()):
        assert pc_check(rule, 10_000).passed
    assert not pc_check(Contrarian(), 10_000).passed


def test_audit_hybrid_and_negative_control():
    game = AffineCongestionGame()
    cfg = IntegratorConfig(h=1e-3, horizon=5.0)
    tr = simulate(game, equal_hybrid(), [1, 0, 0], cfg)
    a = audit_trajectory(tr, HYB, equal_hybrid(), contractive=True)
    assert a.verdict == "pass" and a.s_final < 1e-3 and a.monotone_violations == 0
    assert a.theorem_coverage == "cone:br+sept+smith"
    d = a.to_dict()
    assert set(d) >= {"rule", "storage_spec", "n_samples", "violations", "worst_margin",
                      "verdict", "theorem_coverage"}
    bad = simulate(game, Contrarian(), [0.4, 0.3, 0.3], IntegratorConfig(h=1e-3, horizon=1.0))
    assert audit_trajectory(bad, SMITH, Contrarian()).verdict == "fail"
    with pytest.raises(ValueError):
        audit_trajectory(tr, SMITH, smith())


def test_storage_spec_validation():
    with pytest.raises(ValueError):
        StorageSpec(w_sept=1.0)
    with pytest.raises(ValueError):
        StorageSpec(w_br=-1.0)
    with pytest.raises(TypeError):
        StorageSpec.for_rule(Contrarian())
