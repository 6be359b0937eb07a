import numpy as np
import pytest

from popdyn import kernels
from popdyn.dynamics import IntegratorConfig, simulate
from popdyn.games import AffineCongestionGame, CallableGame
from popdyn.rules import IPC, SEPT, BestResponse, Logit, RateShape, bnn, equal_hybrid, smith

RULES = [BestResponse(), smith(), bnn(), equal_hybrid(), Logit(0.5),
         IPC(RateShape("power", 0.03, 2.0)),
         SEPT(RateShape("table", knots=(0.0, 1.0, 5.0), values=(0.0, 1.0, 2.0)))]


@pytest.mark.parametrize("rule", RULES, ids=lambda r: type(r).__name__)
def test_numba_matches_numpy(rule):
    game = AffineCongestionGame()
    cfg = IntegratorConfig(h=1e-3, horizon=0.5)
    a = simulate(game, rule, [0.2, 0.3, 0.5], cfg, use_numba=True)
    b = simulate(game, rule, [0.2, 0.3, 0.5], cfg, use_numba=False)
    np.testing.assert_allclose(a.x, b.x, atol=1e-12)
    np.testing.assert_allclose(a.V, b.V, atol=1e-9)


def test_generic_game_path_matches():
    game = AffineCongestionGame()
    wrapped = CallableGame(game.payoff, 3)
    cfg = IntegratorConfig(h=1e-3, horizon=0.2)
    a = simulate(game, equal_hybrid(), [1, 0, 0], cfg)
    b = simulate(wrapped, equal_hybrid(), [1, 0, 0], cfg)
    np.testing.assert_allclose(a.x, b.x, atol=1e-10)


def test_sliding_mode_holds_a_tie():
    # F(x) = -x: the best-response switch surface is x1 = x2
    game = CallableGame(lambda x: -x, 2)
    cfg = IntegratorConfig(h=1e-3, horizon=3.0, tie_mode="sliding")
    tr = simulate(game, BestResponse(), [0.5, 0.5], cfg)
    assert np.abs(tr.x - 0.5).max() < 1e-3
    assert kernels.TIE_SLIDING != kernels.TIE_UNIFORM


def test_env_flag_selects_numpy_path():
    import os
    import subprocess
    import sys

    code = ("from popdyn import _accel; from popdyn.dynamics import simulate, IntegratorConfig;"
            "from popdyn.games import AffineCongestionGame; from popdyn.rules import smith;"
            "tr = simulate(AffineCongestionGame(), smith(), [1, 0, 0],"
            " IntegratorConfig(h=1e-3, horizon=0.05)); print(_accel.backend(), tr.x[-1, 0])")
    env = dict(os.environ, POPDYN_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out[0] == "numpy"
    ref = simulate(AffineCongestionGame(), smith(), [1, 0, 0],
                   IntegratorConfig(h=1e-3, horizon=0.05))
    assert abs(float(out[1]) - ref.x[-1, 0]) < 1e-12
