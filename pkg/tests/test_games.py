import numpy as np
import pytest

from popdyn.games import (AffineCongestionGame, AffineGame, CallableGame, TableGame,
                          contractivity_check, fd_jacobian, game_from_dict, lattice_counts,
                          nash_oracle, payoff_projection_field, simplex_grid)


def test_congestion_payoff_at_vertices():
    g = AffineCongestionGame()
    np.testing.assert_allclose(g.payoff([1, 0, 0]), [-70, -65, -55])
    np.testing.assert_allclose(g.payoff([0, 1, 0]), [-30.5, -55.5, -25])
    np.testing.assert_allclose(g.payoff([0, 0, 1]), [-60, -55, -85])


def test_congestion_jacobian():
    g = AffineCongestionGame()
    expected = -np.array([[40, 0.5, 30], [10, 0.5, 0], [30, 0, 60]])
    np.testing.assert_allclose(g.jacobian([0.2, 0.3, 0.5]), expected)
    np.testing.assert_allclose(fd_jacobian(g.payoff, np.array([0.2, 0.3, 0.5])), expected,
                               atol=1e-6)
    flat = AffineCongestionGame(g1=(0, 20), g2=(0, 15), r=(0, 10))
    np.testing.assert_array_equal(flat.jacobian([0.3, 0.3, 0.4]), 0)


def test_contractivity():
    rep = contractivity_check(AffineCongestionGame(), 100)
    assert rep.contractive and rep.max_eigenvalue <= 1e-10
    assert rep.sufficient_condition == {"holds": True, "lhs": 120.0, "rhs": 10.0}
    assert "sufficient condition 4 r' >= g1' satisfied (120 >= 10)" in rep.summary()
    flat = contractivity_check(AffineCongestionGame(g1=(0, 20), g2=(0, 15), r=(0, 10)), 10)
    assert flat.contractive and abs(flat.max_eigenvalue) <= 1e-12
    steep = contractivity_check(AffineCongestionGame(g1=(1e6, 20), r=(0, 10)), 10)
    assert not steep.sufficient_condition["holds"] and steep.max_eigenvalue > 0
    assert not steep.contractive


def test_contractivity_generic_game():
    rep = contractivity_check(CallableGame(lambda x: -x ** 3, 3), 10)
    assert rep.contractive
    assert not contractivity_check(CallableGame(lambda x: x, 3), 10).contractive


def test_nash_examples():
    g = AffineCongestionGame()
    ne = nash_oracle(g, 50)
    assert len(ne) == 1 and ne.gaps[0] < 1e-6
    np.testing.assert_allclose(ne.points[0], [0.497917, 0.166667, 0.335417], atol=1e-5)
    sym = nash_oracle(CallableGame(lambda x: -x, 2), 20)
    assert len(sym) == 1
    np.testing.assert_allclose(sym.points[0], [0.5, 0.5], atol=1e-6)
    const = nash_oracle(CallableGame(lambda x: np.ones(3), 3), 10)
    assert len(const) == simplex_grid(3, 10).shape[0]


def test_lattice_and_field():
    c = lattice_counts(3, 4)
    assert c.shape == (15, 3) and np.all(c.sum(axis=1) == 4)
    X, F = payoff_projection_field(CallableGame(lambda x: 2.0 * np.ones(3), 3), 10)
    np.testing.assert_allclose(F, 0)
    assert np.all(X > 0)
    X, F = payoff_projection_field(AffineCongestionGame(), simplex_grid(3, 5))
    np.testing.assert_allclose(F.sum(axis=1), 0, atol=1e-12)


def test_table_game_reproduces_affine():
    g = AffineCongestionGame()
    tab = TableGame.from_function(g.payoff, 3, 8)
    rng = np.random.default_rng(0)
    for x in rng.dirichlet(np.ones(3), 50):
        np.testing.assert_allclose(tab.payoff(x), g.payoff(x), atol=1e-9)
    with pytest.raises(ValueError):
        TableGame(4, np.zeros((3, 3)))


def test_game_dict_roundtrip():
    g = AffineCongestionGame()
    g2 = game_from_dict(g.to_dict())
    np.testing.assert_array_equal(g2.affine()[0], g.affine()[0])
    a = AffineGame([[-1, 0], [0, -1]], [0, 1])
    np.testing.assert_array_equal(game_from_dict(a.to_dict()).payoff([0.5, 0.5]), [-0.5, 0.5])
    with pytest.raises(ValueError):
        game_from_dict({"kind": "potential"})
