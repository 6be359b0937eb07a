"""Mean dynamics of a learning rule and the fixed-step closed-loop integrator."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import EPS_TIE, SimplexError, as_payoff, as_state, project_simplex
from .rules import LearningRule, eval_rule, pack_rule, rate_matrix, rule_to_dict

METHODS = {"euler": kernels.METHOD_EULER, "rk4": kernels.METHOD_RK4}
TIE_MODES = {"uniform": kernels.TIE_UNIFORM, "sliding": kernels.TIE_SLIDING}


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration settings.

    ``smoothing`` replaces best response by logit choice with that ``beta``.
    ``tie_mode`` picks the best-response selection on payoff ties (see
    :mod:`popdyn.kernels`); ``kappa`` is the restoring rate of the sliding
    selection and defaults to ``0.5 / h``.
    """

    h: float = 1e-3
    horizon: float = 10.0
    method: str = "rk4"
    eps_tie: float = EPS_TIE
    smoothing: float | None = None
    tie_mode: str = "sliding"
    kappa: float | None = None

    def __post_init__(self):
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ValueError("step h must be positive")
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ValueError("horizon must be positive")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {sorted(METHODS)}")
        if self.tie_mode not in TIE_MODES:
            raise ValueError(f"tie_mode must be one of {sorted(TIE_MODES)}")
        if self.eps_tie < 0:
            raise ValueError("eps_tie must be nonnegative")
        if self.smoothing is not None and not self.smoothing > 0:
            raise ValueError("smoothing beta must be positive")
        if self.kappa is not None and self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        steps = self.horizon / self.h
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ValueError("horizon must be a whole number of steps")

    @property
    def nsteps(self) -> int:
        return int(round(self.horizon / self.h))

    @property
    def restoring_rate(self) -> float:
        return 0.5 / self.h if self.kappa is None else float(self.kappa)

    def to_dict(self) -> dict:
        return {"h": self.h, "horizon": self.horizon, "method": self.method,
                "eps_tie": self.eps_tie, "smoothing": self.smoothing,
                "tie_mode": self.tie_mode, "kappa": self.kappa}


@dataclass
class Trajectory:
    """Samples ``(t, x, p, V)`` on a uniform time grid; arrays are ``(N, n)``."""

    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    V: np.ndarray
    h: float
    metadata: dict = field(default_factory=dict)
    max_drift: float = 0.0

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def __len__(self):
        return self.t.shape[0]

    def to_csv(self) -> str:
        n = self.n
        cols = ([f"x{i}" for i in range(1, n + 1)] + [f"p{i}" for i in range(1, n + 1)]
                + [f"V{i}" for i in range(1, n + 1)])
        buf = io.StringIO()
        np.savetxt(buf, np.column_stack([self.t, self.x, self.p, self.V]), fmt="%.17g",
                   delimiter=",", header=",".join(["t"] + cols), comments="", newline="\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())


def flow(T: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Net flow ``V_i = sum_j x_j T_ji - x_i sum_j T_ij``; batched over leading axes."""
    inflow = np.einsum("...j,...ji->...i", x, T)
    return inflow - x * T.sum(axis=-1)


def edm_field(rule: LearningRule, x, p, eps_tie: float = EPS_TIE) -> np.ndarray:
    """Mean-dynamics flow of ``rule`` at ``(x, p)`` using the uniform tie selection."""
    p = as_payoff(p)
    x = as_state(x, p.shape[0], tol=1e-9)
    return flow(eval_rule(rule, x, p, eps_tie), x)


def edm_fields(rule: LearningRule, X, P, eps_tie: float = EPS_TIE) -> np.ndarray:
    """Batched, unvalidated :func:`edm_field`."""
    X = np.asarray(X, dtype=float)
    return flow(rate_matrix(rule, X, P, eps_tie), X)


def _game_args(game):
    aff = game.affine() if hasattr(game, "affine") else None
    return dict(affine=aff, payoff=game.payoff, jacobian=game.jacobian)


def simulate(game, rule: LearningRule, x0, cfg: IntegratorConfig | None = None,
             use_numba: bool | None = None, seed: int | None = None) -> Trajectory:
    """Integrate ``x' = V(x, F(x))`` from ``x0`` with fixed steps.

    Every step is followed by a projection onto the simplex; drift larger
    than the projection radius raises :class:`SimplexError`. Affine games
    run in the compiled kernel unless numba is disabled.
    """
    cfg = cfg or IntegratorConfig()
    n = game.n
    x0 = project_simplex(as_state(x0, n, tol=1e-9))
    pk = pack_rule(rule, n, beta=cfg.smoothing or 0.0)
    args = (cfg.h, pk, cfg.eps_tie, TIE_MODES[cfg.tie_mode], cfg.restoring_rate)
    ga = _game_args(game)
    p0 = np.asarray(game.payoff(x0), dtype=float)
    if p0.shape != (n,):
        raise ValueError(f"game returned payoff of shape {p0.shape}, expected ({n},)")
    X, drift, status = kernels.integrate(x0, cfg.h, cfg.nsteps, METHODS[cfg.method], pk,
                                         cfg.eps_tie, TIE_MODES[cfg.tie_mode],
                                         cfg.restoring_rate, use_numba=use_numba, **ga)
    if status == kernels.STATUS_NONFINITE:
        raise FloatingPointError(f"non-finite state after {X.shape[0] - 1} steps")
    if status == kernels.STATUS_BLOWUP:
        raise SimplexError(f"integrator left the simplex after {X.shape[0] - 1} steps")
    P = game.payoffs(X)
    if not np.all(np.isfinite(P)):
        raise FloatingPointError("game returned non-finite payoffs")
    V = kernels.sample_fields(X, *args, use_numba=use_numba, **ga)
    t = cfg.h * np.arange(X.shape[0])
    meta = {"rule": rule_to_dict(rule), "game": getattr(game, "name", type(game).__name__),
            "seed": seed, "integrator": cfg.to_dict()}
    return Trajectory(t, X, P, V, cfg.h, meta, float(drift))


def convergence_time(traj: Trajectory, tol: float = 1e-3) -> float | None:
    """First sample time with ``||x(t) - x(T)||_1 < tol`` (``None`` if none)."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    d = np.abs(traj.x - traj.x[-1]).sum(axis=1)
    hit = np.flatnonzero(d < tol)
    return float(traj.t[hit[0]]) if hit.size else None


def time_derivative(Y, h: float, order: int = 2) -> np.ndarray:
    """Finite-difference derivative along axis 0 of uniformly sampled ``Y``.

    ``order=2``: central differences inside, second-order one-sided at the
    ends. ``order=4``: five-point stencils, one-sided near the ends.
    """
    Y = np.asarray(Y, dtype=float)
    N = Y.shape[0]
    if order == 2:
        if N < 3:
            raise ValueError("need at least 3 samples")
        return np.gradient(Y, h, axis=0, edge_order=2)
    if order != 4:
        raise ValueError("order must be 2 or 4")
    if N < 5:
        raise ValueError("need at least 5 samples for order 4")
    D = np.empty_like(Y)
    D[2:-2] = (Y[:-4] - 8 * Y[1:-3] + 8 * Y[3:-1] - Y[4:]) / (12 * h)
    D[0] = (-25 * Y[0] + 48 * Y[1] - 36 * Y[2] + 16 * Y[3] - 3 * Y[4]) / (12 * h)
    D[1] = (-3 * Y[0] - 10 * Y[1] + 18 * Y[2] - 6 * Y[3] + Y[4]) / (12 * h)
    D[-1] = -(-25 * Y[-1] + 48 * Y[-2] - 36 * Y[-3] + 16 * Y[-4] - 3 * Y[-5]) / (12 * h)
    D[-2] = -(-3 * Y[-1] - 10 * Y[-2] + 18 * Y[-3] - 6 * Y[-4] + Y[-5]) / (12 * h)
    return D


def derivative_estimates(traj: Trajectory, order: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """``(x_dot, p_dot)`` per sample from the stored states and payoffs."""
    return time_derivative(traj.x, traj.h, order), time_derivative(traj.p, traj.h, order)
