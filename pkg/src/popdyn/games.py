"""Memoryless payoff mechanisms, contractivity certificates and a Nash oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import as_state, payoff_gap

FD_STEP = 1e-6


class Game:
    """Memoryless payoff map ``F`` on the simplex.

    Subclasses implement :meth:`payoff`; :meth:`jacobian` falls back to
    central differences, which needs ``x`` at least ``FD_STEP`` inside the
    simplex when the payoff is only defined there.
    """

    n: int
    name = "game"

    def payoff(self, x) -> np.ndarray:
        raise NotImplementedError

    def payoffs(self, X) -> np.ndarray:
        return np.array([self.payoff(x) for x in np.asarray(X, dtype=float)])

    def jacobian(self, x) -> np.ndarray:
        return fd_jacobian(self.payoff, x)

    def affine(self) -> tuple[np.ndarray, np.ndarray] | None:
        """``(A, b)`` with ``F(x) = A x + b`` when the game is affine, else ``None``."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


def fd_jacobian(payoff: Callable, x, step: float = FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        J[:, j] = (np.asarray(payoff(x + e)) - np.asarray(payoff(x - e))) / (2 * step)
    if not np.all(np.isfinite(J)):
        raise FloatingPointError("non-finite Jacobian entries")
    return J


def game_jacobian(game: Game, x) -> np.ndarray:
    return game.jacobian(x)


class AffineGame(Game):
    """``F(x) = A x + b``; covers matrix games (``b = 0``)."""

    name = "affine"

    def __init__(self, A, b=None):
        A = np.array(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        self.A = A
        self.b = np.zeros(A.shape[0]) if b is None else np.array(b, dtype=float)
        if self.b.shape != (A.shape[0],):
            raise ValueError("b has the wrong length")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(self.b))):
            raise ValueError("non-finite game coefficients")
        self.n = A.shape[0]

    def payoff(self, x):
        return self.A @ np.asarray(x, dtype=float) + self.b

    def payoffs(self, X):
        return np.asarray(X, dtype=float) @ self.A.T + self.b

    def jacobian(self, x):
        return self.A.copy()

    def affine(self):
        return self.A, self.b

    def to_dict(self):
        return {"kind": "affine", "A": self.A.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True)
class Latency:
    """Affine latency ``slope * z + intercept``."""

    slope: float
    intercept: float

    def __call__(self, z):
        return self.slope * z + self.intercept


class AffineCongestionGame(AffineGame):
    """Three commuting strategies sharing roads: car on the main road, bus on
    the main road then walking, car on the alternate road.

    Buses load the main road at the reduced rate ``bus_factor``; payoffs are
    negated total latencies.
    """

    name = "congestion"

    def __init__(self, g1=(10.0, 20.0), g2=(30.0, 15.0), r=(30.0, 10.0),
                 bus_factor=1 / 20, walk_cost=35.0):
        self.g1, self.g2, self.r = (Latency(*map(float, v)) for v in (g1, g2, r))
        self.bus_factor = float(bus_factor)
        self.walk_cost = float(walk_cost)
        if min(self.g1.slope, self.g2.slope, self.r.slope) < 0:
            raise ValueError("latency slopes must be nonnegative")
        if not 0 < self.bus_factor < 1:
            raise ValueError("bus_factor must lie in (0, 1)")
        if not self.walk_cost > 0:
            raise ValueError("walk_cost must be positive")
        a, g1, g2, r = self.bus_factor, self.g1.slope, self.g2.slope, self.r.slope
        A = -np.array([[g1 + r, a * g1, r],
                       [g1, a * g1, 0.0],
                       [r, 0.0, g2 + r]])
        b = -np.array([self.g1.intercept + self.r.intercept,
                       self.g1.intercept + self.walk_cost,
                       self.g2.intercept + self.r.intercept])
        super().__init__(A, b)

    def payoff(self, x):
        x1, x2, x3 = np.asarray(x, dtype=float)
        main = self.g1(x1 + self.bus_factor * x2)
        down = self.r(x1 + x3)
        return -np.array([main + down, main + self.walk_cost, self.g2(x3) + down])

    def exact_condition(self) -> tuple[bool, float, float]:
        """Affine form of the slope inequality that implies contractivity.

        Returns ``(holds, lhs, rhs)`` for
        ``4 r' (g2' + g1') >= ((1 - bus_factor) g1')**2``.
        """
        lhs = 4 * self.r.slope * (self.g2.slope + self.g1.slope)
        rhs = ((1 - self.bus_factor) * self.g1.slope) ** 2
        return lhs >= rhs, lhs, rhs

    def sufficient_condition(self) -> tuple[bool, float, float]:
        """Cruder sufficient condition ``4 r' >= g1'``; returns ``(holds, lhs, rhs)``."""
        lhs = 4 * self.r.slope
        rhs = self.g1.slope
        return lhs >= rhs, lhs, rhs

    def to_dict(self):
        return {"kind": "congestion",
                "g1": [self.g1.slope, self.g1.intercept],
                "g2": [self.g2.slope, self.g2.intercept],
                "r": [self.r.slope, self.r.intercept],
                "bus_factor": self.bus_factor, "walk_cost": self.walk_cost}


class TableGame(Game):
    """Payoffs tabulated on the barycentric lattice ``{k / r}``.

    Between lattice points the payoff is interpolated piecewise linearly on
    the Freudenthal (Kuhn) triangulation, which is Lipschitz by construction.
    ``values[i]`` is the payoff at ``simplex_grid(n, r)[i]``.
    """

    name = "table"

    def __init__(self, resolution: int, values):
        values = np.asarray(values, dtype=float)
        self.r = int(resolution)
        self.n = values.shape[1]
        grid_counts = lattice_counts(self.n, self.r)
        if values.shape[0] != grid_counts.shape[0]:
            raise ValueError(f"table needs {grid_counts.shape[0]} rows, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite table payoffs")
        self.values = values
        # lattice index keyed by cumulative counts (L_1, ..., L_{n-1})
        cum = np.cumsum(grid_counts, axis=1)[:, :-1]
        self._index = {tuple(c): i for i, c in enumerate(cum.tolist())}

    @classmethod
    def from_function(cls, fn: Callable, n: int, resolution: int) -> "TableGame":
        grid = simplex_grid(n, resolution)
        return cls(resolution, np.array([fn(x) for x in grid]))

    def payoff(self, x):
        x = np.asarray(x, dtype=float)
        r = self.r
        c = np.clip(np.cumsum(x)[:-1] * r, 0.0, r)
        c = np.maximum.accumulate(c)
        base = np.minimum(np.floor(c), r - 1).astype(int)
        frac = c - base
        m = c.shape[0]
        order = sorted(range(m), key=lambda i: (-frac[i], -i))
        vertex = base.copy()
        out = (1.0 - frac[order[0]]) * self.values[self._index[tuple(vertex)]]
        for k, i in enumerate(order):
            vertex[i] += 1
            wk = frac[i] - (frac[order[k + 1]] if k + 1 < m else 0.0)
            if wk > 0:
                out = out + wk * self.values[self._index[tuple(vertex)]]
        return out

    def to_dict(self):
        return {"kind": "table", "resolution": self.r, "values": self.values.tolist()}


class CallableGame(Game):
    """Black-box game around a Python callable."""

    name = "callable"

    def __init__(self, fn: Callable, n: int, jac: Callable | None = None):
        self.fn, self.n, self.jac = fn, int(n), jac

    def payoff(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def jacobian(self, x):
        return np.asarray(self.jac(x), dtype=float) if self.jac else fd_jacobian(self.payoff, x)

    def to_dict(self):
        return {"kind": "callable", "n": self.n}


def game_from_dict(d: dict) -> Game:
    kind = d.get("kind")
    if kind == "congestion":
        kw = {k: d[k] for k in ("g1", "g2", "r", "bus_factor", "walk_cost") if k in d}
        return AffineCongestionGame(**kw)
    if kind == "affine":
        return AffineGame(d["A"], d.get("b"))
    if kind == "table":
        return TableGame(d["resolution"], d["values"])
    raise ValueError(f"unknown game kind {kind!r}")


# ------------------------------------------------------------------ grids --

def lattice_counts(n: int, r: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``n`` summing to ``r``.

    Rows are in lexicographic order of the leading coordinates.
    """
    if n < 1 or r < 0:
        raise ValueError("need n >= 1 and r >= 0")
    if n == 1:
        return np.array([[r]])
    rows = []
    for first in range(r + 1):
        rest = lattice_counts(n - 1, r - first)
        rows.append(np.column_stack([np.full(rest.shape[0], first), rest]))
    return np.vstack(rows)


def simplex_grid(n: int, r: int) -> np.ndarray:
    return lattice_counts(n, r) / r


def interior_grid(n: int, r: int, shrink: float = 1e-3) -> np.ndarray:
    return (1 - shrink) * simplex_grid(n, r) + shrink / n


# -------------------------------------------------------- contractivity ----

def difference_matrix(n: int) -> np.ndarray:
    """``(n-1) x n`` matrix with rows ``e_i - e_{i+1}`` spanning the tangent space."""
    W = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    W[idx, idx] = 1.0
    W[idx, idx + 1] = -1.0
    return W


def _max_sym_eig(S: np.ndarray) -> float:
    if S.shape == (2, 2):
        a, b, d = S[0, 0], S[0, 1], S[1, 1]
        return 0.5 * (a + d) + np.hypot(0.5 * (a - d), b)
    if S.shape == (1, 1):
        return float(S[0, 0])
    return float(np.linalg.eigvalsh(S)[-1])


@dataclass
class ContractivityReport:
    resolution: int
    max_eigenvalue: float
    argmax_state: list[float]
    contractive: bool
    exact_condition: dict | None = None
    sufficient_condition: dict | None = None
    tol: float = 1e-10

    def to_dict(self) -> dict:
        return {"resolution": self.resolution, "max_eigenvalue": self.max_eigenvalue,
                "argmax_state": self.argmax_state, "contractive": self.contractive,
                "tol": self.tol, "exact_condition": self.exact_condition,
                "sufficient_condition": self.sufficient_condition}

    def summary(self) -> str:
        s = f"contractive: {'yes' if self.contractive else 'no'} (max eig {self.max_eigenvalue:.3g})"
        if self.sufficient_condition is not None:
            c = self.sufficient_condition
            s += (f", sufficient condition 4 r' >= g1' {'satisfied' if c['holds'] else 'violated'}"
                  f" ({c['lhs']:g} {'>=' if c['holds'] else '<'} {c['rhs']:g})")
        return s


def contractivity_check(game: Game, resolution: int = 100, tol: float = 1e-10) -> ContractivityReport:
    """Largest eigenvalue of ``W (DF' + DF) W'`` over a lattice of the simplex."""
    n = game.n
    W = difference_matrix(n)
    aff = game.affine()
    if aff is not None:
        grid = simplex_grid(n, resolution)
    else:
        grid = interior_grid(n, resolution)
    worst, arg = -np.inf, grid[0]
    const = None
    for x in grid:
        if aff is not None:
            if const is None:
                J = aff[0]
                const = _max_sym_eig(W @ (J + J.T) @ W.T)
            lam = const
        else:
            J = game.jacobian(x)
            lam = _max_sym_eig(W @ (J + J.T) @ W.T)
        if lam > worst:
            worst, arg = lam, x
    rep = ContractivityReport(resolution, float(worst), [float(v) for v in arg], worst <= tol, tol=tol)
    if isinstance(game, AffineCongestionGame):
        for name, fn in (("exact_condition", game.exact_condition), ("sufficient_condition", game.sufficient_condition)):
            holds, lhs, rhs = fn()
            setattr(rep, name, {"holds": bool(holds), "lhs": lhs, "rhs": rhs})
    return rep


# ---------------------------------------------------------------- Nash -----

@dataclass
class NashSet:
    points: np.ndarray
    gaps: np.ndarray
    tol: float
    resolution: int
    candidates: int = 0

    def __len__(self):
        return self.points.shape[0]

    def to_dict(self) -> dict:
        return {"resolution": self.resolution, "tol_ne": self.tol,
                "candidates": self.candidates,
                "equilibria": [{"x": p.tolist(), "gap": float(g)}
                               for p, g in zip(self.points, self.gaps)]}


def _gap(game: Game, X) -> np.ndarray:
    X = np.atleast_2d(X)
    return payoff_gap(X, game.payoffs(X))


def _refine(game: Game, x, step: float, tol: float, max_iter: int = 2000):
    """Shrinking-pattern search on the payoff gap around ``x``.

    Probes offsets ``step * sum_k a_k (e_k - e_n)`` with ``a_k in {-2..2}``,
    moves to the best feasible probe, and halves ``step`` when no probe
    improves. The lattice directions keep faces of the simplex reachable.
    """
    n = x.shape[0]
    D = np.zeros((n - 1, n))
    D[np.arange(n - 1), np.arange(n - 1)] = 1.0
    D[:, -1] = -1.0
    offs = lattice_offsets(n - 1, 2) @ D
    g = _gap(game, x)[0]
    for _ in range(max_iter):
        if g < 0.1 * tol or step < 1e-15:
            break
        probes = x + step * offs
        probes = probes[probes.min(axis=1) >= -1e-15]
        probes = np.maximum(probes, 0.0)
        probes /= probes.sum(axis=1, keepdims=True)
        gp = _gap(game, probes)
        k = int(np.argmin(gp))
        if gp[k] < g:
            x, g = probes[k], gp[k]
        else:
            step *= 0.5
    return x, g


def lattice_offsets(dim: int, radius: int) -> np.ndarray:
    axes = [np.arange(-radius, radius + 1)] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim).astype(float)


def nash_oracle(game: Game, resolution: int = 50, tol_ne: float = 1e-6,
                coarse_tol: float | None = None, merge_dist: float = 1e-3) -> NashSet:
    """Approximate Nash equilibria by lattice search on the payoff gap.

    Lattice points that are local minima of ``gap(x) = max F(x) - F(x)'x``
    and lie below ``coarse_tol`` are refined with :func:`_refine` until the
    gap is under ``tol_ne``; results closer than ``merge_dist`` (l1) merge.
    ``coarse_tol`` defaults to twice the largest gap difference between
    lattice neighbours, which bounds the gap at the lattice point nearest to
    any equilibrium.
    """
    if resolution < 2:
        raise ValueError("resolution too small")
    n = game.n
    counts = lattice_counts(n, resolution)
    grid = counts / resolution
    gaps = _gap(game, grid)
    index = {tuple(c): i for i, c in enumerate(counts.tolist())}
    local_min = np.ones(len(grid), dtype=bool)
    max_diff = 0.0
    for i, c in enumerate(counts.tolist()):
        for a in range(n):
            if c[a] == 0:
                continue
            for b in range(n):
                if b == a:
                    continue
                nb = list(c)
                nb[a] -= 1
                nb[b] += 1
                j = index[tuple(nb)]
                max_diff = max(max_diff, abs(gaps[j] - gaps[i]))
                if gaps[j] < gaps[i] - 1e-15:
                    local_min[i] = False
    if coarse_tol is None:
        coarse_tol = 2.0 * max_diff + tol_ne
    cand = np.flatnonzero(local_min & (gaps <= coarse_tol))
    pts, gs = [], []
    for i in cand:
        x, g = grid[i], gaps[i]
        if g >= tol_ne:
            x, g = _refine(game, x.copy(), 1.0 / resolution, tol_ne)
        if g < tol_ne:
            pts.append(x)
            gs.append(g)
    keep_p, keep_g = [], []
    for k in np.argsort(gs, kind="stable") if gs else []:
        if all(np.abs(pts[k] - q).sum() > merge_dist for q in keep_p):
            keep_p.append(pts[k])
            keep_g.append(gs[k])
    P = np.array(keep_p) if keep_p else np.empty((0, n))
    return NashSet(P, np.array(keep_g), tol_ne, resolution, int(cand.size))


def payoff_projection_field(game: Game, grid) -> tuple[np.ndarray, np.ndarray]:
    """Payoffs projected onto the simplex tangent space, ``(I - 11'/n) F(x)``.

    ``grid`` is an array of states or an integer resolution (interior
    lattice points are used then). Returns ``(states, projected)``.
    """
    if np.isscalar(grid):
        r = int(grid)
        counts = lattice_counts(game.n, r)
        grid = counts[(counts > 0).all(axis=1)] / r
    X = np.atleast_2d(np.asarray(grid, dtype=float))
    for x in X:
        as_state(x, game.n, tol=1e-9)
    Fx = game.payoffs(X)
    return X, Fx - Fx.mean(axis=1, keepdims=True)
