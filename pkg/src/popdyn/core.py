"""Shared domain types and elementary payoff transforms.

Population states, payoffs, rate matrices and flows are plain float64
numpy arrays; the helpers here validate them at module boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS_NUM = 1e-12
EPS_TIE = 1e-9
PROJECTION_RADIUS = 1e-6


class SimplexError(ValueError):
    """A vector is too far from the probability simplex to be repaired."""


def as_payoff(p, n: int | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"payoff must be a vector, got shape {p.shape}")
    if n is not None and p.shape[0] != n:
        raise ValueError(f"payoff has length {p.shape[0]}, expected {n}")
    if not np.all(np.isfinite(p)):
        raise ValueError("payoff vector has non-finite entries")
    return p


def as_state(x, n: int | None = None, tol: float = EPS_NUM) -> np.ndarray:
    """Check that ``x`` lies in the simplex up to ``tol`` and return it as float64."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] < 2:
        raise ValueError(f"state must be a vector of length >= 2, got shape {x.shape}")
    if n is not None and x.shape[0] != n:
        raise ValueError(f"state has length {x.shape[0]}, expected {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("state has non-finite entries")
    if x.min() < -tol or abs(x.sum() - 1.0) > tol:
        raise SimplexError(f"state {x} is not in the simplex (tol {tol:g})")
    return x


def project_simplex(v, radius: float = PROJECTION_RADIUS) -> np.ndarray:
    """Repair small numerical drift off the simplex.

    Negative entries are clamped to zero and the result is renormalised.
    Vectors more than ``radius`` away (l1) are rejected, since drift of that
    size means the integrator has blown up rather than accumulated roundoff.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise SimplexError("cannot project a non-finite vector")
    clamped = np.maximum(v, 0.0)
    total = clamped.sum()
    if total <= 0.0:
        raise SimplexError(f"cannot project {v}: no positive mass")
    out = clamped / total
    dist = np.abs(v - out).sum()
    if dist > radius:
        raise SimplexError(f"vector {v} is {dist:.3g} (l1) from the simplex, limit {radius:g}")
    return out


def excess_payoff(x, p) -> np.ndarray:
    """Payoffs relative to the population-average payoff ``x'p``.

    Works on single vectors or on batches stacked along the first axis.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if x.shape != p.shape:
        raise ValueError(f"shape mismatch: x {x.shape}, p {p.shape}")
    return p - np.sum(x * p, axis=-1, keepdims=True)


@dataclass(frozen=True)
class BestResponseProfile:
    argmax_set: tuple[int, ...]
    selection: np.ndarray

    @property
    def count(self) -> int:
        return len(self.argmax_set)


def best_response_selection(p, eps_tie: float = EPS_TIE) -> np.ndarray:
    """Uniform distribution over the payoffs within ``eps_tie`` of the maximum.

    Vectorised over leading axes.
    """
    if eps_tie < 0:
        raise ValueError("eps_tie must be nonnegative")
    p = np.asarray(p, dtype=float)
    mask = p >= p.max(axis=-1, keepdims=True) - eps_tie
    return mask / mask.sum(axis=-1, keepdims=True)


def best_response_profile(p, eps_tie: float = EPS_TIE) -> BestResponseProfile:
    p = as_payoff(p)
    y = best_response_selection(p, eps_tie)
    return BestResponseProfile(tuple(int(i) for i in np.flatnonzero(y > 0)), y)


def payoff_gap(x, p) -> np.ndarray:
    """``max(p) - p'x``; zero exactly when ``x`` is a best response to ``p``."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    return p.max(axis=-1) - np.sum(x * p, axis=-1)
