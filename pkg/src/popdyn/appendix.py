"""Brute-force oracles for the SEPT + Smith passivity argument.

The argument bounds ``J(x, p) = h(p)' V_SEPT(x, p)`` (twice the Smith
storage gradient along SEPT flow, unit Smith gain) by the value of a small
linear program over the simplex, certified through KKT multipliers built
from the quotients ``(h_k - h_i) / (p_i - p_k)``. Everything here can be
checked exhaustively at desk scale; vectorised ``*_batch`` helpers serve
the sampling batteries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .passivity import (StorageSpec, _ipc_potentials, _sept_rates, grad_x_storage, ipc_flow,
                        sept_flow)
from .rules import IPC, SEPT, RateShape, smith

AGREE_TOL = 1e-9
KKT_TOL = 1e-8


class OracleError(AssertionError):
    """Two independent evaluations of the same quantity disagree."""


def _agree(a, b, tol=AGREE_TOL):
    return np.abs(a - b) <= tol * (1.0 + np.maximum(np.abs(a), np.abs(b)))


def h_vector(p) -> np.ndarray:
    """``h_k = sum_j max(0, p_j - p_k)**2``; batched over leading axes."""
    p = np.asarray(p, dtype=float)
    d = np.maximum(p[..., None, :] - p[..., :, None], 0.0)
    return np.sum(d * d, axis=-1)


@dataclass(frozen=True)
class OrderedPayoffContext:
    """Payoffs relabelled in ascending order (stable, so ties keep index order).

    ``k`` is the first sorted position whose payoff reaches the average
    ``p'x``; ``upper``/``lower`` hold sorted positions strictly above/below
    ``p_sorted[k]``. All indices are 0-based.
    """

    perm: np.ndarray
    p_sorted: np.ndarray
    x_sorted: np.ndarray
    k: int
    upper: np.ndarray
    lower: np.ndarray

    @property
    def k_original(self) -> int:
        return int(self.perm[self.k])


def _threshold(ps, avg):
    slack = 1e-12 * (1.0 + np.abs(avg))
    return np.argmax(ps >= (avg - slack)[..., None], axis=-1)


def ordered_context(x, p) -> OrderedPayoffContext:
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    perm = np.argsort(p, kind="stable")
    ps, xs = p[perm], x[perm]
    k = int(_threshold(ps, np.dot(x, p)))
    pk = ps[k]
    return OrderedPayoffContext(perm, ps, xs, k, np.flatnonzero(ps > pk), np.flatnonzero(ps < pk))


def J_value(x, p, phi=None) -> float:
    """``h(p)' (phi([p_hat]_+) - 1'phi([p_hat]_+) x)``, checked against
    ``2 (dS_Smith/dx) V_SEPT`` with unit Smith gain.

    ``phi`` is the SEPT shape and defaults to BNN with unit gain.
    """
    h_form, def_form = J_batch(np.asarray(x, dtype=float)[None], np.asarray(p, dtype=float)[None],
                               phi)
    if not _agree(h_form, def_form).all():
        raise OracleError(f"J forms disagree: {h_form[0]} vs {def_form[0]}")
    return float(h_form[0])


def J_batch(X, P, phi=None) -> tuple[np.ndarray, np.ndarray]:
    """Both forms of ``J`` for stacked samples: ``(h_form, definitional_form)``."""
    phi = RateShape() if phi is None else phi
    r = _sept_rates(phi, X, P)
    h_form = np.sum(h_vector(P) * (r - r.sum(axis=-1, keepdims=True) * X), axis=-1)
    grad = grad_x_storage(StorageSpec(w_ipc=1.0, ipc=smith(1.0)), X, P)
    def_form = 2.0 * np.sum(grad * sept_flow(phi, X, P), axis=-1)
    return h_form, def_form


# ------------------------------------------------------------- min-max -----

@dataclass
class MinMaxResult:
    lhs: float
    rhs: float
    holds: bool
    vacuous: bool
    closed_lhs: float
    closed_rhs: float


def _quotients(ps, pk) -> np.ndarray:
    """``(h_k - h_i) / (p_i - p_k)`` for every ``i``, expanded term by term.

    With ``lo, hi`` the smaller and larger of ``p_i, p_k``, strategy ``j``
    contributes ``2 p_j - p_i - p_k`` if ``p_j >= hi`` and
    ``(p_j - lo)**2 / (hi - lo)`` if ``lo < p_j < hi``. Subtracting the ``h``
    values directly cancels catastrophically when ``p_i`` nearly ties ``p_k``.
    Entries with ``p_i == p_k`` are returned as 0 and must be masked.
    """
    pi = ps[:, :, None]
    pj = ps[:, None, :]
    pkk = pk[:, None, None]
    lo, hi = np.minimum(pi, pkk), np.maximum(pi, pkk)
    gap = np.where(hi > lo, hi - lo, 1.0)
    with np.errstate(over="ignore"):      # overflow only in discarded branches
        term = np.where(pj >= hi, 2 * pj - pi - pkk,
                        np.where(pj > lo, (pj - lo) ** 2 / gap, 0.0))
    return np.where(hi > lo, term, 0.0).sum(axis=-1)


def minmax_batch(X, P) -> dict[str, np.ndarray]:
    """Direct and closed-form sides of the quotient inequality for stacked samples.

    Returns arrays ``lhs``, ``rhs``, ``closed_lhs``, ``closed_rhs`` (``-inf``
    / ``+inf`` where the index set is empty) and the boolean ``vacuous``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    N, n = P.shape
    rows = np.arange(N)
    perm = np.argsort(P, axis=1, kind="stable")
    ps = np.take_along_axis(P, perm, axis=1)
    avg = np.sum(X * P, axis=1)
    k = _threshold(ps, avg)
    pk = ps[rows, k]
    up = ps > pk[:, None]
    lo = ps < pk[:, None]
    q = _quotients(ps, pk)
    lhs = np.where(up, q, -np.inf).max(axis=1)
    rhs = np.where(lo, q, np.inf).min(axis=1)
    # closed forms: the extremes sit at k-1 (below) and at the first index above k
    idx = np.arange(n)[None, :]
    km1 = np.maximum(k - 1, 0)
    pkm1 = ps[rows, km1]
    closed_rhs = np.where(idx >= k[:, None], 2 * ps - pkm1[:, None] - pk[:, None], 0.0).sum(axis=1)
    kbar = np.argmax(up, axis=1)
    pkb = ps[rows, kbar]
    closed_lhs = np.where(idx >= kbar[:, None], 2 * ps - pkb[:, None] - pk[:, None], 0.0).sum(axis=1)
    has_up, has_lo = up.any(axis=1), lo.any(axis=1)
    closed_lhs = np.where(has_up, closed_lhs, -np.inf)
    closed_rhs = np.where(has_lo, closed_rhs, np.inf)
    return {"lhs": lhs, "rhs": rhs, "closed_lhs": closed_lhs, "closed_rhs": closed_rhs,
            "vacuous": ~(has_up & has_lo), "has_upper": has_up, "has_lower": has_lo}


def minmax_check(x, p) -> MinMaxResult:
    """Evaluate both sides directly and via the closed forms, which must agree."""
    r = minmax_batch(np.asarray(x, dtype=float)[None], np.asarray(p, dtype=float)[None])
    lhs, rhs = float(r["lhs"][0]), float(r["rhs"][0])
    cl, cr = float(r["closed_lhs"][0]), float(r["closed_rhs"][0])
    if r["has_upper"][0] and not _agree(lhs, cl):
        raise OracleError(f"max side: direct {lhs} vs closed form {cl}")
    if r["has_lower"][0] and not _agree(rhs, cr):
        raise OracleError(f"min side: direct {rhs} vs closed form {cr}")
    vac = bool(r["vacuous"][0])
    return MinMaxResult(lhs, rhs, vac or lhs <= rhs, vac, cl, cr)


# ------------------------------------------------------- LP certificate -----

@dataclass
class LPCertificate:
    z: np.ndarray                 # candidate optimum, original labelling
    theta: float
    mu: float
    gamma: np.ndarray             # original labelling
    objective: float
    residuals: dict
    enumeration_optimum: float
    enumeration_argmin: np.ndarray
    n_candidates: int

    @property
    def kkt_ok(self) -> bool:
        return max(self.residuals.values()) < KKT_TOL

    @property
    def enumeration_agrees(self) -> bool:
        return bool(_agree(self.enumeration_optimum, self.objective, KKT_TOL))

    @property
    def ok(self) -> bool:
        return self.kkt_ok and self.enumeration_agrees


def lp_vertices(p, bound: float) -> np.ndarray:
    """Vertices of ``{z in simplex : p'z <= bound}``.

    Simplex vertices inside the halfspace plus the points where the
    hyperplane ``p'z = bound`` cuts an edge ``[e_i, e_j]``.
    """
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    eye = np.eye(n)
    pts = [eye[i] for i in range(n) if p[i] <= bound]
    for i in range(n):
        for j in range(n):
            if p[i] < bound < p[j]:
                t = (p[j] - bound) / (p[j] - p[i])
                pts.append(t * eye[i] + (1 - t) * eye[j])
    return np.array(pts)


def lp_certificate(x, p) -> LPCertificate:
    """KKT certificate for ``min h'z s.t. z in simplex, p'z <= p_k``, checked by enumeration.

    Raises :class:`OracleError` if the multipliers fail the KKT conditions
    or enumeration finds a strictly better vertex.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.ptp(p) == 0:
        raise ValueError("payoffs must not all be equal")
    ctx = ordered_context(x, p)
    ps, k = ctx.p_sorted, ctx.k
    hs = h_vector(ps)
    if ctx.upper.size:
        theta = float(np.max((hs[k] - hs[ctx.upper]) / (ps[ctx.upper] - ps[k])))
    else:
        theta = 0.0
    mu = -hs[k] - theta * ps[k]
    gamma = np.where(ps == ps[k], 0.0, hs + theta * ps + mu)
    z = np.zeros_like(ps)
    z[k] = 1.0
    stat = hs - gamma + theta * ps + mu
    res = {"stationarity": float(np.abs(stat).max()),
           "dual_feasibility": float(max(0.0, -theta, -gamma.min())),
           "primal_feasibility": float(max(0.0, ps @ z - ps[k], np.abs(z.sum() - 1), -z.min())),
           "complementarity": float(max(abs(gamma @ z), abs(theta * (ps @ z - ps[k]))))}
    V = lp_vertices(ps, ps[k])
    vals = V @ hs
    j = int(np.argmin(vals))
    inv = np.empty_like(ctx.perm)
    inv[ctx.perm] = np.arange(p.shape[0])
    cert = LPCertificate(z[inv], theta, float(mu), gamma[inv], float(hs[k]), res,
                         float(vals[j]), V[j][inv], int(V.shape[0]))
    if not cert.kkt_ok:
        raise OracleError(f"KKT residuals too large: {res}")
    if cert.enumeration_optimum < cert.objective - KKT_TOL * (1 + abs(cert.objective)):
        raise OracleError(f"enumeration beats the certificate: {cert.enumeration_optimum} "
                          f"< {cert.objective}")
    return cert


# --------------------------------------------------------- cross terms -----

def cross_term_batch(ipc: IPC, sept_phi, X, P) -> np.ndarray:
    """``H = (dS_SEPT/dx) V_IPC + (dS_IPC/dx) V_SEPT`` for stacked samples."""
    g_sept = grad_x_storage(StorageSpec(w_sept=1.0, sept=SEPT(sept_phi)), X, P)
    g_ipc = _ipc_potentials(ipc.phi, P)
    return (np.sum(g_sept * ipc_flow(ipc, X, P), axis=-1)
            + np.sum(g_ipc * sept_flow(sept_phi, X, P), axis=-1))


def sept_ipc_identity_residual(ipc: IPC, sept_phi, X, P) -> np.ndarray:
    """``|(dS_SEPT/dx) V_IPC - (-sum phi([p_hat]_+)) p'V_IPC|``.

    The left side goes through the chain rule with the explicit Jacobian
    ``d p_hat / dx = -1 p'``, independent of :func:`grad_x_storage`.
    """
    X = np.asarray(X, dtype=float)
    P = np.asarray(P, dtype=float)
    r = _sept_rates(sept_phi, X, P)
    Vi = ipc_flow(ipc, X, P)
    jac = -np.ones(P.shape + (1,)) * P[..., None, :]            # d p_hat_j / d x_i
    lhs = np.einsum("...j,...ji,...i->...", r, jac, Vi)
    rhs = -r.sum(axis=-1) * np.sum(P * Vi, axis=-1)
    return np.abs(lhs - rhs)


@dataclass
class CrossTermResult:
    worst: float
    n_samples: int
    n: int
    passed: bool | None


def n2_cross_term_check(ipc_phi=None, sept_phi=None, samples: int = 100_000, n: int = 2,
                        seed: int = 0, bound: float = 1e-10) -> CrossTermResult:
    """Largest cross term ``H`` over random ``(x, p)``.

    Only ``n = 2`` carries a verdict; other sizes report the value alone.
    """
    rng = np.random.default_rng(seed)
    X = rng.dirichlet(np.ones(n), size=samples)
    P = rng.standard_normal((samples, n))
    ipc = IPC(RateShape() if ipc_phi is None else ipc_phi)
    H = cross_term_batch(ipc, RateShape() if sept_phi is None else sept_phi, X, P)
    worst = float(H.max())
    return CrossTermResult(worst, samples, n, (worst <= bound) if n == 2 else None)

