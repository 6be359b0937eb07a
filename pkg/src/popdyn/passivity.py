"""Storage functions, dissipation rates and delta-passivity audits.

For a rule in the cone ``a_BR * BR + a_SEPT * SEPT + a_IPC * IPC`` the
storage is the weighted sum of the component storages and the dissipation
rate uses the squared weights. All evaluators accept batches stacked along
leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import EPS_TIE, best_response_selection, excess_payoff
from .dynamics import Trajectory, derivative_estimates, edm_fields, flow, time_derivative
from .reports import CheckReport
from .rules import (IPC, SEPT, Contrarian, LearningRule, _apply_phis,
                    _integrate_phis, _phi_dict, as_hybrid, rate_matrix, rule_to_dict)

EMPIRICAL = "empirical: no theorem coverage"


@dataclass(frozen=True)
class StorageSpec:
    """Storage certificate of a cone member: weights, parts and quadrature tolerance."""

    w_br: float = 0.0
    w_sept: float = 0.0
    w_ipc: float = 0.0
    sept: SEPT | None = None
    ipc: IPC | None = None
    tau_quad: float = 1e-10

    def __post_init__(self):
        if min(self.w_br, self.w_sept, self.w_ipc) < 0:
            raise ValueError("storage weights must be nonnegative")
        if not self.tau_quad > 0:
            raise ValueError("tau_quad must be positive")
        if self.w_sept > 0 and self.sept is None:
            raise ValueError("SEPT weight without a SEPT part")
        if self.w_ipc > 0 and self.ipc is None:
            raise ValueError("IPC weight without an IPC part")

    @classmethod
    def for_rule(cls, rule: LearningRule, tau_quad: float = 1e-10) -> "StorageSpec":
        h = as_hybrid(rule)
        return cls(h.w_br, h.w_sept, h.w_ipc, h.sept, h.ipc, tau_quad)

    @property
    def kind(self) -> str:
        active = [k for k, w in (("br", self.w_br), ("sept", self.w_sept), ("ipc", self.w_ipc))
                  if w > 0]
        return active[0] if len(active) == 1 else "hybrid"

    def without_br(self) -> "StorageSpec":
        return StorageSpec(0.0, self.w_sept, self.w_ipc, self.sept, self.ipc, self.tau_quad)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "weights": {"br": self.w_br, "sept": self.w_sept,
                                            "ipc": self.w_ipc}, "tau_quad": self.tau_quad}
        if self.sept is not None:
            d["sept_phi"] = _phi_dict(self.sept.phi)
        if self.ipc is not None:
            d["ipc_phi"] = _phi_dict(self.ipc.phi)
        return d


def _with_quad_tol(phi, spec: StorageSpec):
    if spec.tau_quad != 1e-10:
        # quadrature tolerance lives on the shapes; rebuild them if overridden
        from dataclasses import replace
        from .rules import RateShape
        if isinstance(phi, RateShape):
            return replace(phi, quad_tol=spec.tau_quad)
        return tuple(replace(f, quad_tol=spec.tau_quad) for f in phi)
    return phi


# --------------------------------------------------------- components -----

def br_storage(X, P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    return np.maximum(P.max(axis=-1) - np.sum(np.asarray(X) * P, axis=-1), 0.0)


def _ipc_potentials(phi, P) -> np.ndarray:
    """``G_i = sum_j Phi_j(p_j - p_i)``, the x-gradient of the IPC storage."""
    P = np.asarray(P, dtype=float)
    diff = P[..., None, :] - P[..., :, None]
    return _integrate_phis(phi, diff).sum(axis=-1)


def ipc_storage(phi, X, P) -> np.ndarray:
    return np.sum(np.asarray(X) * _ipc_potentials(phi, P), axis=-1)


def _sept_rates(phi, X, P) -> np.ndarray:
    return _apply_phis(phi, np.maximum(excess_payoff(X, P), 0.0))


def sept_storage(phi, X, P) -> np.ndarray:
    return _integrate_phis(phi, np.maximum(excess_payoff(X, P), 0.0)).sum(axis=-1)


def sept_flow(phi, X, P) -> np.ndarray:
    r = _sept_rates(phi, X, P)
    return r - np.asarray(X) * r.sum(axis=-1, keepdims=True)


def ipc_flow(rule: IPC, X, P) -> np.ndarray:
    return flow(rate_matrix(rule, X, P), np.asarray(X, dtype=float))


def br_flow(X, P, eps_tie: float = EPS_TIE) -> np.ndarray:
    return best_response_selection(P, eps_tie) - np.asarray(X)


def ipc_dissipation(rule: IPC, X, P) -> np.ndarray:
    return -np.sum(_ipc_potentials(rule.phi, P) * ipc_flow(rule, X, P), axis=-1)


def sept_dissipation(phi, X, P) -> np.ndarray:
    tot = _sept_rates(phi, X, P).sum(axis=-1)
    return tot * np.sum(np.asarray(P) * sept_flow(phi, X, P), axis=-1)


# -------------------------------------------------------------- public -----

def storage(spec: StorageSpec, x, p) -> np.ndarray | float:
    """``S(x, p)``; scalar for single vectors, array for batches."""
    X, P = np.asarray(x, dtype=float), np.asarray(p, dtype=float)
    S = np.zeros(P.shape[:-1])
    if spec.w_br > 0:
        S = S + spec.w_br * br_storage(X, P)
    if spec.w_sept > 0:
        S = S + spec.w_sept * sept_storage(_with_quad_tol(spec.sept.phi, spec), X, P)
    if spec.w_ipc > 0:
        S = S + spec.w_ipc * ipc_storage(_with_quad_tol(spec.ipc.phi, spec), X, P)
    return S[()] if S.ndim == 0 else S


def dissipation(spec: StorageSpec, x, p, eps_tie: float = EPS_TIE) -> np.ndarray | float:
    """``P(x, p)`` with squared weights; component flows come from the spec's own parts."""
    X, P = np.asarray(x, dtype=float), np.asarray(p, dtype=float)
    D = np.zeros(P.shape[:-1])
    if spec.w_br > 0:
        D = D + spec.w_br ** 2 * br_storage(X, P)
    if spec.w_sept > 0:
        D = D + spec.w_sept ** 2 * sept_dissipation(spec.sept.phi, X, P)
    if spec.w_ipc > 0:
        ipc = IPC(_with_quad_tol(spec.ipc.phi, spec))
        D = D + spec.w_ipc ** 2 * ipc_dissipation(ipc, X, P)
    return D[()] if D.ndim == 0 else D


def grad_x_storage(spec: StorageSpec, x, p) -> np.ndarray:
    """``dS/dx``: ``-p`` for BR, ``G`` for IPC, ``-p * sum(phi([p_hat]_+))`` for SEPT."""
    X, P = np.asarray(x, dtype=float), np.asarray(p, dtype=float)
    g = np.zeros(np.broadcast_shapes(X.shape, P.shape))
    if spec.w_br > 0:
        g = g - spec.w_br * P
    if spec.w_sept > 0:
        tot = _sept_rates(spec.sept.phi, X, P).sum(axis=-1, keepdims=True)
        g = g - spec.w_sept * P * tot
    if spec.w_ipc > 0:
        g = g + spec.w_ipc * _ipc_potentials(_with_quad_tol(spec.ipc.phi, spec), P)
    return g


def theorem_coverage(rule: LearningRule, n: int) -> str:
    """Which established result certifies ``rule`` for ``n`` strategies."""
    if isinstance(rule, Contrarian):
        return EMPIRICAL
    h = as_hybrid(rule)
    br, sept, ipc = h.w_br > 0, h.w_sept > 0, h.w_ipc > 0
    if (br, sept, ipc) == (True, False, False):
        return "br"
    if (br, sept, ipc) == (False, False, True):
        return "ipc"
    if (br, sept, ipc) == (False, True, False):
        return "sept"
    if not sept:
        return "cone:br+ipc"
    if not ipc or h.ipc.is_smith:
        return "cone:br+sept+smith"
    if n == 2:
        return "cone:br+sept+ipc,n=2"
    return EMPIRICAL


# --------------------------------------------------------------- audit -----

@dataclass
class PassivityAudit:
    rule: dict
    storage_spec: dict
    n_samples: int
    violations: int
    worst_margin: float
    verdict: str
    theorem_coverage: str
    allowed_fraction: float
    contractive: bool
    lyapunov_violations: int = 0
    monotone_violations: int = 0
    s_initial: float = 0.0
    s_final: float = 0.0
    margins: np.ndarray = field(default=None, repr=False)
    storage_values: np.ndarray = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {"rule": self.rule, "storage_spec": self.storage_spec,
                "n_samples": self.n_samples, "violations": self.violations,
                "worst_margin": self.worst_margin, "verdict": self.verdict,
                "theorem_coverage": self.theorem_coverage,
                "allowed_fraction": self.allowed_fraction, "contractive": self.contractive,
                "lyapunov_violations": self.lyapunov_violations,
                "monotone_violations": self.monotone_violations,
                "s_initial": self.s_initial, "s_final": self.s_final}


def audit_trajectory(traj: Trajectory, spec: StorageSpec, rule: LearningRule,
                     contractive: bool = False, allowed_fraction: float = 0.01,
                     tol_scale: float = 1e-6, order: int = 4) -> PassivityAudit:
    """Check ``s_dot <= x_dot' p_dot - P`` sample by sample along ``traj``.

    Per-sample tolerance is ``tol_scale * (1 + |x_dot' p_dot|)``. On a
    contractive game the run must also satisfy ``s_dot <= -P`` and keep
    ``s`` nonincreasing, each under the same tolerance. The verdict passes
    when every check fails on at most ``allowed_fraction`` of the samples;
    finite differences straddling a best-response switch are expected to
    produce a few isolated spikes.
    """
    rd = rule_to_dict(rule)
    if traj.metadata.get("rule") not in (None, rd):
        raise ValueError("trajectory was produced by a different rule")
    X, P = traj.x, traj.p
    s = np.asarray(storage(spec, X, P), dtype=float)
    diss = np.asarray(dissipation(spec, X, P), dtype=float)
    xd, pd = derivative_estimates(traj, order)
    sd = time_derivative(s, traj.h, order)
    supply = np.sum(xd * pd, axis=1)
    tol = tol_scale * (1.0 + np.abs(supply))
    margin = supply - diss - sd
    N = len(traj)
    violations = int(np.count_nonzero(margin < -tol))
    limit = allowed_fraction * N
    ok = violations <= limit
    lyap = mono = 0
    if contractive:
        lyap = int(np.count_nonzero(sd > -diss + tol))
        mono = int(np.count_nonzero(np.diff(s) > tol[1:]))
        ok = ok and lyap <= limit and mono <= limit
    return PassivityAudit(rd, spec.to_dict(), N, violations, float(margin.min()),
                          "pass" if ok else "fail", theorem_coverage(rule, traj.n),
                          allowed_fraction, contractive, lyap, mono, float(s[0]), float(s[-1]),
                          margin, s)


# ------------------------------------------------------ sampling checks -----

def random_states(rng: np.random.Generator, N: int, n: int) -> np.ndarray:
    return rng.dirichlet(np.ones(n), size=N)


def random_payoffs(rng: np.random.Generator, N: int, n: int, scale: float = 1.0) -> np.ndarray:
    return scale * rng.standard_normal((N, n))


def well_separated_payoffs(rng: np.random.Generator, N: int, n: int, min_gap: float = 0.1,
                           low: float = -1.0, high: float = 1.0) -> np.ndarray:
    """Uniform payoffs whose entries differ pairwise by at least ``min_gap``."""
    out = np.empty((0, n))
    while out.shape[0] < N:
        P = rng.uniform(low, high, size=(2 * N, n))
        s = np.sort(P, axis=1)
        out = np.vstack([out, P[np.diff(s, axis=1).min(axis=1) >= min_gap]])
    return out[:N]


def equivalence_scan(spec: StorageSpec, rule: LearningRule, resolution: int = 50,
                     n_payoffs: int = 100, tol: float = 1e-8, n: int = 3, seed: int = 0,
                     eps_tie: float = EPS_TIE) -> CheckReport:
    """``S < tol``, ``P < tol`` and ``gap < tol`` must agree on a grid x payoff sample.

    Half the payoffs are small integers, which produces exact ties; the
    other half are continuous with pairwise gaps of at least 0.1, so that a
    positive payoff gap is not hidden below ``tol`` by the quadratic scaling
    of the IPC and SEPT storages.
    """
    from .games import simplex_grid

    if resolution < 10:
        raise ValueError("resolution must be at least 10")
    rng = np.random.default_rng(seed)
    grid = simplex_grid(n, resolution)
    k = n_payoffs // 2
    pays = np.vstack([rng.integers(-2, 3, size=(k, n)).astype(float),
                      well_separated_payoffs(rng, n_payoffs - k, n)])
    X = np.repeat(grid[None], pays.shape[0], axis=0).reshape(-1, n)
    P = np.repeat(pays, grid.shape[0], axis=0)
    S = storage(spec, X, P)
    D = dissipation(spec, X, P, eps_tie)
    G = P.max(axis=1) - np.sum(X * P, axis=1)
    a, b, c = S < tol, D < tol, G < tol
    bad = (a != b) | (b != c)
    nb = int(bad.sum())
    first = [{"x": X[i].tolist(), "p": P[i].tolist(), "S": float(S[i]), "P": float(D[i]),
              "gap": float(G[i])} for i in np.flatnonzero(bad)[:10]]
    return CheckReport("equivalence_scan", int(X.shape[0]), nb, 0.0 if nb == 0 else -1.0,
                       nb == 0, theorem_coverage(rule, n), rule_to_dict(rule), spec.to_dict(),
                       {"tol": tol, "zero_set_size": int(c.sum()), "failures": first})


def br_inner_product_check(spec: StorageSpec, samples: int = 10_000, n: int = 3, seed: int = 0,
                           bound: float = 1e-10) -> CheckReport:
    """Largest ``(dS/dx) (Y(p) - x)`` over random untied ``(x, p)``; must be ``<= bound``.

    Any best-response weight in ``spec`` is ignored: the condition concerns
    the IPC/SEPT part only.
    """
    if spec.w_sept == 0 and spec.w_ipc == 0:
        raise ValueError("spec needs an IPC or SEPT part")
    rng = np.random.default_rng(seed)
    X = random_states(rng, samples, n)
    P = random_payoffs(rng, samples, n)
    val = np.sum(grad_x_storage(spec.without_br(), X, P) * br_flow(X, P, 0.0), axis=1)
    worst = float(val.max())
    return CheckReport("br_inner_product", samples, int(np.count_nonzero(val > bound)),
                       bound - worst, worst <= bound, "br_inner_product", None, spec.to_dict(),
                       {"worst_value": worst})


def pc_check(rule: LearningRule, samples: int = 10_000, n: int = 3, seed: int = 0,
             eps_tie: float = EPS_TIE) -> CheckReport:
    """Positive correlation: ``p'V >= -1e-12`` and ``p'V > 1e-12`` when ``|V|_inf > 1e-6``."""
    rng = np.random.default_rng(seed)
    X = random_states(rng, samples, n)
    P = random_payoffs(rng, samples, n)
    V = edm_fields(rule, X, P, eps_tie)
    pv = np.sum(P * V, axis=1)
    moving = np.abs(V).max(axis=1) > 1e-6
    bad = (pv < -1e-12) | (moving & (pv <= 1e-12))
    worst = float(pv.min())
    return CheckReport("positive_correlation", samples, int(bad.sum()), worst + 1e-12,
                       not bad.any(), theorem_coverage(rule, n), rule_to_dict(rule), None,
                       {"min_pV": worst})
