"""Learning rules: best response, logit, IPC, SEPT and their hybrids.

Every rule evaluates to a rate matrix ``T`` whose entry ``T[i, j]`` is the
rate at which agents playing ``i`` switch to ``j``. The diagonal follows the
rule's formula; it cancels out of the flow and carries no meaning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Union

import numpy as np

from .core import EPS_TIE, as_payoff, as_state, best_response_selection, excess_payoff
from .quadrature import adaptive_simpson

log = logging.getLogger(__name__)

DEFAULT_RATE_CAP = 1e6
SHAPE_KINDS = ("linear", "power", "table")


@dataclass(frozen=True)
class RateShape:
    """Scalar revision-rate shape ``phi: [0, inf) -> [0, rate_cap]``.

    ``linear`` is ``gain * nu``; ``power`` is ``gain * nu**exponent``;
    ``table`` interpolates ``values`` over ``knots`` linearly and holds the
    last value past the final knot. Saturation at ``rate_cap`` is applied
    after the shape and logged.
    """

    kind: str = "linear"
    gain: float = 1.0
    exponent: float = 1.0
    knots: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    rate_cap: float = DEFAULT_RATE_CAP
    quad_tol: float = 1e-10

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown rate shape {self.kind!r}")
        if not self.rate_cap > 0:
            raise ValueError("rate_cap must be positive")
        if self.kind in ("linear", "power") and not self.gain > 0:
            raise ValueError("gain must be positive")
        if self.kind == "power" and not self.exponent > 0:
            raise ValueError("exponent must be positive")
        if self.kind == "table":
            k = np.asarray(self.knots, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if k.ndim != 1 or k.shape != v.shape or k.size < 2:
                raise ValueError("table needs matching knots/values with at least 2 entries")
            if k[0] != 0.0 or v[0] != 0.0:
                raise ValueError("table must start at (0, 0)")
            if np.any(np.diff(k) <= 0):
                raise ValueError("table knots must be strictly increasing")
            if np.any(v[1:] <= 0):
                raise ValueError("table values must be positive away from 0")
            object.__setattr__(self, "knots", tuple(float(a) for a in k))
            object.__setattr__(self, "values", tuple(float(a) for a in v))

    @property
    def _power(self) -> float:
        return 1.0 if self.kind == "linear" else float(self.exponent)

    def raw(self, nu):
        nu = np.maximum(np.asarray(nu, dtype=float), 0.0)
        if self.kind == "table":
            return np.interp(nu, self.knots, self.values)
        return self.gain * nu ** self._power

    def __call__(self, nu):
        r = self.raw(nu)
        if np.any(r > self.rate_cap):
            log.warning("rate shape saturated at cap %g", self.rate_cap)
            r = np.minimum(r, self.rate_cap)
        return r

    def integral(self, y):
        """``int_0^y phi``, taken as zero for ``y <= 0``. Vectorised."""
        y = np.asarray(y, dtype=float)
        if self.kind == "table":
            out = np.zeros_like(y)
            flat = out.reshape(-1)
            for i, yi in enumerate(y.reshape(-1)):
                if yi > 0:
                    flat[i] = self._table_integral(float(yi))
            return out
        k = self._power
        g = self.gain
        yc = (self.rate_cap / g) ** (1.0 / k)
        yp = np.maximum(y, 0.0)
        below = g * np.minimum(yp, yc) ** (k + 1.0) / (k + 1.0)
        return below + self.rate_cap * np.maximum(yp - yc, 0.0)

    def _table_integral(self, y: float) -> float:
        cap = self.rate_cap
        f = lambda t: min(float(np.interp(t, self.knots, self.values)), cap)
        # integrate knot interval by knot interval so every piece is smooth
        edges = [t for t in self.knots if t < y] + [y]
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            total += adaptive_simpson(f, a, b, tol=self.quad_tol / len(edges))
        return total

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "table":
            d["knots"] = list(self.knots)
            d["values"] = list(self.values)
        else:
            d["gain"] = self.gain
            if self.kind == "power":
                d["exponent"] = self.exponent
        if self.rate_cap != DEFAULT_RATE_CAP:
            d["rate_cap"] = self.rate_cap
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RateShape":
        d = dict(d)
        kind = d.pop("kind", "linear")
        if "knots" in d:
            d["knots"] = tuple(d["knots"])
            d["values"] = tuple(d["values"])
        return cls(kind=kind, **d)


Phi = Union[RateShape, tuple]


def _phi_list(phi: Phi, n: int) -> list[RateShape]:
    if isinstance(phi, RateShape):
        return [phi] * n
    phi = list(phi)
    if len(phi) != n:
        raise ValueError(f"rule has {len(phi)} per-strategy shapes but the game has {n} strategies")
    return phi


def _apply_phis(phi: Phi, nu: np.ndarray) -> np.ndarray:
    """Apply ``phi_j`` along the last axis of ``nu``."""
    n = nu.shape[-1]
    if isinstance(phi, RateShape):
        return phi(nu)
    out = np.empty_like(nu)
    for j, f in enumerate(_phi_list(phi, n)):
        out[..., j] = f(nu[..., j])
    return out


def _integrate_phis(phi: Phi, y: np.ndarray) -> np.ndarray:
    n = y.shape[-1]
    if isinstance(phi, RateShape):
        return phi.integral(y)
    out = np.empty_like(y)
    for j, f in enumerate(_phi_list(phi, n)):
        out[..., j] = f.integral(y[..., j])
    return out


def _phi_dict(phi: Phi):
    if isinstance(phi, RateShape):
        return phi.to_dict()
    return [f.to_dict() for f in phi]


def _phi_from(obj) -> Phi:
    if isinstance(obj, RateShape):
        return obj
    if isinstance(obj, dict):
        return RateShape.from_dict(obj)
    return tuple(_phi_from(o) for o in obj)


@dataclass(frozen=True)
class BestResponse:
    kind = "br"


@dataclass(frozen=True)
class Logit:
    beta: float
    kind = "logit"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("logit beta must be positive")


@dataclass(frozen=True)
class IPC:
    phi: Phi = field(default_factory=RateShape)
    kind = "ipc"

    @property
    def is_smith(self) -> bool:
        """Single linear shape, i.e. Smith's rule with gain ``phi.gain``."""
        return (isinstance(self.phi, RateShape) and self.phi.kind == "linear"
                and self.phi.rate_cap == DEFAULT_RATE_CAP)


@dataclass(frozen=True)
class SEPT:
    phi: Phi = field(default_factory=RateShape)
    kind = "sept"


@dataclass(frozen=True)
class Contrarian:
    """Switches toward *worse* strategies: ``T_ij = phi_j([p_i - p_j]_+)``.

    Not positively correlated; kept as a negative control for the audits.
    """

    phi: Phi = field(default_factory=RateShape)
    kind = "contrarian"


@dataclass(frozen=True)
class Hybrid:
    w_br: float = 0.0
    w_sept: float = 0.0
    w_ipc: float = 0.0
    sept: SEPT | None = None
    ipc: IPC | None = None
    kind = "hybrid"

    def __post_init__(self):
        w = (self.w_br, self.w_sept, self.w_ipc)
        if min(w) < 0 or not np.isfinite(w).all():
            raise ValueError(f"hybrid weights must be finite and nonnegative, got {w}")
        if sum(w) <= 0:
            raise ValueError("hybrid weights must not all be zero")
        if self.w_sept > 0 and not isinstance(self.sept, SEPT):
            raise ValueError("hybrid with SEPT weight needs a SEPT part")
        if self.w_ipc > 0 and not isinstance(self.ipc, IPC):
            raise ValueError("hybrid with IPC weight needs an IPC part")

    @property
    def total_weight(self) -> float:
        return self.w_br + self.w_sept + self.w_ipc

    @property
    def probabilities(self) -> tuple[float, float, float]:
        a = self.total_weight
        return self.w_br / a, self.w_sept / a, self.w_ipc / a

    def scaled(self, c: float) -> "Hybrid":
        return Hybrid(c * self.w_br, c * self.w_sept, c * self.w_ipc, self.sept, self.ipc)


LearningRule = Union[BestResponse, Logit, IPC, SEPT, Contrarian, Hybrid]


def smith(gain: float = 1.0) -> IPC:
    return IPC(RateShape("linear", gain))


def bnn(gain: float = 1.0) -> SEPT:
    return SEPT(RateShape("linear", gain))


def equal_hybrid() -> Hybrid:
    """Equal-weight mix of best response, Smith and BNN (unit gains)."""
    return Hybrid(1 / 3, 1 / 3, 1 / 3, sept=bnn(1.0), ipc=smith(1.0))


def as_hybrid(rule: LearningRule) -> Hybrid:
    """View any cone member as a :class:`Hybrid` with explicit weights."""
    if isinstance(rule, Hybrid):
        return rule
    if isinstance(rule, BestResponse):
        return Hybrid(w_br=1.0)
    if isinstance(rule, SEPT):
        return Hybrid(w_sept=1.0, sept=rule)
    if isinstance(rule, IPC):
        return Hybrid(w_ipc=1.0, ipc=rule)
    raise TypeError(f"{type(rule).__name__} is outside the hybrid cone")


def eval_rule(rule: LearningRule, x, p, eps_tie: float = EPS_TIE) -> np.ndarray:
    """Rate matrix of ``rule`` at state ``x`` and payoff ``p``."""
    p = as_payoff(p)
    x = as_state(x, p.shape[0], tol=1e-9)
    return rate_matrix(rule, x, p, eps_tie)


def rate_matrix(rule: LearningRule, x, p, eps_tie: float = EPS_TIE) -> np.ndarray:
    """Batched, unvalidated :func:`eval_rule`; leading axes broadcast."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    n = p.shape[-1]
    shape = p.shape + (n,)
    if isinstance(rule, BestResponse):
        y = best_response_selection(p, eps_tie)
        return np.broadcast_to(y[..., None, :], shape).copy()
    if isinstance(rule, Logit):
        z = (p - p.max(axis=-1, keepdims=True)) / rule.beta
        e = np.exp(z)
        y = e / e.sum(axis=-1, keepdims=True)
        return np.broadcast_to(y[..., None, :], shape).copy()
    if isinstance(rule, SEPT):
        rates = _apply_phis(rule.phi, np.maximum(excess_payoff(x, p), 0.0))
        return np.broadcast_to(rates[..., None, :], shape).copy()
    if isinstance(rule, IPC):
        diff = p[..., None, :] - p[..., :, None]
        return _apply_phis(rule.phi, np.maximum(diff, 0.0))
    if isinstance(rule, Contrarian):
        diff = p[..., :, None] - p[..., None, :]
        return _apply_phis(rule.phi, np.maximum(diff, 0.0))
    if isinstance(rule, Hybrid):
        if not np.all(np.isfinite(p)):
            raise ValueError("non-finite payoff")
        T = np.zeros(shape)
        if rule.w_br > 0:
            T += rule.w_br * rate_matrix(BestResponse(), x, p, eps_tie)
        if rule.w_sept > 0:
            T += rule.w_sept * rate_matrix(rule.sept, x, p, eps_tie)
        if rule.w_ipc > 0:
            T += rule.w_ipc * rate_matrix(rule.ipc, x, p, eps_tie)
        return T
    raise TypeError(f"not a learning rule: {rule!r}")


def logit_choice(p, beta: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    z = (p - p.max(axis=-1, keepdims=True)) / beta
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def logit_limit_check(p, betas: Sequence[float]) -> float:
    """Largest sup-norm gap between logit choice and best response over ``betas``.

    Requires a unique maximiser separated from the runner-up by more than
    ``max(betas)``; the check is meaningless on a payoff tie. Raises
    ``ValueError`` when the deviations do not shrink as ``beta`` decreases.
    """
    p = as_payoff(p)
    betas = sorted((float(b) for b in betas), reverse=True)
    if not betas or betas[-1] <= 0:
        raise ValueError("betas must be positive")
    top2 = np.sort(p)[-2:]
    gap = top2[1] - top2[0]
    if gap <= betas[0]:
        raise ValueError(f"payoff gap {gap:g} too small for beta {betas[0]:g} (tie region)")
    y = best_response_selection(p, 0.0)
    devs = [float(np.abs(logit_choice(p, b) - y).max()) for b in betas]
    if any(b > a for a, b in zip(devs, devs[1:])):
        raise ValueError(f"logit deviations not monotone: {devs}")
    return max(devs)


def rule_to_dict(rule: LearningRule) -> dict:
    if isinstance(rule, BestResponse):
        return {"kind": "br"}
    if isinstance(rule, Logit):
        return {"kind": "logit", "beta": rule.beta}
    if isinstance(rule, (IPC, SEPT, Contrarian)):
        return {"kind": rule.kind, "phi": _phi_dict(rule.phi)}
    if isinstance(rule, Hybrid):
        d = {"kind": "hybrid",
             "weights": {"br": rule.w_br, "sept": rule.w_sept, "ipc": rule.w_ipc}}
        if rule.sept is not None:
            d["sept"] = rule_to_dict(rule.sept)
        if rule.ipc is not None:
            d["ipc"] = rule_to_dict(rule.ipc)
        return d
    raise TypeError(f"not a learning rule: {rule!r}")


def rule_from_dict(d: dict) -> LearningRule:
    kind = d.get("kind")
    if kind == "br":
        return BestResponse()
    if kind == "logit":
        return Logit(float(d["beta"]))
    if kind == "smith":
        return smith(float(d.get("gain", 1.0)))
    if kind == "bnn":
        return bnn(float(d.get("gain", 1.0)))
    if kind in ("ipc", "sept", "contrarian"):
        phi = _phi_from(d.get("phi", {"kind": "linear", "gain": 1.0}))
        return {"ipc": IPC, "sept": SEPT, "contrarian": Contrarian}[kind](phi)
    if kind == "hybrid":
        w = d.get("weights", {})
        sept = rule_from_dict(d["sept"]) if "sept" in d else None
        ipc = rule_from_dict(d["ipc"]) if "ipc" in d else None
        if sept is not None and not isinstance(sept, SEPT):
            raise ValueError("hybrid 'sept' part must be a SEPT rule")
        if ipc is not None and not isinstance(ipc, IPC):
            raise ValueError("hybrid 'ipc' part must be an IPC rule")
        return Hybrid(float(w.get("br", 0.0)), float(w.get("sept", 0.0)),
                      float(w.get("ipc", 0.0)), sept, ipc)
    raise ValueError(f"unknown rule kind {kind!r}")


# --- flat representation consumed by the accelerated kernels -------------

class PackedRule(NamedTuple):
    weights: np.ndarray      # (w_br, w_sept, w_ipc, w_contrarian)
    beta: float              # > 0: logit replaces best response
    sept_par: np.ndarray     # (n, 3): kind code, gain, exponent
    sept_kx: np.ndarray      # (n, K) table knots, padded with +inf
    sept_ky: np.ndarray      # (n, K) table values, padded with last value
    ipc_par: np.ndarray
    ipc_kx: np.ndarray
    ipc_ky: np.ndarray
    rate_cap: float


def _pack_phi(phi: Phi | None, n: int):
    used = phi is not None
    shapes = _phi_list(phi, n) if used else [RateShape()] * n
    K = max([len(s.knots) for s in shapes] + [2])
    par = np.zeros((n, 3))
    kx = np.full((n, K), np.inf)
    ky = np.zeros((n, K))
    for j, s in enumerate(shapes):
        par[j] = (SHAPE_KINDS.index(s.kind), s.gain, s._power)
        if s.kind == "table":
            m = len(s.knots)
            kx[j, :m] = s.knots
            ky[j, :m] = s.values
            ky[j, m:] = s.values[-1]
        else:
            kx[j, :2] = (0.0, 1.0)
    caps = {s.rate_cap for s in shapes} if used else set()
    return par, kx, ky, caps


def pack_rule(rule: LearningRule, n: int, beta: float = 0.0) -> PackedRule:
    """Flatten ``rule`` into arrays for the simulation kernels.

    ``beta > 0`` swaps the best-response component for a logit choice.
    """
    if isinstance(rule, Logit):
        rule, beta = BestResponse(), rule.beta
    w = np.zeros(4)
    sept_phi = ipc_phi = None
    if isinstance(rule, Contrarian):
        w[3] = 1.0
        ipc_phi = rule.phi
    else:
        h = as_hybrid(rule)
        w[:3] = (h.w_br, h.w_sept, h.w_ipc)
        sept_phi = h.sept.phi if h.sept is not None else None
        ipc_phi = h.ipc.phi if h.ipc is not None else None
    sp, sx, sy, c1 = _pack_phi(sept_phi, n)
    ip, ix, iy, c2 = _pack_phi(ipc_phi, n)
    caps = (c1 | c2) or {DEFAULT_RATE_CAP}
    if len(caps) != 1:
        raise ValueError("kernels need one rate_cap shared by all shapes")
    return PackedRule(w, float(beta), sp, sx, sy, ip, ix, iy, float(caps.pop()))
