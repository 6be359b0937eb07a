"""Seeded verification batteries behind ``popdyn verify`` and the acceptance tests.

Every battery returns a :class:`~popdyn.reports.CheckReport`. Negative
controls (rules that must fail a check) are reported as passing when they
fail as expected.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import appendix as ax
from .dynamics import IntegratorConfig, convergence_time, edm_fields, simulate
from .games import AffineCongestionGame, AffineGame, contractivity_check, nash_oracle
from .passivity import (StorageSpec, audit_trajectory, dissipation, equivalence_scan,
                        grad_x_storage, br_inner_product_check, pc_check, random_payoffs,
                        random_states, storage, theorem_coverage)
from .reports import CheckReport
from .rules import (IPC, SEPT, BestResponse, Contrarian, Hybrid, Logit, RateShape, bnn,
                    equal_hybrid, rule_to_dict, smith)

POINTWISE_SAMPLES = 100_000
FAMILY_SAMPLES = 10_000
GRADIENT_SAMPLES = 1_000
LP_SAMPLES = 10_000
BOUND = 1e-10


def power_ipc(exponent: int, scale: float = 30.0) -> IPC:
    """Power-law IPC rule with gain ``scale**(1 - k)`` so that ``phi(scale) = scale``.

    Keeps rates comparable across exponents on payoff differences of order
    ``scale`` (the congestion game's), avoiding needlessly stiff runs.
    """
    k = float(exponent)
    return IPC(RateShape("power", gain=scale ** (1.0 - k), exponent=k))


def rule_families() -> dict:
    """One representative per rule family, used by the pointwise batteries."""
    return {
        "br": BestResponse(),
        "logit": Logit(0.1),
        "smith": smith(1.0),
        "bnn": bnn(1.0),
        "ipc_power2": IPC(RateShape("power", 1.0, 2.0)),
        "sept_power3": SEPT(RateShape("power", 1.0, 3.0)),
        "sept_table": SEPT(RateShape("table", knots=(0.0, 0.5, 1.0, 2.0),
                                     values=(0.0, 0.2, 1.5, 2.0))),
        "hybrid": equal_hybrid(),
    }


def cone_rules() -> dict:
    """Rules with storage certificates, used for gradient and scan batteries."""
    return {
        "br": BestResponse(),
        "smith": smith(1.0),
        "bnn": bnn(1.0),
        "hybrid": equal_hybrid(),
        "ipc_power3": IPC(RateShape("power", 0.5, 3.0)),
        "br_sept_ipc": Hybrid(0.7, 0.4, 1.3, SEPT(RateShape("power", 1.0, 2.0)),
                              IPC(RateShape("power", 2.0, 1.5))),
    }


# ------------------------------------------------------------ pointwise -----

def positive_correlation_battery(samples: int = POINTWISE_SAMPLES, seed: int = 11) -> list[CheckReport]:
    out = []
    for i, (name, rule) in enumerate(rule_families().items()):
        if name == "logit":
            continue    # logit choice is not positively correlated near ties
        r = pc_check(rule, samples, n=3, seed=seed + i)
        r.name = f"pc[{name}]"
        out.append(r)
    neg = pc_check(Contrarian(), samples // 10, n=3, seed=seed)
    out.append(_expect_fail(neg, "pc[contrarian, must fail]"))
    return out


def _expect_fail(r: CheckReport, name: str) -> CheckReport:
    r.name = name
    r.details["expected"] = "fail"
    r.details["observed"] = r.verdict
    r.passed = r.passed is False
    return r


def br_inner_product_battery(samples: int = POINTWISE_SAMPLES, seed: int = 21) -> list[CheckReport]:
    specs = {"smith": StorageSpec.for_rule(smith()), "bnn": StorageSpec.for_rule(bnn()),
             "ipc_power3": StorageSpec.for_rule(cone_rules()["ipc_power3"]),
             "sept_ipc": StorageSpec(0.0, 0.6, 1.1, bnn(), cone_rules()["ipc_power3"])}
    out = []
    for i, (name, spec) in enumerate(specs.items()):
        r = br_inner_product_check(spec, samples, n=3, seed=seed + i)
        r.name = f"br_inner[{name}]"
        out.append(r)
    return out


def sept_ipc_identity_battery(samples: int = POINTWISE_SAMPLES, seed: int = 31) -> CheckReport:
    rng = np.random.default_rng(seed)
    worst, done = 0.0, 0
    for n in (2, 3, 4, 5):
        m = samples // 4
        X, P = random_states(rng, m, n), random_payoffs(rng, m, n)
        res = ax.sept_ipc_identity_residual(IPC(RateShape("power", 1.0, 2.0)), RateShape(), X, P)
        worst = max(worst, float(res.max()))
        done += m
    return CheckReport("sept_ipc_identity", done, int(worst >= 1e-9), 1e-9 - worst, worst < 1e-9,
                       "appendix", None, None, {"worst_residual": worst})


def gradient_battery(samples: int = GRADIENT_SAMPLES, seed: int = 41, step: float = 1e-6,
                     rel_tol: float = 1e-5) -> list[CheckReport]:
    """Analytic ``dS/dx`` against central differences at interior points."""
    out = []
    for i, (name, rule) in enumerate(cone_rules().items()):
        rng = np.random.default_rng(seed + i)
        spec = StorageSpec.for_rule(rule)
        X = 0.02 / 3 + 0.98 * random_states(rng, samples, 3)
        P = random_payoffs(rng, samples, 3)
        g = grad_x_storage(spec, X, P)
        fd = np.empty_like(g)
        for j in range(3):
            e = np.zeros(3)
            e[j] = step
            fd[:, j] = (storage(spec, X + e, P) - storage(spec, X - e, P)) / (2 * step)
        scale = np.maximum(np.abs(g).max(axis=1), 1e-3)
        rel = np.abs(fd - g).max(axis=1) / scale
        worst = float(rel.max())
        out.append(CheckReport(f"gradient[{name}]", samples, int(np.count_nonzero(rel >= rel_tol)),
                               rel_tol - worst, worst < rel_tol, theorem_coverage(rule, 3),
                               rule_to_dict(rule), spec.to_dict(), {"worst_relative_error": worst}))
    return out


def equivalence_battery(resolution: int = 50, n_payoffs: int = 100, tol: float = 1e-8,
                        seed: int = 51) -> list[CheckReport]:
    out = []
    for i, name in enumerate(("br", "smith", "bnn", "hybrid")):
        rule = cone_rules()[name]
        r = equivalence_scan(StorageSpec.for_rule(rule), rule, resolution, n_payoffs, tol,
                             seed=seed + i)
        r.name = f"equivalence[{name}]"
        out.append(r)
    return out


def nonnegativity_battery(samples: int = FAMILY_SAMPLES, seed: int = 61) -> list[CheckReport]:
    out = []
    for i, (name, rule) in enumerate(cone_rules().items()):
        rng = np.random.default_rng(seed + i)
        spec = StorageSpec.for_rule(rule)
        X, P = random_states(rng, samples, 3), random_payoffs(rng, samples, 3)
        worst = float(min(np.min(storage(spec, X, P)), np.min(dissipation(spec, X, P))))
        out.append(CheckReport(f"nonnegative_S_P[{name}]", samples, int(worst < -1e-12),
                               worst + 1e-12, worst >= -1e-12, theorem_coverage(rule, 3),
                               rule_to_dict(rule), spec.to_dict(), {"min_value": worst}))
    return out


def conservation_battery(samples: int = FAMILY_SAMPLES, seed: int = 71) -> list[CheckReport]:
    """``1'V = 0`` and ``V_i >= 0`` on faces ``x_i = 0`` for every rule family."""
    out = []
    for i, (name, rule) in enumerate(rule_families().items()):
        rng = np.random.default_rng(seed + i)
        X, P = random_states(rng, samples, 3), random_payoffs(rng, samples, 3)
        mass = float(np.abs(edm_fields(rule, X, P).sum(axis=1)).max())
        Xb = random_states(rng, samples, 3)
        zero = rng.integers(0, 3, samples)
        Xb[np.arange(samples), zero] = 0.0
        Xb /= Xb.sum(axis=1, keepdims=True)
        Vb = edm_fields(rule, Xb, P)
        inflow = float(Vb[np.arange(samples), zero].min())
        ok = mass <= 1e-12 and inflow >= 0.0
        out.append(CheckReport(f"conservation[{name}]", 2 * samples,
                               int(mass > 1e-12) + int(inflow < 0), min(1e-12 - mass, inflow), ok,
                               theorem_coverage(rule, 3) if name != "logit" else "n/a",
                               rule_to_dict(rule), None,
                               {"max_mass_error": mass, "min_boundary_flow": inflow}))
    return out


# ------------------------------------------------------------- appendix -----

def _mixed_sizes(rng, samples, sizes=(2, 3, 4, 5, 6)):
    per = samples // len(sizes)
    for n in sizes:
        yield n, random_states(rng, per, n), random_payoffs(rng, per, n)


def h_sortedness_battery(samples: int = FAMILY_SAMPLES, seed: int = 81) -> CheckReport:
    rng = np.random.default_rng(seed)
    bad = done = 0
    for n, _, P in _mixed_sizes(rng, samples):
        # half the samples get repeated entries to exercise the tie clause
        P[::2, 1] = P[::2, 0]
        hs = ax.h_vector(np.sort(P, axis=1))
        ps = np.sort(P, axis=1)
        d = np.diff(hs, axis=1)
        ties = np.diff(ps, axis=1) == 0
        bad += int(np.count_nonzero((d > 1e-12 * (1 + hs[:, :-1])).any(axis=1)
                                    | (ties & (np.abs(d) > 0)).any(axis=1)))
        done += P.shape[0]
    return CheckReport("h_sorted_nonincreasing", done, bad, 0.0 if bad == 0 else -1.0, bad == 0,
                       "appendix")


def J_battery(samples: int = POINTWISE_SAMPLES, seed: int = 82) -> CheckReport:
    rng = np.random.default_rng(seed)
    worst, disagree, done = -np.inf, 0, 0
    for n, X, P in _mixed_sizes(rng, samples):
        hf, df = ax.J_batch(X, P)
        worst = max(worst, float(hf.max()))
        disagree += int(np.count_nonzero(~ax._agree(hf, df)))
        done += X.shape[0]
    ok = worst <= BOUND and disagree == 0
    return CheckReport("J_nonpositive", done, disagree + int(worst > BOUND), BOUND - worst, ok,
                       "appendix", None, None, {"worst_J": worst, "form_disagreements": disagree})


def minmax_battery(samples: int = POINTWISE_SAMPLES, seed: int = 83) -> CheckReport:
    rng = np.random.default_rng(seed)
    fails = disagree = nonvac = done = 0
    worst = np.inf
    for n, X, P in _mixed_sizes(rng, samples):
        r = ax.minmax_batch(X, P)
        m = ~r["vacuous"]
        gap = r["rhs"][m] - r["lhs"][m]
        if gap.size:
            worst = min(worst, float(gap.min()))
        fails += int(np.count_nonzero(gap < -1e-9 * (1 + np.abs(r["lhs"][m]))))
        hu, hl = r["has_upper"], r["has_lower"]
        disagree += int(np.count_nonzero(~ax._agree(r["lhs"][hu], r["closed_lhs"][hu])))
        disagree += int(np.count_nonzero(~ax._agree(r["rhs"][hl], r["closed_rhs"][hl])))
        nonvac += int(m.sum())
        done += X.shape[0]
    return CheckReport("minmax_inequality", done, fails + disagree, float(worst),
                       fails == 0 and disagree == 0, "appendix", None, None,
                       {"non_vacuous": nonvac, "closed_form_disagreements": disagree})


def lp_battery(samples: int = LP_SAMPLES, seed: int = 84) -> CheckReport:
    rng = np.random.default_rng(seed)
    worst_res, fails, first = 0.0, 0, []
    for i in range(samples):
        n = 2 + i % 5
        x = rng.dirichlet(np.ones(n))
        p = rng.standard_normal(n)
        try:
            c = ax.lp_certificate(x, p)
            worst_res = max(worst_res, max(c.residuals.values()))
            if not c.ok:
                raise ax.OracleError("enumeration optimum differs")
        except ax.OracleError as exc:
            fails += 1
            if len(first) < 10:
                first.append({"x": x.tolist(), "p": p.tolist(), "error": str(exc)})
    return CheckReport("lp_certificate", samples, fails, ax.KKT_TOL - worst_res, fails == 0,
                       "appendix", None, None, {"worst_kkt_residual": worst_res,
                                                "failures": first})


def cross_term_battery(samples: int = POINTWISE_SAMPLES, seed: int = 85) -> list[CheckReport]:
    r2 = ax.n2_cross_term_check(RateShape(), RateShape(), samples, n=2, seed=seed)
    r2p = ax.n2_cross_term_check(RateShape("power", 1.0, 3.0), RateShape("power", 2.0, 0.5),
                                 samples, n=2, seed=seed + 1)
    r3 = ax.n2_cross_term_check(RateShape(), RateShape(), samples // 10, n=3, seed=seed + 2)
    out = []
    for name, r in (("cross_term_n2[bnn,smith]", r2), ("cross_term_n2[power]", r2p),
                    ("cross_term_n3[report only]", r3)):
        out.append(CheckReport(name, r.n_samples, int(r.passed is False), BOUND - r.worst,
                               r.passed,
                               "appendix" if r.n == 2 else "empirical: no theorem coverage",
                               None, None, {"worst_H": r.worst, "n": r.n}))
    return out


# -------------------------------------------------------- contractivity -----

def contractivity_battery(resolution: int = 100) -> list[CheckReport]:
    out = []
    rep = contractivity_check(AffineCongestionGame(), resolution)
    c23 = rep.sufficient_condition
    out.append(CheckReport("contractive[congestion]", int((resolution + 1) * (resolution + 2) / 2),
                           int(not rep.contractive), -rep.max_eigenvalue,
                           rep.contractive and c23["holds"], "n/a", None, None,
                           {"summary": rep.summary(), **rep.to_dict()}))
    zero = AffineCongestionGame(g1=(0, 20), g2=(0, 15), r=(0, 10))
    rz = contractivity_check(zero, 10)
    out.append(CheckReport("contractive[zero slopes]", 66, int(not rz.contractive),
                           -rz.max_eigenvalue, rz.contractive, "n/a", None, None,
                           {"max_eigenvalue": rz.max_eigenvalue}))
    bad = AffineCongestionGame(g1=(1e6, 20), r=(0, 10))
    rb = contractivity_check(bad, 10)
    ok = (not rb.contractive) and rb.max_eigenvalue > 0 and not rb.sufficient_condition["holds"]
    out.append(CheckReport("contractive[steep main road, must fail]", 66, 0, rb.max_eigenvalue,
                           ok, "n/a", None, None,
                           {"max_eigenvalue": rb.max_eigenvalue, "expected": "not contractive",
                            "sufficient_condition": rb.sufficient_condition}))
    return out


# ---------------------------------------------------------- trajectories -----

REFERENCE_INITIAL = (np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]),
                 np.full(3, 1 / 3))
SWEEP_INITIAL = REFERENCE_INITIAL + (np.array([0.1, 0.6, 0.3]),)


@dataclass
class RunRecord:
    label: str
    rule: dict
    x0: list
    t_conv: float | None
    endpoint: list
    audit: dict
    seconds: float

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class SweepResult:
    name: str
    records: list = field(default_factory=list)
    report: CheckReport | None = None


def reference_rules() -> dict:
    return {"br": BestResponse(), "smith": smith(1.0), "bnn": bnn(1.0), "hybrid": equal_hybrid()}


def _run_and_audit(game, rule, x0, cfg, contractive, label) -> RunRecord:
    t0 = time.perf_counter()
    tr = simulate(game, rule, x0, cfg)
    a = audit_trajectory(tr, StorageSpec.for_rule(rule), rule, contractive=contractive)
    return RunRecord(label, rule_to_dict(rule), [float(v) for v in x0], convergence_time(tr),
                     tr.x[-1].tolist(), a.to_dict(), time.perf_counter() - t0)


def reference_runs(cfg: IntegratorConfig | None = None) -> SweepResult:
    """The four rules from the four initial states on the congestion game."""
    cfg = cfg or IntegratorConfig()
    game = AffineCongestionGame()
    ne = nash_oracle(game).points[0]
    res = SweepResult("reference_runs")
    worst_dist = 0.0
    ok = True
    for name, rule in reference_rules().items():
        for x0 in REFERENCE_INITIAL:
            rec = _run_and_audit(game, rule, x0, cfg, True, name)
            dist = float(np.abs(np.array(rec.endpoint) - ne).sum())
            rec.audit["endpoint_ne_distance"] = dist
            worst_dist = max(worst_dist, dist)
            ok &= (rec.t_conv is not None and rec.audit["verdict"] == "pass"
                   and rec.audit["s_final"] < 1e-3 and dist < 1e-2)
            res.records.append(rec)
    res.report = CheckReport("reference_runs", len(res.records),
                             sum(r.audit["verdict"] != "pass" for r in res.records),
                             min(r.audit["worst_margin"] for r in res.records), ok, "mixed",
                             None, None, {"nash_point": ne.tolist(),
                                          "max_endpoint_distance": worst_dist})
    return res


def _sweep_report(res: SweepResult) -> SweepResult:
    fails = [r for r in res.records if r.audit["verdict"] != "pass"]
    frac = max(r.audit["violations"] / r.audit["n_samples"] for r in res.records)
    res.report = CheckReport(res.name, len(res.records), len(fails),
                             min(r.audit["worst_margin"] for r in res.records), not fails,
                             res.records[0].audit["theorem_coverage"], None, None,
                             {"max_violation_fraction": frac,
                              "failures": [{"rule": r.rule, "x0": r.x0} for r in fails[:10]]})
    return res


def br_ipc_sweep(n_weights: int = 20, exponents=(1, 2, 3, 4), seed: int = 101,
                   cfg: IntegratorConfig | None = None) -> SweepResult:
    cfg = cfg or IntegratorConfig()
    rng = np.random.default_rng(seed)
    game = AffineCongestionGame()
    res = SweepResult("br_ipc_sweep")
    for k in exponents:
        for _ in range(n_weights):
            w = rng.uniform(0.0, 1.0, 2)
            rule = Hybrid(w_br=w[0], w_ipc=w[1], ipc=power_ipc(k))
            for x0 in SWEEP_INITIAL:
                res.records.append(_run_and_audit(game, rule, x0, cfg, True, f"k={k}"))
    return _sweep_report(res)


def br_sept_smith_sweep(n_weights: int = 20, seed: int = 102,
                   cfg: IntegratorConfig | None = None) -> SweepResult:
    cfg = cfg or IntegratorConfig()
    rng = np.random.default_rng(seed)
    game = AffineCongestionGame()
    res = SweepResult("br_sept_smith_sweep")
    for _ in range(n_weights):
        w = rng.uniform(0.0, 1.0, 3)
        rule = Hybrid(w[0], w[1], w[2], sept=bnn(1.0), ipc=smith(1.0))
        for x0 in SWEEP_INITIAL:
            res.records.append(_run_and_audit(game, rule, x0, cfg, True, "bnn+smith"))
    return _sweep_report(res)


def random_contractive_2games(count: int = 5, seed: int = 103) -> list[AffineGame]:
    """Affine two-strategy games with ``a11 + a22 - a12 - a21 <= -0.5`` (strictly contractive)."""
    rng = np.random.default_rng(seed)
    games = []
    while len(games) < count:
        A = rng.uniform(-5.0, 5.0, (2, 2))
        if A[0, 0] + A[1, 1] - A[0, 1] - A[1, 0] <= -0.5:
            games.append(AffineGame(A, rng.uniform(-2.0, 2.0, 2)))
    return games


def br_sept_ipc_sweep(n_weights: int = 20, seed: int = 104,
                   cfg: IntegratorConfig | None = None) -> SweepResult:
    cfg = cfg or IntegratorConfig()
    rng = np.random.default_rng(seed)
    res = SweepResult("br_sept_ipc_sweep")
    ipc = IPC(RateShape("power", 0.5, 2.0))
    sept = SEPT(RateShape("power", 1.0, 1.5))
    for gi, game in enumerate(random_contractive_2games(seed=seed)):
        for _ in range(n_weights):
            w = rng.uniform(0.0, 1.0, 3)
            rule = Hybrid(w[0], w[1], w[2], sept=sept, ipc=ipc)
            for x0 in (np.array([1.0, 0.0]), np.array([0.0, 1.0])):
                res.records.append(_run_and_audit(game, rule, x0, cfg, True, f"game{gi}"))
    return _sweep_report(res)


# --------------------------------------------------------------- suites -----

def _flatten(items) -> list[CheckReport]:
    out = []
    for it in items:
        out.extend(it if isinstance(it, list) else [it])
    return out


def passivity_suite(include_sweeps: bool = True) -> list[CheckReport]:
    reps = _flatten([positive_correlation_battery(), br_inner_product_battery(),
                     sept_ipc_identity_battery(), gradient_battery(), equivalence_battery(),
                     nonnegativity_battery(), conservation_battery()])
    if include_sweeps:
        reps.append(reference_runs().report)
        reps += [br_ipc_sweep().report, br_sept_smith_sweep().report, br_sept_ipc_sweep().report]
    return reps


def appendix_suite() -> list[CheckReport]:
    return _flatten([h_sortedness_battery(), J_battery(), minmax_battery(), lp_battery(),
                     cross_term_battery()])


def contractivity_suite() -> list[CheckReport]:
    return contractivity_battery()


SUITES: dict[str, Callable[[], list[CheckReport]]] = {
    "passivity": passivity_suite,
    "appendix": appendix_suite,
    "contractivity": contractivity_suite,
}


def run_suite(name: str) -> list[CheckReport]:
    if name == "all":
        return _flatten([SUITES[s]() for s in ("contractivity", "appendix", "passivity")])
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES) + ['all']}")
    return SUITES[name]()


def format_table(reports: list[CheckReport]) -> str:
    w = max([len(r.name) for r in reports] + [5])
    lines = [f"{'check':<{w}}  {'samples':>8}  {'viol':>6}  {'worst_margin':>13}  verdict",
             "-" * (w + 45)]
    for r in reports:
        lines.append(f"{r.name:<{w}}  {r.n_samples:>8}  {r.violations:>6}  "
                     f"{r.worst_margin:>13.4g}  {r.verdict}")
    return "\n".join(lines)
