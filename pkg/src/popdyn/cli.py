"""Command-line entry point: ``popdyn run|verify|nash|field``.

Exit codes: 0 success, 1 invalid config or arguments, 2 a verification
check failed, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _accel
from .config import ConfigError, RunConfig, load
from .core import SimplexError
from .dynamics import convergence_time, simulate
from .games import contractivity_check, nash_oracle, payoff_projection_field
from .passivity import StorageSpec, audit_trajectory
from .reports import dumps, write_json

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_RUNTIME = 0, 1, 2, 3
OUTPUT_ROOT_ENV = "POPDYN_OUTPUT_ROOT"

def output_dir(cfg: RunConfig, override: str | None = None) -> Path:
    if override:
        d = Path(override)
    elif os.environ.get(OUTPUT_ROOT_ENV):
        d = Path(os.environ[OUTPUT_ROOT_ENV]) / cfg.name
    else:
        d = Path(cfg.outputs.directory)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_text(path: Path, text: str):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def field_csv(game, resolution: int) -> str:
    X, F = payoff_projection_field(game, resolution)
    n = X.shape[1]
    head = ",".join([f"x{i}" for i in range(1, n + 1)] + [f"f{i}" for i in range(1, n + 1)])
    rows = "".join(",".join("%.17g" % v for v in row) + "\n" for row in np.hstack([X, F]))
    return head + "\n" + rows


def run(cfg: RunConfig, out: Path) -> tuple[dict, int]:
    """Simulate every (rule, start) pair, audit, and write outputs into ``out``."""
    t0 = time.perf_counter()
    game = cfg.build_game()
    rules = cfg.build_rules()
    files: list[str] = []
    contractive = cfg.audit.contractive
    if contractive == "auto" and cfg.audit.enabled:
        contractive = contractivity_check(game, 50).contractive
    status = EXIT_OK
    runs = []
    for name, rule in rules.items():
        spec = None
        if cfg.audit.enabled:
            try:
                spec = StorageSpec.for_rule(rule)
            except TypeError:
                # rules outside the cone are audited against the Smith storage
                from .rules import smith
                spec = StorageSpec.for_rule(smith(1.0))
        for i, x0 in enumerate(cfg.initial_conditions):
            stem = f"{name}_ic{i}"
            rec = {"rule": name, "x0": x0, "trajectory": None}
            try:
                tr = simulate(game, rule, np.array(x0), cfg.integrator, seed=cfg.seed)
            except (SimplexError, FloatingPointError) as exc:
                rec["error"] = str(exc)
                status = EXIT_RUNTIME
                runs.append(rec)
                print(f"{stem}: aborted ({exc})", file=sys.stderr)
                continue
            _write_text(out / f"{stem}.csv", tr.to_csv())
            files.append(f"{stem}.csv")
            rec.update(trajectory=f"{stem}.csv", t_conv=convergence_time(tr),
                       endpoint=tr.x[-1].tolist(), max_drift=tr.max_drift)
            line = f"{stem}: t_conv={rec['t_conv']}"
            if spec is not None:
                a = audit_trajectory(tr, spec, rule, contractive=bool(contractive),
                                     allowed_fraction=cfg.audit.allowed_fraction)
                write_json(a, out / f"{stem}_audit.json")
                files.append(f"{stem}_audit.json")
                rec["audit"] = {"file": f"{stem}_audit.json", "verdict": a.verdict,
                                "s_final": a.s_final}
                line += f" audit={a.verdict}"
            runs.append(rec)
            print(line)
    if cfg.audit.enabled:
        # with audits off a run emits trajectories only, plus the manifest
        _write_text(out / "field.csv", field_csv(game, cfg.outputs.field_resolution))
        files.append("field.csv")
        write_json({"config_hash": cfg.digest(), "contractive": bool(contractive),
                    "runs": runs}, out / "summary.json")
        files.append("summary.json")
    manifest = {"config_hash": cfg.digest(), "tool_version": __version__,
                "backend": _accel.backend(), "files": files,
                "wall_clock_seconds": round(time.perf_counter() - t0, 3)}
    write_json(manifest, out / "manifest.json")
    return manifest, status


def _cmd_run(args) -> int:
    cfg = load(args.config)
    out = output_dir(cfg, args.output)
    _, status = run(cfg, out)
    print(f"outputs in {out}")
    return status


def _cmd_nash(args) -> int:
    cfg = load(args.config)
    game = cfg.build_game()
    ne = nash_oracle(game, cfg.outputs.nash_resolution)
    out = output_dir(cfg, args.output)
    write_json(ne, out / "nash.json")
    if len(ne) == 0:
        print("no equilibrium found; try a finer resolution", file=sys.stderr)
    for p, g in zip(ne.points, ne.gaps):
        print("x = [" + ", ".join(f"{v:.6f}" for v in p) + f"]  gap = {g:.2e}")
    return EXIT_OK


def _cmd_field(args) -> int:
    cfg = load(args.config)
    out = output_dir(cfg, args.output)
    _write_text(out / "field.csv", field_csv(cfg.build_game(), cfg.outputs.field_resolution))
    print(f"wrote {out / 'field.csv'}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .batteries import format_table, run_suite

    try:
        reports = run_suite(args.suite)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    print(format_table(reports))
    for r in reports:
        if r.name.startswith("contractive[congestion]"):
            print(r.details["summary"])
    if args.json:
        _write_text(Path(args.json), dumps([r.to_dict() for r in reports]))
    failed = [r for r in reports if r.passed is False]
    for r in failed[:10]:
        print(f"FAILED {r.name}:", json.dumps(r.to_dict(), default=str, indent=2),
              file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="popdyn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"popdyn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (("run", _cmd_run, "simulate, audit and export a config"),
                               ("nash", _cmd_nash, "approximate Nash equilibria of the game"),
                               ("field", _cmd_field, "export the projected payoff field")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="YAML config path or bundled name (congestion_reference)")
        p.add_argument("-o", "--output", help=f"output directory (overrides ${OUTPUT_ROOT_ENV})")
        p.set_defaults(func=fn)
    p = sub.add_parser("verify", help="run a verification battery")
    p.add_argument("suite", help="passivity, appendix, contractivity or all")
    p.add_argument("--json", help="also write all reports to this file")
    p.set_defaults(func=_cmd_verify)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surface as a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
