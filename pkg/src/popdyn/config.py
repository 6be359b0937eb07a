"""YAML run configuration: parsing with located diagnostics, and round-tripping."""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .dynamics import IntegratorConfig
from .games import Game, game_from_dict
from .rules import LearningRule, rule_from_dict, rule_to_dict

BUNDLED = {"congestion_reference": "congestion_reference.yaml"}


class ConfigError(ValueError):
    def __init__(self, field_path: str, message: str, line: int | None = None):
        self.field_path, self.line = field_path, line
        where = f"line {line}, " if line else ""
        super().__init__(f"{where}field '{field_path}': {message}")


@dataclass
class AuditOptions:
    enabled: bool = True
    contractive: str | bool = "auto"      # "auto": ask the contractivity checker
    allowed_fraction: float = 0.01

    def to_dict(self):
        return {"enabled": self.enabled, "contractive": self.contractive,
                "allowed_fraction": self.allowed_fraction}


@dataclass
class OutputOptions:
    directory: str = "popdyn_out"
    field_resolution: int = 20
    nash_resolution: int = 50

    def to_dict(self):
        return {"directory": self.directory, "field_resolution": self.field_resolution,
                "nash_resolution": self.nash_resolution}


@dataclass
class RunConfig:
    game: dict
    rules: dict                                   # name -> rule description
    initial_conditions: list
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    audit: AuditOptions = field(default_factory=AuditOptions)
    outputs: OutputOptions = field(default_factory=OutputOptions)
    seed: int = 0
    name: str = "run"

    def build_game(self) -> Game:
        return game_from_dict(self.game)

    def build_rules(self) -> dict[str, LearningRule]:
        return {k: rule_from_dict(v) for k, v in self.rules.items()}

    def to_dict(self) -> dict:
        return {"name": self.name, "seed": self.seed, "game": copy.deepcopy(self.game),
                "rules": copy.deepcopy(self.rules),
                "initial_conditions": [list(map(float, x)) for x in self.initial_conditions],
                "integrator": self.integrator.to_dict(), "audit": self.audit.to_dict(),
                "outputs": self.outputs.to_dict()}

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def digest(self) -> str:
        canon = yaml.safe_dump(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()


# --------------------------------------------------------------- parsing -----

def _line_index(text: str) -> dict[str, int]:
    """Map dotted field paths to 1-based source lines."""
    index: dict[str, int] = {}

    def walk(node, path):
        index[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                walk(v, f"{path}.{k.value}" if path else str(k.value))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, f"{path}[{i}]")

    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return index
    if root is not None:
        walk(root, "")
    return index


def loads(text: str) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<document>", f"invalid YAML: {exc}",
                          mark.line + 1 if mark else None) from None
    lines = _line_index(text)

    def fail(path, msg):
        # fall back to the closest enclosing field with a known line
        p = path
        while p and p not in lines:
            p = p.rsplit(".", 1)[0] if "." in p else ""
        raise ConfigError(path, msg, lines.get(p))

    if not isinstance(raw, dict):
        fail("<document>", "top level must be a mapping")
    known = {"name", "seed", "game", "rules", "initial_conditions", "integrator", "audit",
             "outputs"}
    for k in raw:
        if k not in known:
            fail(str(k), f"unknown key (expected one of {sorted(known)})")
    for k in ("game", "rules", "initial_conditions"):
        if k not in raw:
            fail(k, "missing required field")

    game = raw["game"]
    if not isinstance(game, dict):
        fail("game", "must be a mapping")
    try:
        g = game_from_dict(game)
    except (ValueError, TypeError, KeyError) as exc:
        fail("game", str(exc))
    game = g.to_dict()

    rules = raw["rules"]
    if not isinstance(rules, dict) or not rules:
        fail("rules", "must be a non-empty mapping of name -> rule")
    for name, spec in rules.items():
        try:
            r = rule_from_dict(spec)
        except (ValueError, TypeError, KeyError, AttributeError) as exc:
            fail(f"rules.{name}", str(exc))
        rules[name] = rule_to_dict(r)

    ics = raw["initial_conditions"]
    if not isinstance(ics, list) or not ics:
        fail("initial_conditions", "must be a non-empty list of states")
    for i, x in enumerate(ics):
        try:
            v = np.asarray(x, dtype=float)
        except (TypeError, ValueError):
            fail(f"initial_conditions[{i}]", "not a numeric vector")
        if v.shape != (g.n,):
            fail(f"initial_conditions[{i}]", f"expected {g.n} entries, got {v.size}")
        if v.min() < -1e-9 or abs(v.sum() - 1) > 1e-9:
            fail(f"initial_conditions[{i}]", "not a point of the simplex")

    def section(key, cls, conv):
        d = raw.get(key) or {}
        if not isinstance(d, dict):
            fail(key, "must be a mapping")
        try:
            return cls(**{k: conv.get(k, lambda v: v)(v) for k, v in d.items()})
        except TypeError as exc:
            fail(key, f"unknown option ({exc})")
        except ValueError as exc:
            fail(key, str(exc))

    integ = section("integrator", IntegratorConfig,
                    {"h": float, "horizon": float, "eps_tie": float,
                     "smoothing": lambda v: None if v is None else float(v),
                     "kappa": lambda v: None if v is None else float(v)})
    audit = section("audit", AuditOptions, {"allowed_fraction": float})
    if audit.contractive not in ("auto", True, False):
        fail("audit.contractive", "must be auto, true or false")
    outputs = section("outputs", OutputOptions, {"field_resolution": int,
                                                 "nash_resolution": int})
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        fail("seed", "must be an integer")
    return RunConfig(game, rules, [list(map(float, x)) for x in ics], integ, audit, outputs,
                     seed, str(raw.get("name", "run")))


def load(path) -> RunConfig:
    """Load a config file, or a bundled config by name (e.g. ``congestion_reference``)."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        text = resources.files("popdyn.data").joinpath(BUNDLED[str(path)]).read_text()
    else:
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    return loads(text)
