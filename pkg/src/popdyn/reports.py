"""Common report record for audits and sampling checks, plus JSON output."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class CheckReport:
    """Outcome of a pointwise or trajectory check.

    ``worst_margin`` is signed so that nonnegative means satisfied; for a
    check of the form ``value <= bound`` it is ``bound - max(value)``.
    ``passed`` is ``None`` when the check lies outside any result that
    would justify a verdict.
    """

    name: str
    n_samples: int
    violations: int
    worst_margin: float
    passed: bool | None
    theorem_coverage: str
    rule: dict | None = None
    storage_spec: dict | None = None
    details: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        if self.passed is None:
            return "no verdict"
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        d = {"check": self.name, "rule": self.rule, "storage_spec": self.storage_spec,
             "n_samples": self.n_samples, "violations": self.violations,
             "worst_margin": self.worst_margin, "verdict": self.verdict,
             "theorem_coverage": self.theorem_coverage}
        d.update(self.details)
        return d


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, LF, trailing newline)."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def write_json(obj, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps(obj))
