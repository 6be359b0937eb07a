import json
from pathlib import Path

import pytest

from popdyn import cli
from popdyn.config import ConfigError, load, loads

SMALL = """
name: small
seed: 7
game: {kind: congestion}
rules:
  hybrid: {kind: hybrid, weights: {br: 0.5, sept: 0.5, ipc: 0.5},
           sept: {kind: bnn}, ipc: {kind: smith}}
  bad: {kind: contrarian}
initial_conditions:
  - [1, 0, 0]
  - [0.2, 0.3, 0.5]
integrator: {h: 0.001, horizon: 1.0}
audit: {enabled: %s}
outputs: {field_resolution: 5, nash_resolution: 20}
"""


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_bundled_config_roundtrip():
    cfg = load("congestion_reference")
    assert list(cfg.rules) == ["br", "smith", "bnn", "hybrid"]
    assert len(cfg.initial_conditions) == 4 and cfg.integrator.horizon == 10
    again = loads(cfg.dumps())
    assert again.to_dict() == cfg.to_dict() and again.digest() == cfg.digest()


@pytest.mark.parametrize("text,field,line", [
    ("game: {kind: congestion}\nrules: {a: {kind: replicator}}\ninitial_conditions: [[1,0,0]]\n",
     "rules.a", 2),
    ("game: {kind: congestion}\nrules: {a: {kind: br}}\ninitial_conditions:\n  - [1, 0]\n",
     "initial_conditions[0]", 4),
    ("game: {kind: congestion}\nrules: {a: {kind: br}}\ninitial_conditions: [[1,0,0]]\n"
     "integrator: {h: 0.3}\n", "integrator", 4),
    ("game: {kind: congestion}\nrules: {a: {kind: br}}\n", "initial_conditions", 1),
    ("game: {kind: congestion}\nrule: {}\n", "rule", 2),
])
def test_config_errors_are_located(text, field, line):
    with pytest.raises(ConfigError) as exc:
        loads(text)
    assert exc.value.field_path == field and exc.value.line == line


def test_invalid_yaml():
    with pytest.raises(ConfigError):
        loads("game: [unclosed\n")


def test_run_outputs_and_negative_control(tmp_path, capsys):
    cfg = write(tmp_path, SMALL % "true")
    out = tmp_path / "out"
    assert cli.main(["run", cfg, "-o", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert "hybrid_ic0.csv" in names and "bad_ic1_audit.json" in names
    assert {"field.csv", "summary.json", "manifest.json"} <= set(names)
    bad = json.loads((out / "bad_ic1_audit.json").read_text())
    assert bad["verdict"] == "fail" and bad["theorem_coverage"].startswith("empirical")
    good = json.loads((out / "hybrid_ic0_audit.json").read_text())
    assert good["verdict"] == "pass" and good["theorem_coverage"] == "cone:br+sept+smith"
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == set(names) - {"manifest.json"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["runs"][0]["t_conv"] is not None


def test_run_without_audits(tmp_path):
    cfg = write(tmp_path, SMALL % "false")
    out = tmp_path / "out"
    assert cli.main(["run", cfg, "-o", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert names == {"hybrid_ic0.csv", "hybrid_ic1.csv", "bad_ic0.csv", "bad_ic1.csv",
                     "manifest.json"}


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    cfg = write(tmp_path, SMALL % "false")
    assert cli.main(["field", cfg]) == 0
    assert (tmp_path / "root" / "small" / "field.csv").exists()
    head = (tmp_path / "root" / "small" / "field.csv").read_text().splitlines()[0]
    assert head == "x1,x2,x3,f1,f2,f3"


def test_nash_verb(tmp_path, capsys):
    cfg = write(tmp_path, SMALL % "false")
    assert cli.main(["nash", cfg, "-o", str(tmp_path)]) == 0
    ne = json.loads((tmp_path / "nash.json").read_text())
    assert len(ne["equilibria"]) == 1
    assert "0.497917" in capsys.readouterr().out


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "missing.yaml")]) == 1
    assert cli.main(["frobnicate"]) == 1
    assert cli.main(["verify", "nonsense"]) == 1
    blow = SMALL.replace("{h: 0.001, horizon: 1.0}", "{h: 0.1, horizon: 1.0, method: euler}")
    blow = blow.replace("{kind: smith}", "{kind: smith, gain: 100}")
    assert cli.main(["run", write(tmp_path, blow % "false"), "-o", str(tmp_path / "o")]) == 3
    assert "aborted" in capsys.readouterr().err
    # the other rule still ran
    assert (tmp_path / "o" / "bad_ic0.csv").exists()


def test_verify_contractivity(capsys):
    assert cli.main(["verify", "contractivity"]) == 0
    out = capsys.readouterr().out
    assert "contractive: yes" in out and "sufficient condition 4 r' >= g1' satisfied (120 >= 10)" in out


def test_verify_reports_failure(monkeypatch, capsys):
    from popdyn import batteries
    from popdyn.reports import CheckReport

    fake = [CheckReport("broken", 10, 3, -1.0, False, "none", None, None, {})]
    monkeypatch.setitem(batteries.SUITES, "fake", lambda: fake)
    assert cli.main(["verify", "fake"]) == 2
    assert "FAILED broken" in capsys.readouterr().err
