import copy
import json
from pathlib import Path

import numpy as np
import pytest

from agestruct import ConfigError, convergence_study, dump_schema, parse_config, parse_dict, run
from agestruct.cli import main

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

MINIMAL = {
    "model": "sir",
    "grid": {"a_max": 10, "n_cells": 100},
    "horizon": 1.0,
    "params": {"gamma_in": 1.0, "nu_S": 0.5, "eta": 1.0, "beta": {"const": 1.0}, "nu_I": {"const": 1.0}},
    "initial": {"S": 1.0, "i": {"const": 0.5}},
}


def with_changes(base=MINIMAL, **changes):
    doc = copy.deepcopy(base)
    for path, value in changes.items():
        node = doc
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[k]
        node[keys[-1]] = value
    return doc


def test_minimal_defaults():
    sc = parse_dict(MINIMAL)
    assert sc.tol_order == 1e-9
    assert sc.tol_mass == pytest.approx(1e-12 * 5.0)
    assert sc.seed == 0 and sc.checks == [] and sc.output_dir is None
    assert sc.config["tol_mass"] == sc.tol_mass
    assert sc.config["options"]["levels"] == 3


def test_negative_rate_named():
    with pytest.raises(ConfigError) as exc:
        parse_dict(with_changes(params__nu_S=-1.0))
    assert exc.value.path == "/params/nu_S"
    assert "nu_S" in str(exc.value)


def test_negative_kernel_named():
    with pytest.raises(ConfigError) as exc:
        parse_dict(with_changes(params__beta={"const": -1.0}))
    assert "beta" in str(exc.value)


def test_horizon_not_multiple():
    with pytest.raises(ConfigError) as exc:
        parse_dict(with_changes(horizon=1.05))
    assert "nearest multiple is 1.0" in str(exc.value)
    assert exc.value.path == "/horizon"


def test_schema_errors_carry_pointer():
    with pytest.raises(ConfigError) as exc:
        parse_dict(with_changes(grid__n_cells=0))
    assert exc.value.path == "/grid/n_cells"
    with pytest.raises(ConfigError):
        parse_dict(with_changes(model="seir"))
    with pytest.raises(ConfigError):
        parse_config(b"{not json")
    with pytest.raises(ConfigError) as exc:
        parse_dict(with_changes(checks=["trajectory_monotone"]))
    assert exc.value.path == "/checks"


def test_age_function_forms():
    doc = with_changes(initial__i={"nodes": [0, 1, 2], "values": [0, 1, 0]})
    sc = parse_dict(doc)
    assert sc.tol_mass == pytest.approx(1e-12, rel=1e-9)
    with pytest.raises(ConfigError):
        parse_dict(with_changes(initial__i={"nodes": [0, 2, 1], "values": [0, 1, 0]}))
    sc = parse_dict(with_changes(initial__i={"exp": {"coef": 1.0, "rate": -1.0}}))
    assert sc.tol_mass > 0
    sc = parse_dict(with_changes(initial__i={"indicator": [2, 3], "left_open": True, "value": 2.0}))
    assert sc.tol_mass == pytest.approx(2e-12, rel=0.02)


def test_schema_file_is_current():
    assert (ROOT / "docs" / "config.schema.json").read_text() == dump_schema()


def test_schema_command(capsys):
    assert main(["schema"]) == 0
    assert json.loads(capsys.readouterr().out)["title"]


def _run_cli(args, out):
    return main([*args, "--output-dir", str(out), "--quiet"])


def test_sir_generic_passes_and_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = SCENARIOS / "sir_generic.json"
    assert _run_cli(["simulate", str(cfg)], a) == 0
    assert _run_cli(["simulate", str(cfg)], b) == 0
    for name in ("timeseries.csv", "report.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rep = json.loads((a / "report.json").read_text())
    assert rep["status"] == "pass"
    for name in ("sandwich", "conservation", "invariance", "monotone_pairs"):
        assert rep["checks"][name]["pass"] is True
        assert "worst_margin" in rep["checks"][name] and "location" in rep["checks"][name]
    assert rep["spectral"]["lambda_plus"] == pytest.approx(2.0, abs=1e-6)
    header = (a / "timeseries.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "t" and "S" in header


def test_hiv_generic_passes(tmp_path):
    assert _run_cli(["simulate", str(SCENARIOS / "hiv_generic.json")], tmp_path) == 0


def test_violated_probe_serializes_counterexample(tmp_path):
    assert _run_cli(["probe", str(SCENARIOS / "general_violated.json")], tmp_path) == 1
    rep = json.loads((tmp_path / "report.json").read_text())
    cex = rep["checks"]["assumption_probe"]["counterexample"]
    assert cex["kind"] == "C-monotone"
    assert np.all(np.array(cex["phi"]) <= np.array(cex["psi"]))


def test_increasing_general_scenario(tmp_path):
    assert _run_cli(["simulate", str(SCENARIOS / "general_increasing.json")], tmp_path) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["checks"]["trajectory_monotone"]["result"] == "Increasing"


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(with_changes(params__nu_S=-1.0)))
    assert _run_cli(["simulate", str(bad)], tmp_path) == 2
    assert _run_cli(["simulate", str(tmp_path / "missing.json")], tmp_path) == 2
    stiff = tmp_path / "stiff.json"
    stiff.write_text(json.dumps(with_changes(grid={"a_max": 10, "n_cells": 10}, horizon=1.0, params__eta=5.0, initial={"S": 3.0, "i": {"const": 0.0}})))
    assert _run_cli(["simulate", str(stiff)], tmp_path) == 3
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["error"]["type"] == "StepSizeError" and rep["error"]["step"] is not None


def test_output_dir_resolution(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(MINIMAL))
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("AGESTRUCT_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["bounds", str(cfg), "--quiet"]) == 0
    assert (tmp_path / "env" / "report.json").exists()
    monkeypatch.delenv("AGESTRUCT_OUTPUT_DIR")
    assert main(["bounds", str(cfg), "--quiet"]) == 0
    assert (tmp_path / "agestruct-out" / "report.json").exists()


def test_seed_override(tmp_path):
    assert _run_cli(["probe", str(SCENARIOS / "general_violated.json"), "--seed", "3"], tmp_path) == 1
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["config"]["seed"] == 3


def test_summary_printed(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(MINIMAL))
    assert main(["spectral", str(cfg), "--output-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "spectral (sir): pass" in out and "lambda_plus" in out


def test_levels_validated(tmp_path):
    assert main(["convergence", str(SCENARIOS / "sir_boundary.json"), "--levels", "1", "--output-dir", str(tmp_path)]) == 2


def test_convergence_boundary_profile_is_exact():
    sc = parse_config((SCENARIOS / "sir_boundary.json").read_bytes())
    table = convergence_study(sc.with_grid(300), 3)
    assert table["profile_exact"]
    assert max(table["profile_diff"]) <= 1e-12


def test_convergence_frozen_sir_residual_order():
    doc = with_changes(grid={"a_max": 20, "n_cells": 1000}, horizon=2.0, params__nu_S=0.5, initial={"S": 1.0, "i": {"indicator": [0, 1]}})
    table = convergence_study(parse_dict(doc), 3)
    assert all(0.8 <= o <= 1.2 for o in table["conservation_order"])


def test_convergence_hiv_V_order():
    doc = json.loads((SCENARIOS / "hiv_generic.json").read_text())
    doc["grid"] = {"a_max": 10, "n_cells": 200}
    doc["horizon"] = 5.0
    table = convergence_study(parse_dict(doc), 3)
    assert table["solution_quantity"] == "V"
    assert all(0.8 <= o <= 1.2 for o in table["solution_order"])
