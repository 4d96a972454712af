import json
import logging
import os

import pytest
from click.testing import CliRunner

from lagrangian.barrier_ode import RateFit
from lagrangian.errors import KindError, SchemaError
from lagrangian.reports import ExperimentConfig, RunRecord, compare_runs, export_csv, run, validate_config, verify_manifest
from lml import cli
from utils.file_handler import read_csv

DIRICHLET_DOC = {
    "schema_version": "1.0",
    "mode": "dirichlet",
    "params": {"a": [1.0, 1.0, 1.0], "beta": 4.0},
    "envelope": {"c": 0.0},
    "solver": {"s_levels": [0.5], "h": 0.125},
}


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()


def _write_config(path, doc):
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return str(path)


def test_schema_reports_line_numbers():
    text = '{\n  "schema_version": "1.0",\n  "mode": "barriers",\n  "params": {"a": [1, 1, 1], "beta": -1},\n  "envelope": {"c": 0.1}\n}'
    with pytest.raises(SchemaError) as info:
        validate_config(json.loads(text), text)
    assert any(d.startswith("line 4: params/beta") for d in info.value.diagnostics)


def test_dirichlet_config_needs_solver():
    doc = {k: v for k, v in DIRICHLET_DOC.items() if k != "solver"}
    with pytest.raises(SchemaError) as info:
        ExperimentConfig.from_dict(doc)
    assert any("solver" in d for d in info.value.diagnostics)


def test_unknown_keys_are_rejected():
    with pytest.raises(SchemaError):
        validate_config({**DIRICHLET_DOC, "verbose": True})


def test_config_hash_ignores_output_dir():
    a = ExperimentConfig.from_dict(DIRICHLET_DOC)
    b = ExperimentConfig.from_dict({**DIRICHLET_DOC, "output_dir": "elsewhere"})
    c = ExperimentConfig.from_dict({**DIRICHLET_DOC, "seed": 7})
    assert a.config_hash == b.config_hash
    assert a.config_hash != c.config_hash
    assert a.phase_params().is_isotropic
    assert a.betas() == [4.0]


def test_selfcheck_command(tmp_path):
    out = tmp_path / "selfcheck"
    result = CliRunner().invoke(cli, ["selfcheck", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "PASSED" in result.output
    record = RunRecord.load(str(out / "run_record.json"))
    assert record.passed
    assert record.checks
    assert verify_manifest(record, str(out)) == []
    assert (out / "summary.json").exists()


def test_bad_config_exits_with_code_2(tmp_path):
    doc = {k: v for k, v in DIRICHLET_DOC.items() if k != "solver"}
    cfg = _write_config(tmp_path / "bad.json", doc)
    result = CliRunner().invoke(cli, ["dirichlet", "--config", cfg, "--out", str(tmp_path / "run")])
    assert result.exit_code == 2
    assert "line" in result.output


def test_mode_mismatch_exits_with_code_2(tmp_path):
    cfg = _write_config(tmp_path / "cfg.json", DIRICHLET_DOC)
    result = CliRunner().invoke(cli, ["barriers", "--config", cfg, "--out", str(tmp_path / "run")])
    assert result.exit_code == 2


def test_non_json_config_is_a_schema_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"mode": ', encoding="utf-8")
    with pytest.raises(SchemaError) as info:
        ExperimentConfig.load(str(path))
    assert info.value.diagnostics[0].startswith("line 1")


@pytest.fixture(scope="module")
def dirichlet_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("dirichlet")
    config = ExperimentConfig.from_dict(DIRICHLET_DOC)
    first = run(config, out_dir=str(base / "a"), threads=1)
    second = run(config, out_dir=str(base / "b"), threads=1)
    return base, first, second


def test_dirichlet_run_passes(dirichlet_runs):
    base, first, _ = dirichlet_runs
    assert first.exit_code == 0
    assert first.checks["s0p5:quadratic"]
    assert first.checks["s0p5:oracle"]
    assert first.checks["s0p5:sandwich"]
    assert verify_manifest(first, str(base / "a")) == []
    assert {"grid_s0p5", "dirichlet_summary"} <= set(first.artifacts)


def test_repeated_runs_are_byte_identical(dirichlet_runs):
    base, first, second = dirichlet_runs
    a = (base / "a" / first.artifacts["grid_s0p5"]["path"]).read_bytes()
    b = (base / "b" / second.artifacts["grid_s0p5"]["path"]).read_bytes()
    assert a == b
    assert first.artifacts["grid_s0p5"]["sha256"] == second.artifacts["grid_s0p5"]["sha256"]
    report = compare_runs(first, second)
    assert report["diffs"] == []
    assert report["within_tolerance"]
    assert len(report["convergence"]) == 1
    assert report["convergence"][0]["h_a"] == report["convergence"][0]["h_b"] == 0.125


def test_compare_command(dirichlet_runs, tmp_path):
    base, _, _ = dirichlet_runs
    out = tmp_path / "diff.json"
    result = CliRunner().invoke(
        cli, ["compare", str(base / "a" / "run_record.json"), str(base / "b" / "run_record.json"), "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    assert json.loads(out.read_text())["manifest_problems"] == []


def test_compare_rejects_different_modes(dirichlet_runs, tmp_path):
    base, first, _ = dirichlet_runs
    other = RunRecord("selfcheck", "x" * 64, {"mode": "selfcheck"})
    with pytest.raises(SchemaError):
        compare_runs(first, other)
    path = tmp_path / "run_record.json"
    path.write_text(json.dumps(other.to_dict()), encoding="utf-8")
    result = CliRunner().invoke(cli, ["compare", str(base / "a" / "run_record.json"), str(path)])
    assert result.exit_code == 2


def test_compare_applies_tolerances():
    summary_a = {"levels": [{"s_level": 1.0, "h": 0.1, "residual": 1e-9, "oracle_error": None}]}
    summary_b = {"levels": [{"s_level": 1.0, "h": 0.1, "residual": 2e-9, "oracle_error": None}]}
    a = RunRecord("dirichlet", "h", {}, summary=summary_a)
    b = RunRecord("dirichlet", "h", {}, summary=summary_b)
    strict = compare_runs(a, b)
    assert [d["path"] for d in strict["diffs"]] == ["levels/0/residual"]
    assert not strict["within_tolerance"]
    assert compare_runs(a, b, {"residual": 1e-8})["within_tolerance"]


def test_coarse_grid_writes_error_report(tmp_path):
    doc = {**DIRICHLET_DOC, "solver": {"s_levels": [0.5], "h": 0.6}}
    cfg = _write_config(tmp_path / "coarse.json", doc)
    out = tmp_path / "run"
    result = CliRunner().invoke(cli, ["dirichlet", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 2
    report = json.loads((out / "error_report.json").read_text())
    assert report["type"] == "ConfigurationError"
    assert RunRecord.load(str(out / "run_record.json")).exit_code == 2


def test_export_fit_as_single_row(tmp_path):
    fit = RateFit(1.5, False, 0.99999, (1e3, 1e9), prefactor=0.1, bounds=(0.09, 0.11))
    path = export_csv(fit, str(tmp_path / "fit.csv"))
    frame = read_csv(path)
    assert len(frame) == 1
    assert list(frame.columns)[:4] == ["model", "exponent", "log_flag", "r2"]
    assert bool(frame["accepted"][0])
    with open(path, "rb") as fh:
        raw = fh.read()
    assert b"\r\n" not in raw
    assert b"0.10000000000000001" in raw


def test_export_rejects_unknown_artifacts(tmp_path):
    with pytest.raises(KindError):
        export_csv({"a": 1}, str(tmp_path / "x.csv"))
    assert not os.path.exists(tmp_path / "x.csv")
