import csv
import json

import pytest

from junction_mfg import cli
from junction_mfg import verify as suites


def _run(tmp_path, *args):
    return cli.main(list(args))


def _write(tmp_path, raw, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


SMALL_EXAMPLE = {"scenario": "example_dirac", "grid": {"dr": 0.05, "dt": 0.05}, "solver": {"particles": 40}}


def test_scenarios_lists_presets(capsys):
    assert cli.main(["scenarios"]) == 0
    out = capsys.readouterr().out
    assert "example_dirac" in out and "congestion" in out


def test_solve_hj_zero_costs(tmp_path):
    cfg = _write(tmp_path, {"scenario": "constant_zero"})
    assert cli.main(["solve-hj", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["max_abs_u"] == 0.0 and summary["bound_ok"]


def test_solve_hj_example_value_row(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["solve-hj", "--scenario", "example_dirac", "--out", str(out)]) == 0
    with open(out / "value.csv") as fh:
        rows = [r for r in csv.DictReader(fh) if r["edge"] == "2" and float(r["t"]) == 0.0 and abs(float(r["r"]) - 0.5) < 1e-12]
    assert len(rows) == 1
    assert abs(float(rows[0]["u"])) <= 0.05


def test_solve_hj_records_adjusted_dt(tmp_path):
    cfg = _write(tmp_path, {"scenario": "constant_zero", "grid": {"dt": 0.3}})
    assert cli.main(["solve-hj", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    grid = json.loads((tmp_path / "o" / "summary.json").read_text())["grid"]
    assert grid["requested_dt"] == 0.3 and grid["dt"] == 0.25 and grid["adjusted"]


def test_mfg_example_vertex_mass(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["mfg", "--scenario", "example_dirac", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["vertex_mass_at_0.7"] >= 0.45
    assert summary["converged"]
    lines = (out / "iterations.jsonl").read_text().splitlines()
    assert json.loads(lines[0]) == {"exploitability": json.loads(lines[0])["exploitability"], "iter": 0, "w1_step": None}
    with open(out / "flow.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["t", "edge", "bin_lo", "bin_hi", "mass"]


def test_mfg_constant_zero_converges_at_first_iteration(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["mfg", "--scenario", "constant_zero", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["iterations"] == 1 and summary["final_exploitability"] == 0.0


def test_mfg_non_convergence_is_success(tmp_path):
    cfg = _write(tmp_path, {"scenario": "congestion", "grid": {"dr": 0.1, "dt": 0.1}, "solver": {"max_iter": 2, "particles": 20}})
    assert cli.main(["mfg", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["converged"] is False


def test_reruns_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL_EXAMPLE)
    for name, threads in (("a", "1"), ("b", "4")):
        assert cli.main(["mfg", "--config", cfg, "--out", str(tmp_path / name / "m"), "--threads", threads]) == 0
        assert cli.main(["solve-hj", "--config", cfg, "--out", str(tmp_path / name / "h")]) == 0
        assert cli.main(["verify", "--config", cfg, "--suite", "oracle", "--out", str(tmp_path / name / "v"), "--threads", threads]) == 0
    for sub in ("m", "h", "v"):
        for f in sorted((tmp_path / "a" / sub).iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / sub / f.name).read_bytes(), f.name


@pytest.mark.parametrize("suite", ["oracle", "w1", "dpp"])
def test_verify_suites_pass(tmp_path, suite):
    cfg = _write(tmp_path, {**SMALL_EXAMPLE, "verify": {"instances": 100 if suite == "w1" else 50}})
    assert cli.main(["verify", "--config", cfg, "--suite", suite, "--out", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "verify.json").read_text())
    assert report["pass"] and report["results"][suite]["pass"]


def test_verify_holder_on_example(tmp_path):
    assert cli.main(["verify", "--scenario", "example_dirac", "--suite", "holder", "--out", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "verify.json").read_text())
    assert report["results"]["holder"]["max_ratio"] <= 1.0


def test_verify_failure_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(suites, "w1_suite", lambda n: {"pass": False, "max_abs_difference": 1.0})
    assert cli.main(["verify", "--scenario", "example_dirac", "--suite", "w1", "--out", str(tmp_path / "o")]) == 3


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, {"scenario": "example_dirac", "grid": {"dr": -1}})
    assert cli.main(["solve-hj", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "grid.dr" in capsys.readouterr().err
    assert cli.main(["solve-hj", "--out", str(tmp_path / "o")]) == 2
    short = _write(tmp_path, {"scenario": "example_dirac", "geometry": {"edge_truncation": 1.0}}, "short.json")
    assert cli.main(["mfg", "--config", short, "--out", str(tmp_path / "o")]) == 2
