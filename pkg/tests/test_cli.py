import json

import pytest

from collapsed_sbp.cli import main
from collapsed_sbp.harness import read_csv


def write_config(tmp_path, **kw):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(kw))
    return path


def test_verify_operators(capsys):
    assert main(["verify-operators", "--shape", "triangle", "--p", "4"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "sbp" in out.lower()


def test_verify_negative_control(capsys, tmp_path):
    assert main(["verify-operators", "--p", "3", "--jacobi-eta2", "--out-dir", str(tmp_path)]) == 1
    assert "FAIL" in capsys.readouterr().out
    assert json.loads((tmp_path / "verify.json").read_text())["passed"] is False


def test_run_writes_record_and_trace(tmp_path):
    cfg = write_config(tmp_path, kind="residual-trace", p=2, M=2, T=0.2)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out-dir", str(out), "--seed", "3"]) == 0
    rec = json.loads((out / "record.json").read_text())
    assert rec["config"]["seed"] == 3
    assert len(read_csv(out / "trace.csv")) == 101


def test_sweep_writes_orders(tmp_path):
    cfg = write_config(tmp_path, kind="h-sweep", p=2, M_values=[2, 4], dt_halving=False)
    assert main(["sweep", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "convergence.csv")
    assert [r["M"] for r in rows] == [2, 4] and rows[1]["order"] > 2


def test_spectral_radius(tmp_path, capsys):
    cfg = write_config(tmp_path, kind="spectral-radius", p=2, M=2)
    assert main(["spectral-radius", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "record.json").read_text())["spectral_radius"] > 0
    assert "spectral radius" in capsys.readouterr().out


def test_export_operators(tmp_path):
    assert main(["export-operators", "--shape", "tetrahedron", "--p", "2",
                 "--out-dir", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "operators.json").read_text())
    assert data["config"]["shape"] == "tetrahedron"


def test_bad_config_reports_field(tmp_path, capsys):
    cfg = write_config(tmp_path, shape="square")
    assert main(["run", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "configuration" in err and "'shape'" in err and str(cfg) in err


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 3


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
