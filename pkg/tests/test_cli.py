import json

import pytest

from hslod.cli import main

SMALL = ["--set", "fine_exponent=5", "--set", "num_levels=3", "--threads", "1", "-q"]


@pytest.fixture(autouse=True)
def cache(tmp_path, monkeypatch):
    monkeypatch.setenv("HSLOD_CACHE_DIR", str(tmp_path / "cache"))


def test_unknown_flag_prints_usage(capsys):
    assert main(["solve", "--bogus"]) == 1
    assert "usage:" in capsys.readouterr().err


def test_missing_subcommand(capsys):
    assert main([]) == 1


def test_validation_error(capsys):
    assert main(["solve", "--set", "fine_exponent=9"]) == 1
    assert "paper scale" in capsys.readouterr().err


def test_bad_config_file(tmp_path):
    (tmp_path / "c.toml").write_text("num_levels = [")
    assert main(["solve", "--config", str(tmp_path / "c.toml")]) == 1


def test_numerical_failure_names_stage(tmp_path, capsys, monkeypatch):
    import hslod.compress as comp

    monkeypatch.setattr(comp, "HAT_LIMIT", 2)
    assert main(["solve", "--stage", "hat", "--out", str(tmp_path), *SMALL]) == 2
    assert "stage hat" in capsys.readouterr().err


def test_experiment_from_config(tmp_path):
    cfg = tmp_path / "fig.toml"
    cfg.write_text('fine_exponent = 5\nnum_levels = 3\n[rhs]\nkind = "piecewise"\n')
    assert main(["experiment", "--config", str(cfg), "--out", str(tmp_path / "o"), "--threads", "1", "-q"]) == 0
    rows = (tmp_path / "o" / "errors.csv").read_text().splitlines()
    assert len(rows) == 1 + 4
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["config"]["rhs"]["kind"] == "piecewise"


def test_build_solve_compress_export(tmp_path):
    out = str(tmp_path)
    assert main(["build-basis", "--out", out, *SMALL]) == 0
    assert (tmp_path / "basis.bin").exists()
    assert main(["solve", "--stage", "eps", "--out", out, *SMALL]) == 0
    assert (tmp_path / "solution.csv").read_text().startswith("x1,x2,u\n")
    assert main(["compress", "--out", out, *SMALL]) == 0
    assert (tmp_path / "nnz.csv").exists()
    assert main(["export", "--matrix", "stiffness", "--stage", "check", "--out", out, *SMALL]) == 0
    assert (tmp_path / "stiffness_check.mtx").read_text().startswith("%%MatrixMarket")
    assert main(["export", "--matrix", "inverse", "--stage", "hat", "--out", out, *SMALL]) == 1


def test_seed_override(tmp_path):
    for s in ("1", "2"):
        assert main(["compress", "--seed", s, "--out", str(tmp_path / s), *SMALL]) == 0
    a = json.loads((tmp_path / "1" / "report.json").read_text())["config"]
    b = json.loads((tmp_path / "2" / "report.json").read_text())["config"]
    assert a["coefficient"]["seed"] == 1 and b["coefficient"]["seed"] == 2
    a["coefficient"]["seed"] = b["coefficient"]["seed"] = a["rhs"]["seed"] = b["rhs"]["seed"] = 0
    a["output_dir"] = b["output_dir"] = None
    assert a == b


def test_verify(capsys):
    assert main(["verify", "--suite", "invariants", "-q"]) == 0
    assert "6/6 passed" in capsys.readouterr().out
    assert main(["verify", "--suite", "other", "-q"]) == 1
