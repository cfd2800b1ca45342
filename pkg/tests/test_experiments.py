import json

import numpy as np
import pytest

from hslod.experiments import (ExperimentConfig, convergence_slope, piecewise_rhs, run, smooth_rhs,
                               two_significant)
from hslod.mesh import ConfigurationError

SMALL = {"fine_exponent": 5, "num_levels": 3}


def test_smooth_rhs_values():
    assert smooth_rhs(np.array([0.5, 0.5])) == pytest.approx(2 * np.pi**2)
    assert smooth_rhs(np.array([[0.0, 0.3], [0.7, 1.0]])) == pytest.approx([0.0, 0.0], abs=1e-12)


def test_piecewise_rhs_structure():
    f = piecewise_rhs(2, 5, 0)
    assert f.values.size == 32 * 32
    assert np.abs(f.values).max() <= 6.0
    # deterministic per seed and sensitive to it
    np.testing.assert_array_equal(f.values, piecewise_rhs(2, 5, 0).values)
    assert not np.array_equal(f.values, piecewise_rhs(2, 5, 1).values)
    # the level-0 part is one constant: total mean equals that constant plus the finer means
    assert f.grid().shape == (32, 32)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"fine_exponent": 9})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"method": "gamblets"})
    cfg = ExperimentConfig.from_dict({"fine_exponent": 9, "paper_scale": True, "num_levels": 3})
    assert cfg["coefficient"]["beta"] == 100.0


def test_seed_only_changes_realization():
    a = ExperimentConfig.from_dict({**SMALL, "coefficient": {"seed": 1}})
    b = ExperimentConfig.from_dict({**SMALL, "coefficient": {"seed": 2}})
    assert a.hierarchy() == b.hierarchy()
    assert a.coefficient().digest() != b.coefficient().digest()
    assert a.digest() != b.digest()


def test_run_writes_artifacts(tmp_path):
    rep = run({**SMALL, "output_dir": str(tmp_path)})
    assert (tmp_path / "errors.csv").read_text().splitlines()[0] == "level,H,rel_energy_error"
    assert len((tmp_path / "errors.csv").read_text().splitlines()) == 1 + 4
    assert (tmp_path / "blocks.csv").read_text().startswith("level,H,kappa,lambda_min,lambda_max\n")
    assert (tmp_path / "nnz.csv").read_text().startswith("stage,nnz\n")
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["config"]["fine_exponent"] == 5 and data["config_hash"] == rep.config_hash
    assert (tmp_path / "errors.svg").read_text().startswith("<svg")
    errs = [e["rel_energy_error"] for e in rep.errors]
    assert errs[-1] < errs[0]


def test_determinism(tmp_path):
    for name in ("a", "b"):
        run({**SMALL, "rhs": {"kind": "piecewise"}, "output_dir": str(tmp_path / name)})
    for f in ("errors.csv", "blocks.csv", "nnz.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_helpers():
    assert two_significant(1234.0) == 1200.0
    assert two_significant(0.0123456) == 0.012
    H = [0.5, 0.25, 0.125]
    assert convergence_slope(H, [h**2 for h in H]) == pytest.approx(2.0)
