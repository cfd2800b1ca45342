import numpy as np
import pytest

from hslod.coeff import random_piecewise_constant
from hslod.hslod import build_basis
from hslod.io import load_basis, read_basis_header, save_basis, write_csv, write_json
from hslod.mesh import build_hierarchy


def test_csv_float_roundtrip(tmp_path):
    x = 0.1 + 0.2
    write_csv(tmp_path / "a.csv", ["k", "v"], [[1, x]])
    text = (tmp_path / "a.csv").read_text()
    assert text == f"k,v\n1,{x!r}\n"
    assert float(text.split(",")[-1]) == x


def test_json_numpy(tmp_path):
    write_json(tmp_path / "a.json", {"b": np.float64(1.5), "a": np.arange(2)})
    assert (tmp_path / "a.json").read_text().index('"a"') < (tmp_path / "a.json").read_text().index('"b"')


def test_basis_cache(tmp_path):
    h = build_hierarchy(2, 0, 2, 4)
    c = random_piecewise_constant(4, 1, 10, 0)
    b = build_basis(h, c, order=1)
    save_basis(b, tmp_path / "b.bin")
    hdr = read_basis_header(tmp_path / "b.bin")
    assert hdr["coefficient"] == c.digest() and hdr["config"]["order"] == [1, 1, 1]
    back = load_basis(tmp_path / "b.bin", c.digest())
    assert back.level_sizes == b.level_sizes
    with pytest.raises(ValueError, match="different coefficient"):
        load_basis(tmp_path / "b.bin", random_piecewise_constant(4, 1, 10, 1).digest())
    (tmp_path / "x.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_basis(tmp_path / "x.bin")
