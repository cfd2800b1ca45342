import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hslod.coeff import (channel_coefficient, channel_function, constant_coefficient, load_coefficient,
                         random_piecewise_constant, save_coefficient)
from hslod.mesh import ConfigurationError


@given(st.integers(0, 2**31), st.floats(1.0, 1e5), st.sampled_from(["log-uniform", "uniform"]))
def test_random_in_range(seed, beta, dist):
    c = random_piecewise_constant(3, 1.0, beta, seed, distribution=dist)
    assert c.values.min() >= 1.0 and c.values.max() <= beta
    assert c.digest() == random_piecewise_constant(3, 1.0, beta, seed, distribution=dist).digest()


def test_seed_changes_values():
    a = random_piecewise_constant(4, 1, 100, 0)
    b = random_piecewise_constant(4, 1, 100, 1)
    assert a.digest() != b.digest()


def test_fine_values_repeat_and_readonly():
    c = random_piecewise_constant(2, 1, 10, 3)
    f = c.fine_values(4)
    assert f.shape == (16, 16)
    np.testing.assert_array_equal(f[::4, ::4], c.values)
    with pytest.raises(ValueError):
        f[0, 0] = 1.0
    with pytest.raises(ConfigurationError):
        c.fine_values(1)


def test_evaluate_axis_order():
    vals = np.array([[1.0, 2.0], [3.0, 4.0]])  # rows are y
    from hslod.coeff import CoefficientField

    c = CoefficientField(2, 1, vals, 1.0, 4.0)
    assert c.evaluate([0.75, 0.25]) == 2.0
    assert c.evaluate([0.25, 0.75]) == 3.0


def test_invalid_fields():
    with pytest.raises(ConfigurationError):
        constant_coefficient(0.0)
    with pytest.raises(ConfigurationError):
        random_piecewise_constant(2, 2.0, 1.0, 0)
    with pytest.raises(ConfigurationError):
        channel_coefficient(100.0, dim=3)


def test_channel_values():
    c = channel_coefficient(1000.0)
    assert c.min_value == 1.0
    assert c.max_value == 1000.0
    assert channel_function([0.26, 0.5], 1000.0) == pytest.approx(500.5)
    assert channel_function([0.26, 0.26], 1000.0) == pytest.approx(1000.0)
    assert channel_function([0.1, 0.1], 1000.0) == pytest.approx(1.0)
    # strips are two cells wide in total out of 32 in each direction, over 30 cells of length
    strip = (c.values > 1.0).sum()
    assert strip == 2 * 2 * 30 - 4


def test_save_load_roundtrip(tmp_path):
    c = random_piecewise_constant(3, 1, 100, 5)
    save_coefficient(c, tmp_path / "a.csv")
    back = load_coefficient(tmp_path / "a.csv")
    assert back.digest() == c.digest()
