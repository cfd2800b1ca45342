import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hslod.coeff import random_piecewise_constant
from hslod.fem import box_stiffness, energy_norm, load_vector, local_inverse_apply
from hslod.lod import compute_patch_lod
from hslod.mesh import PatchKind, build_hierarchy, build_patch
from hslod.oracle import GlobalFineSystem
from hslod.slod import build_slod_function, global_counterpart, slod_level_basis

H = build_hierarchy(2, 0, 3, 5)


def _lod(seed, center, order=2):
    c = random_piecewise_constant(5, 1.0, 100.0, seed)
    p = build_patch(H, PatchKind.LOD, 3, center, order)
    lod = compute_patch_lod(H, c, p)
    return c, p, lod, int(np.flatnonzero(lod.system.elements == center)[0])


@given(st.integers(0, 30), st.integers(0, 63), st.sampled_from(["slod", "lod", "unstabilized"]))
def test_function_invariants(seed, center, mode):
    c, p, lod, t = _lod(seed, center)
    s = build_slod_function(lod, t, 0.5, mode)
    assert energy_norm(s.values, c) == pytest.approx(1.0, rel=1e-9)
    if mode != "unstabilized":
        assert s.stability_deviation <= 0.5 + 1e-9
    # the function is the local solution for its companion
    local = local_inverse_apply(H, p, c, s.companion)
    assert np.abs(local.values - s.values.values).max() <= 1e-9 * np.abs(s.values.values).max()
    # independently assembled conormal residual on the inner boundary
    K = box_stiffness(c.fine_values(5), s.box, H.h)
    r = K @ s.values.values - load_vector(H, s.companion, s.box)
    assert np.linalg.norm(r[lod.system.sigma]) == pytest.approx(s.boundary_residual, rel=1e-6, abs=1e-14)
    # averages of the unnormalized function are concentrated on the center
    assert s.projection[t] == pytest.approx(s.z)


def test_correction_reduces_boundary_residual():
    for center in (0, 9, 27, 36):
        _, _, lod, t = _lod(3, center)
        plain = build_slod_function(lod, t, mode="lod")
        corr = build_slod_function(lod, t, mode="slod")
        assert plain.kept_rank == 0
        assert corr.boundary_residual <= plain.boundary_residual


def test_residual_decays_with_patch_order():
    res = [build_slod_function(*_lod(1, 27, m)[2:], mode="slod").boundary_residual for m in (1, 2, 3)]
    assert res[0] > res[1] > res[2]


def test_global_patch_is_unlocalized():
    c = random_piecewise_constant(5, 1, 100, 6)
    sys = GlobalFineSystem(H, c)
    for s in slod_level_basis(H, c, 2, 10)[:4]:
        assert s.boundary_residual == 0.0
        g = global_counterpart(H, s, c, sys)
        assert np.abs(g.values - s.values.to_global(H)).max() < 1e-12


def test_level_basis_ordered_by_cell():
    c = random_piecewise_constant(5, 1, 10, 0)
    funcs = slod_level_basis(H, c, 2, 1)
    assert [f.center for f in funcs] == list(range(16))


def test_unknown_mode():
    _, _, lod, t = _lod(0, 0)
    with pytest.raises(ValueError):
        build_slod_function(lod, t, mode="bogus")
