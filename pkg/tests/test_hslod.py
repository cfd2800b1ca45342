import numpy as np
import pytest

from hslod.coeff import random_piecewise_constant
from hslod.hslod import RankDeficiencyError, build_basis, build_level
from hslod.mesh import build_hierarchy
from hslod.oracle import GlobalFineSystem, global_kernel_basis


@pytest.fixture(scope="module")
def global_basis():
    h = build_hierarchy(2, 0, 3, 5)
    c = random_piecewise_constant(5, 1, 100, 0)
    return h, c, build_basis(h, c, order=10)


def test_level_sizes(global_basis):
    h, _, b = global_basis
    assert b.level_sizes == [h.num_basis(l) for l in h.levels]
    assert len(b) == h.num_elements(h.L)


def test_unit_energy_and_cross_level_orthogonality(global_basis):
    h, c, b = global_basis
    sys = GlobalFineSystem(h, c)
    Phi = b.basis_matrix()
    A = (Phi.T @ (sys.full_stiffness @ Phi)).toarray()
    np.testing.assert_allclose(np.diag(A), 1.0, atol=1e-12)
    for r in b.level_ranges[1:]:
        assert np.abs(A[r.start : r.stop, : r.start]).max() < 1e-12


def test_companions_span_the_global_kernel(global_basis):
    h, c, b = global_basis
    sys = GlobalFineSystem(h, c)
    for level in range(1, h.L + 1):
        kern, _ = global_kernel_basis(h, c, level, sys)
        comps = np.zeros((h.num_elements(level), len(b.levels[level])))
        for j, f in enumerate(b.levels[level]):
            comps[h.box_elements(level, f.companion.box), j] = f.companion.values
        assert np.linalg.matrix_rank(comps) == kern.shape[1]
        assert np.abs(comps - kern @ (kern.T @ comps)).max() < 1e-12 * np.abs(comps).max()


def test_local_qr_orthogonality(global_basis):
    h, _, b = global_basis
    for level in range(1, h.L + 1):
        funcs = b.levels[level]
        nb = 2**h.dim - 1
        for start in range(0, len(funcs), nb):
            group = funcs[start : start + nb]
            norms = np.array([b.slod[level][T].norm for T in group[0].support])
            Q = np.stack([f.coeffs / norms * f.norm for f in group], axis=1)
            np.testing.assert_allclose(Q.T @ Q, np.eye(nb), atol=1e-10)


def test_exact_case_projection_diagnostics(global_basis):
    h, _, b = global_basis
    for lev in b.diagnostics["levels"][1:]:
        assert lev["lambda_min_ptp_orthogonalized"] == pytest.approx(1.0, rel=1e-9)
        assert lev["max_lsq_residual"] == pytest.approx(0.5)


@pytest.mark.parametrize("dim,fine", [(1, 7), (2, 5)])
def test_restricted_rows_are_exact(dim, fine):
    h = build_hierarchy(dim, 0, 3, fine)
    c = random_piecewise_constant(fine, 1, 100, 0, dim=dim)
    b = build_basis(h, c, order=10, rows="restricted")
    for lev in b.diagnostics["levels"][1:]:
        assert lev["max_lsq_residual"] <= 1e-9
        # one child per parent is dropped, leaving 2**d - 1 unit rows per function group
        assert lev["lambda_min_ptp"] == pytest.approx(2.0 if dim == 1 else 1.0, rel=1e-9)


def test_localized_basis_close_to_orthogonal():
    h = build_hierarchy(2, 0, 3, 6)
    c = random_piecewise_constant(6, 1, 100, 1)
    b = build_basis(h, c, order=2)
    sys = GlobalFineSystem(h, c)
    Phi = b.basis_matrix()
    A = (Phi.T @ (sys.full_stiffness @ Phi)).tocsr()
    r = b.level_ranges[3]
    assert abs(A[r.start : r.stop, : r.start]).max() < 0.1


def test_bad_arguments():
    h = build_hierarchy(2, 0, 1, 3)
    c = random_piecewise_constant(3, 1, 10, 0)
    with pytest.raises(ValueError):
        build_level([], h, c, 1, 0)
    with pytest.raises(ValueError):
        build_basis(h, c, order=[1, 2, 3])
    with pytest.raises(ValueError):
        build_basis(h, c, rows="none")


def test_rank_deficiency_is_named():
    assert issubclass(RankDeficiencyError, np.linalg.LinAlgError)
