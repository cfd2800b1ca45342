import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from hslod.coeff import constant_coefficient, random_piecewise_constant
from hslod.compress import (BlockStiffness, CompressedOperator, StageError, block_truncate, cg_block_inverse,
                            nnz_bound, stage_error_bounds, threshold)
from hslod.experiments import smooth_rhs
from hslod.fem import Q0Function
from hslod.hslod import build_basis
from hslod.mesh import build_hierarchy
from hslod.oracle import GlobalFineSystem


def planted_blocks(rng, sizes, coupling):
    """SPD matrix with dominant diagonal blocks and weak random coupling."""
    n = sum(sizes)
    B = rng.standard_normal((n, n)) * coupling
    A = B @ B.T
    start = 0
    for s in sizes:
        G = rng.standard_normal((s, s))
        A[start : start + s, start : start + s] += G @ G.T + s * np.eye(s)
        start += s
    ranges, start = [], 0
    for s in sizes:
        ranges.append(range(start, start + s))
        start += s
    return A, ranges


@given(st.integers(0, 10_000), st.lists(st.integers(1, 8), min_size=2, max_size=4),
       st.floats(0.01, 1.0))
def test_block_truncation_bound(seed, sizes, coupling):
    rng = np.random.default_rng(seed)
    A, ranges = planted_blocks(rng, sizes, coupling)
    st_ = BlockStiffness(sp.csr_matrix(A), ranges)
    check, rep = block_truncate(st_)
    b = rng.standard_normal(A.shape[0])
    x = np.linalg.solve(A, b)
    xbar = np.linalg.solve(check.toarray(), b)
    assert np.linalg.norm(x - xbar) <= rep.solution_bound(x) * (1 + 1e-10)


def test_block_truncate_report():
    A = sp.csr_matrix(np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]]))
    check, rep = block_truncate(BlockStiffness(A, [range(0, 1), range(1, 3)]))
    np.testing.assert_allclose(check.toarray(), [[4, 0, 0], [0, 3, 0.5], [0, 0.5, 2]])
    assert rep.delta_norms == pytest.approx([1.0, 1.0])
    assert rep.lambda_min[0] == pytest.approx(4.0)
    assert rep.kappa[0] == 1.0


def test_threshold():
    S = sp.csr_matrix(np.array([[1.0, 1e-7, 0.0], [1e-7, 2.0, 3e-5], [0.0, 3e-5, 1.0]]))
    T, n_eps = threshold(S, 1e-5)
    assert T.nnz == 5 and n_eps == 2
    empty, n0 = threshold(sp.csr_matrix((2, 2)), 1e-5)
    assert empty.nnz == 0 and n0 == 0


def test_nnz_bound_values():
    assert nnz_bound(2, 2, 1) == 240
    assert nnz_bound(2, 1, 1) == 72


@pytest.fixture(scope="module")
def small_op():
    h = build_hierarchy(2, 0, 3, 5)
    c = random_piecewise_constant(5, 1, 100, 0)
    b = build_basis(h, c, order=2)
    return h, c, b, CompressedOperator(b, c)


def test_cg_iterate_converges_to_block_inverse(small_op):
    h, c, b, op = small_op
    S = cg_block_inverse(op.check, op.block_ranges, k=80)
    np.testing.assert_allclose(S.matrix.toarray(), np.linalg.inv(op.check.toarray()), atol=1e-8)


def test_stage_hierarchy_of_errors(small_op):
    h, c, b, op = small_op
    out = stage_error_bounds(op, smooth_rhs)
    for key in ("hat_check", "check_bar", "bar_eps"):
        assert out[key]["measured"] <= out[key]["bound"]
    assert out["hat_check"]["coefficient_error"] <= out["hat_check"]["coefficient_bound"]
    assert out["check_bar"]["delta_cg_exact"]


def test_nnz_accounting(small_op):
    _, _, _, op = small_op
    n = op.nnz()
    assert n["check"] <= n["hat"]
    assert n["eps"] <= n["bar"]


def test_check_equals_hat_for_orthogonal_basis():
    h = build_hierarchy(2, 0, 2, 4)
    c = random_piecewise_constant(4, 1, 100, 0)
    b = build_basis(h, c, order=10)
    op = CompressedOperator(b, c)
    f = Q0Function(1, h.domain_box(1), [1.0, -2.0, 0.5, 3.0])
    np.testing.assert_allclose(op.coefficients("check", op.load(f)), op.coefficients("hat", op.load(f)), atol=1e-12)


def test_resolved_source_is_exact():
    h = build_hierarchy(1, 0, 2, 6)
    c = random_piecewise_constant(6, 1, 100, 9, dim=1)
    b = build_basis(h, c, order=10)
    op = CompressedOperator(b, c, stages=("check",))
    f = Q0Function(2, h.domain_box(2), np.random.default_rng(0).uniform(-1, 1, 4))
    sys = GlobalFineSystem(h, c)
    uh = sys.fine_solve(f)
    u, _ = op.apply("check", f)
    assert sys.energy_norm(uh.values - u.values) <= 1e-8 * sys.energy_norm(uh)


def test_unknown_stage(small_op):
    with pytest.raises(ValueError):
        small_op[3].coefficients("tilde", np.zeros(len(small_op[2])))


def test_hat_limit_is_a_stage_error(small_op, monkeypatch):
    import hslod.compress as comp

    monkeypatch.setattr(comp, "HAT_LIMIT", 3)
    with pytest.raises(StageError) as exc:
        small_op[3].coefficients("hat", np.zeros(len(small_op[2])))
    assert exc.value.stage == "hat"


def test_cg_column_growth_on_constant_coefficient():
    h = build_hierarchy(2, 0, 3, 5)
    c = constant_coefficient(1.0)
    b = build_basis(h, c, order=1)
    op = CompressedOperator(b, c, stages=("check",))
    prev = 0
    for k in (1, 2, 3):
        S = cg_block_inverse(op.check, op.block_ranges, k)
        assert S.column_nnz.max() >= prev
        prev = S.column_nnz.max()
        assert np.all(S.column_nnz <= nnz_bound(2, 1, k))
