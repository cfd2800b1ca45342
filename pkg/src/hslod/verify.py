"""Quick built-in invariant suite behind ``hslod verify``."""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from .coeff import constant_coefficient, random_piecewise_constant
from .compress import CompressedOperator, assemble_stiffness_hslod, block_truncate, cg_block_inverse, nnz_bound
from .fem import Q0Function, box_stiffness, cell_means, coarsen_means
from .hslod import build_basis
from .io import load_basis, save_basis
from .lod import compute_patch_lod
from .mesh import PatchKind, build_hierarchy, build_patch
from .oracle import GlobalFineSystem

SUITES = ("invariants",)


def _stiffness_kernel():
    h = build_hierarchy(2, 0, 2, 4)
    c = random_piecewise_constant(4, 1.0, 10.0, 0)
    K = box_stiffness(c.fine_values(4), h.domain_box_fine(), h.h)
    sym = abs(K - K.T).max() < 1e-12
    rows = np.abs(K @ np.ones(K.shape[0])).max() < 1e-10
    return sym and rows, "symmetric with constant kernel"


def _lod_projection():
    h = build_hierarchy(2, 0, 2, 5)
    c = random_piecewise_constant(5, 1.0, 100.0, 1)
    p = build_patch(h, PatchKind.LOD, 2, h.element_index(2, (1, 2)), 1)
    lod = compute_patch_lod(h, c, p)
    vals = lod.system.full_values(lod.harmonics @ lod.lod_coefficients())
    means = coarsen_means(cell_means(vals, p.fine_box), h.ratio(2), 2)
    P = means.reshape(-1, means.shape[-1])
    err = float(np.abs(P - np.eye(P.shape[0])).max())
    return err < 1e-8, f"max |average(psi_K) - chi_K| = {err:.1e}"


def _resolved_exactness():
    h = build_hierarchy(2, 0, 2, 5)
    c = random_piecewise_constant(5, 1.0, 10.0, 2)
    basis = build_basis(h, c, order=4)
    op = CompressedOperator(basis, c, stages=("check",))
    rng = np.random.default_rng(0)
    f = Q0Function(2, h.domain_box(2), rng.uniform(-1, 1, 16))
    sys = GlobalFineSystem(h, c)
    uh = sys.fine_solve(f)
    u, _ = op.apply("check", f)
    err = sys.energy_norm(uh.values - u.values) / sys.energy_norm(uh)
    return err < 1e-8, f"relative energy error {err:.1e}"


def _level_zero_kappa():
    h = build_hierarchy(2, 0, 2, 5)
    c = random_piecewise_constant(5, 1.0, 100.0, 3)
    basis = build_basis(h, c, order=2)
    _, rep = block_truncate(assemble_stiffness_hslod(basis, c), full_spectrum=False)
    return abs(rep.kappa[0] - 1.0) < 1e-12, f"kappa(level 0) = {rep.kappa[0]:.3g}"


def _cg_nnz():
    h = build_hierarchy(2, 0, 3, 5)
    c = constant_coefficient(1.0)
    basis = build_basis(h, c, order=1)
    st = assemble_stiffness_hslod(basis, c)
    worst = 0
    for k in (1, 2):
        S = cg_block_inverse(st.block_diagonal, st.block_ranges, k)
        worst = max(worst, int(S.column_nnz.max()) - nnz_bound(2, 1, k))
    return worst <= 0, "CG column nnz within the bound"


def _cache_roundtrip():
    h = build_hierarchy(1, 0, 2, 5)
    c = random_piecewise_constant(5, 1.0, 10.0, 4, dim=1)
    basis = build_basis(h, c, order=1)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "b.bin"
        save_basis(basis, path)
        back = load_basis(path, c.digest())
    diff = abs(back.basis_matrix() - basis.basis_matrix())
    ok = (diff.max() if diff.nnz else 0.0) == 0.0
    return ok, "basis cache round trip is exact"


CHECKS = {
    "stiffness_kernel": _stiffness_kernel,
    "lod_projection": _lod_projection,
    "resolved_exactness": _resolved_exactness,
    "level_zero_kappa": _level_zero_kappa,
    "cg_nnz": _cg_nnz,
    "cache_roundtrip": _cache_roundtrip,
}


def run_suite(name="invariants", out=print) -> tuple[int, int]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
    passed = 0
    for check_name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash counts as a failure
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        passed += bool(ok)
        out(f"{'PASS' if ok else 'FAIL'} {check_name}: {detail}")
    out(f"{passed}/{len(CHECKS)} passed")
    return passed, len(CHECKS)
