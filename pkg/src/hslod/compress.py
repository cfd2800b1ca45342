"""Stiffness matrix of the hierarchical basis and the four stages of solution-operator compression.

Stages: ``hat`` (full Galerkin solve), ``check`` (cross-level entries dropped,
i.e. one independent solve per level), ``bar`` (each block inverse replaced by
k CG iterates), ``eps`` (small entries of that inverse discarded).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .fem import FineFunction, box_stiffness, load_vector
from .hslod import HierarchicalBasis
from .numerics import DENSE_LIMIT, CholeskyFactor, cg_multi, extremal_eigs, spectral_norm

STAGES = ("hat", "check", "bar", "eps")
DEFAULT_CG_ITERS = 7
DEFAULT_EPSILON = 1e-5
HAT_LIMIT = 50_000


class StageError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class BlockStiffness:
    full: sp.csr_matrix
    block_ranges: list[range]
    basis_matrix: sp.csc_matrix = field(repr=False, default=None)

    def block(self, level: int) -> sp.csr_matrix:
        r = self.block_ranges[level]
        return self.full[r.start : r.stop][:, r.start : r.stop].tocsr()

    @property
    def block_diagonal(self) -> sp.csr_matrix:
        return sp.block_diag([self.block(l) for l in range(len(self.block_ranges))], format="csr")

    @property
    def off_block(self) -> sp.csr_matrix:
        return (self.full - self.block_diagonal).tocsr()

    def level_of(self) -> np.ndarray:
        out = np.empty(self.full.shape[0], dtype=np.int64)
        for l, r in enumerate(self.block_ranges):
            out[r.start : r.stop] = l
        return out


def assemble_stiffness_hslod(basis: HierarchicalBasis, coeff) -> BlockStiffness:
    """Energy products of all basis pairs; only overlapping supports produce entries."""
    h = basis.hierarchy
    Phi = basis.basis_matrix()
    K = box_stiffness(coeff.fine_values(h.fine_exponent), h.domain_box_fine(), h.h)
    A = (Phi.T @ (K @ Phi)).tocsr()
    A = ((A + A.T) * 0.5).tocsr()
    A.sort_indices()
    return BlockStiffness(A, basis.level_ranges, Phi)


@dataclass
class TruncationReport:
    delta_norms: list[float]  # 2-norm of the cross-level rows of each block
    lambda_min: list[float]
    lambda_max: list[float]
    gershgorin: list[float]
    delta_norm: float
    lambda_min_full: float | None

    def lemma_factor(self) -> float:
        """sqrt(sum_i ||delta_i||^2 / lambda_min(A_ii)^2)."""
        return float(np.sqrt(sum(d**2 / l**2 for d, l in zip(self.delta_norms, self.lambda_min))))

    def solution_bound(self, x) -> float:
        return self.lemma_factor() * float(np.linalg.norm(x))

    @property
    def kappa(self) -> list[float]:
        return [hi / lo for lo, hi in zip(self.lambda_min, self.lambda_max)]

    def to_dict(self) -> dict:
        return {
            "delta_norms": self.delta_norms,
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "kappa": self.kappa,
            "gershgorin": self.gershgorin,
            "delta_norm": self.delta_norm,
            "lambda_min_full": self.lambda_min_full,
        }


def block_truncate(stiffness: BlockStiffness, full_spectrum: bool = True):
    """Keep same-level entries; report the quantities entering the truncation bounds."""
    check = stiffness.block_diagonal
    delta = (stiffness.full - check).tocsr()
    norms, lmin, lmax, gersh = [], [], [], []
    for l, r in enumerate(stiffness.block_ranges):
        norms.append(spectral_norm(delta[r.start : r.stop]))
        block = stiffness.block(l)
        lo, hi = extremal_eigs(block, "both")
        lmin.append(lo)
        lmax.append(hi)
        gersh.append(float(np.abs(block).sum(axis=1).max()))
    lam_full = extremal_eigs(stiffness.full, "min") if full_spectrum else None
    report = TruncationReport(norms, lmin, lmax, gersh, spectral_norm(delta), lam_full)
    return check, report


@dataclass
class SparseInverse:
    matrix: sp.csr_matrix
    iterations: int
    relres: np.ndarray
    column_nnz: np.ndarray


def cg_block_inverse(check: sp.csr_matrix, block_ranges, k: int = DEFAULT_CG_ITERS, rtol: float = 0.0) -> SparseInverse:
    """Column ``i`` of each block inverse approximated by the k-th CG iterate for ``e_i`` from zero."""
    mats, relres, nnz = [], [], []
    for b, r in enumerate(block_ranges):
        block = check[r.start : r.stop][:, r.start : r.stop].tocsr()
        n = block.shape[0]
        try:
            X, rr, _ = cg_multi(block, np.eye(n), k, rtol)
        except ArithmeticError as exc:
            raise StageError("bar", f"block {b}: {exc}") from exc
        Xs = sp.csc_matrix(X)
        Xs.eliminate_zeros()
        mats.append(Xs)
        relres.append(rr)
        nnz.append(np.diff(Xs.indptr))
    S = sp.block_diag(mats, format="csr")
    return SparseInverse(S, k, np.concatenate(relres), np.concatenate(nnz))


def threshold(S: sp.spmatrix, eps: float = DEFAULT_EPSILON):
    """Drop entries with ``|value| < eps``; return the matrix and the max nonzeros per row/column."""
    S = sp.csr_matrix(S, copy=True)
    S.data[np.abs(S.data) < eps] = 0.0
    S.eliminate_zeros()
    if S.nnz == 0:
        return S, 0
    n_eps = max(int(np.diff(S.indptr).max()), int(np.diff(S.tocsc().indptr).max()))
    return S, n_eps


def nnz_bound(dim: int, order: int, k: int) -> int:
    """Nonzero count bound for the k-th CG iterate of a uniform interior block."""
    return 8 * (2**dim - 1) * (2 * (2 * k - 1) * order**2 + order)


class CompressedOperator:
    """All four stages built from one basis; ``apply`` evaluates any of them."""

    def __init__(self, basis: HierarchicalBasis, coeff, k: int = DEFAULT_CG_ITERS,
                 eps: float = DEFAULT_EPSILON, rtol: float = 0.0, stages=STAGES):
        self.basis = basis
        self.coeff = coeff
        self.hierarchy = basis.hierarchy
        self.cg_iters = k
        self.epsilon = eps
        self.stiffness = assemble_stiffness_hslod(basis, coeff)
        self.check, self.report = block_truncate(self.stiffness, full_spectrum="hat" in stages)
        self._block_solvers = None
        self._hat_factor = None
        self.sparse_inverse = None
        self.S_eps = None
        self.n_eps = None
        if "bar" in stages or "eps" in stages:
            self.sparse_inverse = cg_block_inverse(self.check, self.stiffness.block_ranges, k, rtol)
            self.S_eps, self.n_eps = threshold(self.sparse_inverse.matrix, eps)

    @property
    def block_ranges(self):
        return self.stiffness.block_ranges

    @property
    def S_matrix(self):
        return None if self.sparse_inverse is None else self.sparse_inverse.matrix

    def nnz(self) -> dict:
        out = {"hat": int(self.stiffness.full.nnz), "check": int(self.check.nnz)}
        if self.sparse_inverse is not None:
            out["bar"] = int(self.sparse_inverse.matrix.nnz)
            out["eps"] = int(self.S_eps.nnz)
        return out

    def load(self, f) -> np.ndarray:
        """``R f``: L2 products of f with every basis function."""
        return np.asarray(self.stiffness.basis_matrix.T @ load_vector(self.hierarchy, f))

    def _solvers(self):
        if self._block_solvers is None:
            solvers = []
            for l in range(len(self.block_ranges)):
                block = self.stiffness.block(l)
                if block.shape[0] <= DENSE_LIMIT:
                    cf = scipy.linalg.cho_factor(block.toarray(), lower=True)
                    solvers.append(lambda b, cf=cf: scipy.linalg.cho_solve(cf, b))
                else:
                    fac = CholeskyFactor(block)
                    solvers.append(fac.solve)
            self._block_solvers = solvers
        return self._block_solvers

    def solve_levels(self, rhs: np.ndarray) -> np.ndarray:
        """Independent Galerkin solve on every level (the ``check`` stage)."""
        c = np.zeros_like(rhs)
        try:
            for solve, r in zip(self._solvers(), self.block_ranges):
                c[r.start : r.stop] = solve(rhs[r.start : r.stop])
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise StageError("check", str(exc)) from exc
        return c

    def coefficients(self, stage: str, rhs: np.ndarray) -> np.ndarray:
        if stage == "hat":
            n = self.stiffness.full.shape[0]
            if n > HAT_LIMIT:
                raise StageError("hat", f"refusing a full solve with {n} unknowns (limit {HAT_LIMIT})")
            if self._hat_factor is None:
                try:
                    self._hat_factor = CholeskyFactor(self.stiffness.full)
                except np.linalg.LinAlgError as exc:
                    raise StageError("hat", str(exc)) from exc
            return self._hat_factor.solve(rhs)
        if stage == "check":
            return self.solve_levels(rhs)
        if stage == "bar":
            return np.asarray(self.sparse_inverse.matrix @ rhs)
        if stage == "eps":
            return np.asarray(self.S_eps @ rhs)
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")

    def synthesize(self, c: np.ndarray) -> FineFunction:
        h = self.hierarchy
        vals = np.asarray(self.stiffness.basis_matrix @ c)
        return FineFunction(h.fine_exponent, h.domain_box_fine(), vals)

    def apply(self, stage: str, f):
        c = self.coefficients(stage, self.load(f))
        return self.synthesize(c), c

    def energy(self, c: np.ndarray) -> float:
        return float(np.sqrt(max(c @ (self.stiffness.full @ c), 0.0)))

    def support_cells(self) -> int:
        """Largest number of same-level cells in any basis function's patch."""
        best = 0
        for level, funcs in enumerate(self.basis.levels):
            for f in funcs:
                best = max(best, f.patch.level_box(level).size)
        return best

    def cg_operator_error(self) -> tuple[float, bool]:
        """``||check^{-1} - S^(k)||_2``; exact (dense) when every block is small, else a surrogate."""
        exact = True
        worst = 0.0
        S = self.sparse_inverse.matrix
        for l, r in enumerate(self.block_ranges):
            block = self.stiffness.block(l)
            Sb = S[r.start : r.stop][:, r.start : r.stop]
            if block.shape[0] <= DENSE_LIMIT:
                diff = np.linalg.inv(block.toarray()) - Sb.toarray()
                worst = max(worst, float(np.linalg.norm(diff, 2)))
            else:
                exact = False
                res = self.sparse_inverse.relres[r.start : r.stop].max()
                worst = max(worst, float(res / self.report.lambda_min[l]) * np.sqrt(block.shape[0]))
        return worst, exact


def l2_norm(hierarchy, f) -> float:
    """L2 norm of an analytic or Q0 source on the fine mesh (same quadrature as the loads)."""
    from .fem import Q0Function, _gauss_points

    if isinstance(f, Q0Function):
        vol = 2.0 ** (-f.exponent * f.box.dim)
        return float(np.sqrt(np.sum(f.values**2) * vol))
    pts, _ = _gauss_points(hierarchy.domain_box_fine(), hierarchy.h)
    vals = np.asarray(f(pts))
    return float(np.sqrt(np.sum(vals**2) * (hierarchy.h / 2) ** hierarchy.dim))


def stage_error_bounds(op: CompressedOperator, f) -> dict:
    """Measured stage-to-stage energy errors next to their a-priori right-hand sides."""
    h = op.hierarchy
    rhs = op.load(f)
    c_hat = op.coefficients("hat", rhs)
    c_check = op.coefficients("check", rhs)
    c_bar = op.coefficients("bar", rhs)
    c_eps = op.coefficients("eps", rhs)
    rep = op.report
    alpha = op.coeff.min_value
    diam = h.diameter
    fnorm = l2_norm(h, f)
    n_levels = h.L + 1
    n_e = op.support_cells()
    lam_max = max(rep.lambda_max)
    front = np.sqrt(lam_max + rep.delta_norm)
    cg_err, cg_exact = op.cg_operator_error()
    spread = np.sqrt(n_e * n_levels) * diam / (np.pi * np.sqrt(alpha)) * fnorm
    return {
        "hat_check": {
            "measured": op.energy(c_hat - c_check),
            "bound": float(front * rep.lemma_factor() * diam * fnorm / (np.pi * np.sqrt(rep.lambda_min_full * alpha))),
            "coefficient_error": float(np.linalg.norm(c_hat - c_check)),
            "coefficient_bound": rep.solution_bound(c_hat),
        },
        "check_bar": {
            "measured": op.energy(c_check - c_bar),
            "bound": float(front * cg_err * spread),
            "delta_cg": cg_err,
            "delta_cg_exact": cg_exact,
        },
        "bar_eps": {
            "measured": op.energy(c_bar - c_eps),
            "bound": float(front * op.epsilon * op.n_eps * spread),
            "n_eps": op.n_eps,
        },
        "constants": {
            "alpha": alpha,
            "diam": diam,
            "f_l2": fnorm,
            "N_E": n_e,
            "levels": n_levels,
            "lambda_max_blocks": lam_max,
            "delta_norm": rep.delta_norm,
            "lambda_min_full": rep.lambda_min_full,
        },
    }
