"""Hierarchical basis assembled from the per-level superlocalized functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np
import scipy.sparse as sp

from .fem import FineFunction, Q0Function, box_stiffness, node_count
from .mesh import Box, MeshHierarchy, Patch, PatchKind, box_multi_indices, build_patch, _ravel
from .numerics import LSTSQ_RCOND, extremal_eigs, lstsq, null_space, qr, svd
from .parallel import parallel_map
from .slod import DEFAULT_DELTA_S, SlodFunction, slod_level_basis

ROW_MODES = ("full", "restricted")


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


@dataclass
class HslodFunction:
    level: int
    index: int  # global
    patch: Patch
    support: np.ndarray  # centers of the level functions combined
    coeffs: np.ndarray  # weights of the normalized level functions
    values: FineFunction
    companion: Q0Function
    target_child: int
    lsq_residual: float
    projection: np.ndarray  # cell averages of the unnormalized combination on the patch cells
    lsq_projection: np.ndarray | None = None  # same for the least-squares vector before orthogonalization
    coeff_bound: float = float("nan")  # 1 / sqrt(lambda_min) of the local Gram of the combined functions
    norm: float = 1.0

    @property
    def box(self) -> Box:
        return self.values.box


@dataclass
class HierarchicalBasis:
    hierarchy: MeshHierarchy
    levels: list[list[HslodFunction]]
    slod: list[list[SlodFunction]] = field(repr=False)
    config: dict = field(default_factory=dict)
    coefficient_digest: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def functions(self) -> list[HslodFunction]:
        return [f for lev in self.levels for f in lev]

    @property
    def level_sizes(self) -> list[int]:
        return [len(lev) for lev in self.levels]

    @property
    def level_ranges(self) -> list[range]:
        out, start = [], 0
        for n in self.level_sizes:
            out.append(range(start, start + n))
            start += n
        return out

    def __len__(self) -> int:
        return sum(self.level_sizes)

    def basis_matrix(self, levels=None) -> sp.csc_matrix:
        """Fine nodal values of every basis function as columns (all fine nodes as rows)."""
        h = self.hierarchy
        funcs = self.functions if levels is None else [f for l in levels for f in self.levels[l]]
        rows, cols, vals = [], [], []
        for j, f in enumerate(funcs):
            ids = h.box_node_ids(f.box)
            nz = np.flatnonzero(f.values.values)
            rows.append(ids[nz])
            cols.append(np.full(nz.size, j))
            vals.append(f.values.values[nz])
        rows = np.concatenate(rows) if rows else np.zeros(0, np.int64)
        cols = np.concatenate(cols) if cols else np.zeros(0, np.int64)
        vals = np.concatenate(vals) if vals else np.zeros(0)
        return sp.csc_matrix((vals, (rows, cols)), shape=(h.num_fine_nodes, len(funcs)))


def sub_box_nodes(outer: Box, inner: Box) -> np.ndarray:
    """Positions of the closed ``inner`` box nodes inside the closed ``outer`` box numbering."""
    node_inner = Box(inner.lo, tuple(b + 1 for b in inner.hi))
    multi = box_multi_indices(node_inner) - np.asarray(outer.lo)
    return _ravel(multi, tuple(c + 1 for c in outer.counts))


def _level_zero(hierarchy: MeshHierarchy, slod: list[SlodFunction]) -> list[HslodFunction]:
    out = []
    for i, s in enumerate(slod):
        out.append(
            HslodFunction(
                level=0, index=i, patch=s.patch, support=np.array([s.center]), coeffs=np.array([1.0]),
                values=s.values, companion=s.companion, target_child=-1, lsq_residual=0.0,
                projection=s.projection.copy(), lsq_projection=s.projection.copy(), coeff_bound=1.0, norm=s.norm,
            )
        )
    return out


def _patch_functions(hierarchy, coeff, slod, level, order, rows, J) -> list[HslodFunction]:
    d = hierarchy.dim
    nb = 2**d - 1
    patch = build_patch(hierarchy, PatchKind.HIERARCHICAL, level, J, order)
    wbox = patch.level_box(level)
    cells = hierarchy.box_elements(level, wbox)
    support = [int(T) for T in cells if wbox.contains(slod[T].patch.box)]
    n_s, n_c = len(support), cells.size
    if n_s < nb:
        raise RankDeficiencyError(f"hierarchical patch {J} on level {level} holds only {n_s} level functions")

    C = np.zeros((n_c, n_s))
    for s, T in enumerate(support):
        C[np.searchsorted(cells, slod[T].patch.coarse_elements(level)), s] = slod[T].projection
    parents = hierarchy.box_elements(level - 1, patch.box)
    par = np.searchsorted(parents, hierarchy.parent(level, cells))
    R = np.zeros((parents.size, n_c))
    R[par, np.arange(n_c)] = 1.0 / 2**d
    Q = R @ C
    kernel = null_space(Q, LSTSQ_RCOND)
    CK = C @ kernel

    targets = hierarchy.refinement_children(level - 1, J)[1:]
    if rows == "restricted":
        keep = np.any(hierarchy.element_multi_index(level, cells) % 2 == 1, axis=1)
    else:
        keep = np.ones(n_c, dtype=bool)
    A = CK[keep]
    sv = svd(A)[1] if A.size else np.zeros(0)
    rank = int(np.count_nonzero(sv > LSTSQ_RCOND * sv[0])) if sv.size and sv[0] > 0 else 0
    if rank < nb:
        raise RankDeficiencyError(
            f"hierarchical patch {J} on level {level}: rank {rank} of the constrained system is below {nb}"
        )
    E = np.zeros((n_c, nb))
    E[np.searchsorted(cells, targets), np.arange(nb)] = 1.0
    Y = lstsq(A, E[keep])
    residuals = np.linalg.norm(A @ Y - E[keep], axis=0)
    D_lsq = kernel @ Y
    Qm, Rm = qr(D_lsq)
    diag = np.abs(np.diag(Rm))
    if diag.min() <= LSTSQ_RCOND * diag.max():
        raise RankDeficiencyError(f"hierarchical patch {J} on level {level}: combinations are linearly dependent")
    Qm = Qm * np.sign(np.diag(Rm))

    fbox = patch.fine_box
    n_nodes = node_count(fbox)
    Theta = np.zeros((n_nodes, n_s))
    norms = np.array([slod[T].norm for T in support])
    for s, T in enumerate(support):
        Theta[sub_box_nodes(fbox, slod[T].box), s] = slod[T].values.values * norms[s]
    K = box_stiffness(coeff.fine_values(hierarchy.fine_exponent), fbox, hierarchy.h)
    gram = Theta.T @ (K @ Theta)
    gram = 0.5 * (gram + gram.T)
    gram_hat = gram / np.outer(norms, norms)
    lam = extremal_eigs(gram_hat, "min")
    coeff_bound = 1.0 / np.sqrt(lam) if lam > 0 else float("inf")

    companions = np.zeros((n_c, n_s))
    for s, T in enumerate(support):
        companions[np.searchsorted(cells, slod[T].patch.coarse_elements(level)), s] = slod[T].companion.values

    out = []
    for k in range(nb):
        q = Qm[:, k]
        nrm = float(np.sqrt(q @ gram @ q))
        dhat = q * norms / nrm
        out.append(
            HslodFunction(
                level=level,
                index=hierarchy.level_offset(level) + nb * J + k,
                patch=patch,
                support=np.array(support),
                coeffs=dhat,
                values=FineFunction(hierarchy.fine_exponent, fbox, Theta @ q / nrm),
                companion=Q0Function(hierarchy.exponent(level), wbox, companions @ dhat),
                target_child=int(targets[k]),
                lsq_residual=float(residuals[k]),
                projection=C @ q,
                lsq_projection=C @ D_lsq[:, k],
                coeff_bound=float(coeff_bound),
                norm=nrm,
            )
        )
    return out


def build_level(
    slod: list[SlodFunction], hierarchy: MeshHierarchy, coeff, order: int, level: int,
    rows: str = "full", n_jobs: int = 1,
) -> list[HslodFunction]:
    """The ``(2**d - 1) N_{l-1}`` functions of level ``l >= 1``, ordered by (coarse cell, child)."""
    if level < 1:
        raise ValueError("hierarchical levels start at 1")
    if rows not in ROW_MODES:
        raise ValueError(f"rows must be one of {ROW_MODES}")
    job = partial(_patch_functions, hierarchy, coeff, slod, level, order, rows)
    per_patch = parallel_map(job, range(hierarchy.num_elements(level - 1)), n_jobs)
    return [f for group in per_patch for f in group]


def _orders(order, hierarchy: MeshHierarchy) -> list[int]:
    if np.isscalar(order):
        return [int(order)] * (hierarchy.L + 1)
    order = [int(m) for m in order]
    if len(order) != hierarchy.L + 1:
        raise ValueError("need one patch order per level")
    return order


def build_basis(
    hierarchy: MeshHierarchy, coeff, order=2, delta_s: float = DEFAULT_DELTA_S, *,
    slod_order=None, mode: str = "slod", rows: str = "full", n_jobs: int = 1,
) -> HierarchicalBasis:
    """Build every level; ``mode='lod'`` gives the hierarchical LOD basis (no corrections)."""
    orders = _orders(order, hierarchy)
    slod_orders = orders if slod_order is None else _orders(slod_order, hierarchy)
    slod_levels, levels = [], []
    for level in hierarchy.levels:
        s = slod_level_basis(hierarchy, coeff, level, slod_orders[level], delta_s, mode, n_jobs)
        slod_levels.append(s)
        if level == 0:
            levels.append(_level_zero(hierarchy, s))
        else:
            levels.append(build_level(s, hierarchy, coeff, orders[level], level, rows, n_jobs))
    config = {
        "dim": hierarchy.dim,
        "coarse_exponent": hierarchy.coarse_exponent,
        "num_levels": hierarchy.L,
        "fine_exponent": hierarchy.fine_exponent,
        "order": orders,
        "slod_order": slod_orders,
        "delta_s": delta_s,
        "mode": mode,
        "rows": rows,
    }
    basis = HierarchicalBasis(hierarchy, levels, slod_levels, config, coeff.digest())
    basis.diagnostics = basis_quality(basis)
    return basis


def _projection_matrix(hierarchy: MeshHierarchy, funcs: list[HslodFunction], level: int, attr: str):
    rows, cols, vals = [], [], []
    for j, f in enumerate(funcs):
        cells = f.patch.coarse_elements(level)
        v = getattr(f, attr)
        rows.append(cells)
        cols.append(np.full(cells.size, j))
        vals.append(v)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(hierarchy.num_elements(level), len(funcs)),
    )


def basis_quality(basis: HierarchicalBasis) -> dict:
    """Coefficient sizes, boundary-residual proxy and projection-matrix eigenvalues per level."""
    h = basis.hierarchy
    per_level = []
    for level, funcs in enumerate(basis.levels):
        P = _projection_matrix(h, funcs, level, "lsq_projection")
        Pq = _projection_matrix(h, funcs, level, "projection")
        lam = extremal_eigs((P.T @ P).tocsr(), "min")
        lam_q = extremal_eigs((Pq.T @ Pq).tocsr(), "min")
        slod = basis.slod[level]
        per_level.append(
            {
                "level": level,
                "H": h.mesh_size(level),
                "zeta": float(max(np.linalg.norm(f.coeffs) for f in funcs)),
                "coeff_bound": float(max(f.coeff_bound for f in funcs)),
                "sigma_proxy": float(max(s.boundary_residual for s in slod)),
                "max_lsq_residual": float(max(f.lsq_residual for f in funcs)),
                "lambda_min_ptp": float(lam),
                "lambda_min_ptp_orthogonalized": float(lam_q * h.mesh_size(level) ** (h.dim - 2)),
                "max_stability_deviation": float(max(s.stability_deviation for s in slod)),
                "mean_kept_rank": float(np.mean([s.kept_rank for s in slod])),
            }
        )
    return {
        "zeta": max(p["zeta"] for p in per_level),
        "sigma_proxy": max(p["sigma_proxy"] for p in per_level),
        "levels": per_level,
    }
