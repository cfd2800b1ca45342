"""Q1 finite elements on the fine Cartesian mesh.

Everything is assembled on index boxes: a box of fine elements carries the
nodes of its closure, numbered lexicographically.  Global quantities are the
special case of the domain box.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import Box, MeshHierarchy, Patch, box_multi_indices, local_vertex_offsets, _ravel
from .numerics import CholeskyFactor

_GAUSS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@dataclass
class FineFunction:
    """Q1 function given by its nodal values on the closure of a fine-element box."""

    fine_exponent: int
    box: Box
    values: np.ndarray  # flat, lexicographic over the box nodes

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size != node_count(self.box):
            raise ValueError("values do not match the box node count")

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def h(self) -> float:
        return 2.0 ** -self.fine_exponent

    def grid(self) -> np.ndarray:
        return self.values.reshape(node_shape(self.box))

    def restrict(self, box: Box) -> np.ndarray:
        """Nodal values on the closure of ``box`` (must lie inside ``self.box``)."""
        sl = tuple(slice(a - o, b - o + 1) for a, b, o in reversed(list(zip(box.lo, box.hi, self.box.lo))))
        return self.grid()[sl].ravel()

    def to_global(self, hierarchy: MeshHierarchy) -> np.ndarray:
        out = np.zeros(hierarchy.num_fine_nodes)
        out[hierarchy.box_node_ids(self.box)] = self.values
        return out

    def __add__(self, other):
        if self.box != other.box:
            raise ValueError("adding functions on different boxes")
        return FineFunction(self.fine_exponent, self.box, self.values + other.values)

    def __mul__(self, s):
        return FineFunction(self.fine_exponent, self.box, self.values * s)

    __rmul__ = __mul__


@dataclass
class Q0Function:
    """Elementwise constants on the cells of the ``2**-exponent`` mesh inside ``box``."""

    exponent: int
    box: Box
    values: np.ndarray  # flat, lexicographic over the box cells

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size != self.box.size:
            raise ValueError("values do not match the box cell count")

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.box.shape)

    def on_fine(self, fine_exponent: int) -> np.ndarray:
        """Cell values on the fine cells of the box (reversed-axis array)."""
        r = 2 ** (fine_exponent - self.exponent)
        g = self.grid()
        for axis in range(self.box.dim):
            g = np.repeat(g, r, axis=axis)
        return g


def node_count(box: Box) -> int:
    return int(np.prod([c + 1 for c in box.counts]))


def node_shape(box: Box) -> tuple[int, ...]:
    return tuple(c + 1 for c in reversed(box.counts))


@lru_cache(maxsize=None)
def reference_matrices(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Stiffness and mass of the unit reference cube (local nodes lexicographic)."""
    k1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    m1 = np.array([[1.0, 0.5], [0.5, 1.0]]) / 3.0
    stiff = np.zeros((2**dim, 2**dim))
    for k in range(dim):
        f = np.ones((1, 1))
        for j in reversed(range(dim)):
            f = np.kron(f, k1 if j == k else m1)
        stiff += f
    mass = np.ones((1, 1))
    for _ in range(dim):
        mass = np.kron(mass, m1)
    return stiff, mass


def _element_nodes(box: Box) -> np.ndarray:
    """Box-local node numbers of every cell corner, shape (cells, 2**d)."""
    counts = box.counts
    ncounts = tuple(c + 1 for c in counts)
    cells = box_multi_indices(Box((0,) * box.dim, counts))
    base = _ravel(cells, ncounts)
    offsets = _ravel(local_vertex_offsets(box.dim), ncounts)
    return base[:, None] + offsets[None, :]


def _cell_values(a_fine: np.ndarray, box: Box) -> np.ndarray:
    return np.ascontiguousarray(a_fine[box.slices()]).ravel()


def box_stiffness(a_fine: np.ndarray, box: Box, h: float) -> sp.csr_matrix:
    """Neumann stiffness over all nodes of the closed box."""
    d = box.dim
    kref, _ = reference_matrices(d)
    conn = _element_nodes(box)
    coef = _cell_values(a_fine, box) * h ** (d - 2)
    nloc = 2**d
    rows = np.repeat(conn, nloc, axis=1).ravel()
    cols = np.tile(conn, (1, nloc)).ravel()
    vals = (coef[:, None] * kref.ravel()[None, :]).ravel()
    n = node_count(box)
    K = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    K.sum_duplicates()
    return K


def box_mass(box: Box, h: float) -> sp.csr_matrix:
    d = box.dim
    _, mref = reference_matrices(d)
    conn = _element_nodes(box)
    nloc = 2**d
    rows = np.repeat(conn, nloc, axis=1).ravel()
    cols = np.tile(conn, (1, nloc)).ravel()
    vals = np.tile(mref.ravel() * h**d, conn.shape[0])
    n = node_count(box)
    M = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    M.sum_duplicates()
    return M


def cell_to_coarse(box: Box, ratio: int) -> np.ndarray:
    """Box-local coarse cell number of every fine cell (``box`` aligned with the coarse mesh)."""
    cells = box_multi_indices(Box((0,) * box.dim, box.counts))
    return _ravel(cells // ratio, tuple(c // ratio for c in box.counts))


def q0_load_matrix(box: Box, h: float, ratio: int) -> sp.csr_matrix:
    """Columns ``(chi_K, phi_i)`` for the coarse cells K of an aligned box."""
    d = box.dim
    conn = _element_nodes(box)
    coarse = cell_to_coarse(box, ratio)
    nloc = 2**d
    rows = conn.ravel()
    cols = np.repeat(coarse, nloc)
    vals = np.full(rows.size, h**d / nloc)
    ncoarse = int(np.prod([c // ratio for c in box.counts]))
    F = sp.csr_matrix((vals, (rows, cols)), shape=(node_count(box), ncoarse))
    F.sum_duplicates()
    return F


def cell_means(values: np.ndarray, box: Box) -> np.ndarray:
    """Exact fine-cell averages of a Q1 function (mean of the 2**d corner values)."""
    g = np.asarray(values).reshape(node_shape(box) + np.shape(values)[1:])
    d = box.dim
    out = 0.0
    for corner in local_vertex_offsets(d):
        sl = tuple(slice(c, c + n) for c, n in zip(reversed(corner), reversed(box.counts)))
        out = out + g[sl]
    return out / 2**d


def coarsen_means(cell_avgs: np.ndarray, ratio: int, dim: int) -> np.ndarray:
    """Average fine-cell data (leading ``dim`` axes) over aligned blocks of ``ratio**dim`` cells."""
    shape = cell_avgs.shape
    new = []
    for n in shape[:dim]:
        new += [n // ratio, ratio]
    a = cell_avgs.reshape(tuple(new) + shape[dim:])
    return a.mean(axis=tuple(range(1, 2 * dim, 2)))


def _gauss_points(box: Box, h: float):
    """Gauss points (cells, 2**d, d) and reference weights/shape values."""
    d = box.dim
    cells = box_multi_indices(box).astype(np.float64)
    q = _GAUSS[local_vertex_offsets(d)]  # (2**d, d) reference coordinates
    pts = (cells[:, None, :] + q[None, :, :]) * h
    verts = local_vertex_offsets(d)
    shape = np.prod(np.where(verts[None, :, :] == 1, q[:, None, :], 1.0 - q[:, None, :]), axis=2)
    return pts, shape  # shape[q, p]: value of local basis p at Gauss point q


def load_vector(hierarchy: MeshHierarchy, f, box: Box | None = None) -> np.ndarray:
    """``(f, phi_i)`` for every node of the closed box (default: whole domain).

    ``f`` is a callable on points of shape (..., d) (tensor 2-point Gauss per
    fine cell) or a :class:`Q0Function` (exact).
    """
    box = box or hierarchy.domain_box_fine()
    h = hierarchy.h
    d = hierarchy.dim
    conn = _element_nodes(box)
    n = node_count(box)
    if isinstance(f, Q0Function):
        if f.exponent > hierarchy.fine_exponent:
            raise ValueError("source finer than the fine mesh")
        full = Q0Function(f.exponent, f.box, f.values)
        fine_box = f.box.refine(2 ** (hierarchy.fine_exponent - f.exponent))
        cellv = np.zeros(box.shape)
        inter = box.intersect(fine_box)
        if not inter.is_empty():
            cellv[inter.slices(box.lo)] = full.on_fine(hierarchy.fine_exponent)[inter.slices(fine_box.lo)]
        contrib = np.repeat(cellv.ravel() * h**d / 2**d, 2**d)
        return np.bincount(conn.ravel(), weights=contrib, minlength=n)
    pts, shape = _gauss_points(box, h)
    fq = np.asarray(f(pts), dtype=np.float64)
    local = fq @ shape * (h / 2) ** d
    return np.bincount(conn.ravel(), weights=local.ravel(), minlength=n)


def assemble_stiffness(hierarchy: MeshHierarchy, coeff, region=None) -> sp.csr_matrix:
    """Stiffness over the interior nodes of ``region`` (domain or Patch)."""
    box = hierarchy.domain_box_fine() if region is None else region.fine_box
    inside, _ = hierarchy.box_node_masks(box)
    if not inside.any():
        raise ValueError("region has no interior fine nodes")
    K = box_stiffness(coeff.fine_values(hierarchy.fine_exponent), box, hierarchy.h)
    idx = np.flatnonzero(inside)
    return K[idx][:, idx].tocsr()


def assemble_mass(hierarchy: MeshHierarchy, region=None) -> sp.csr_matrix:
    box = hierarchy.domain_box_fine() if region is None else region.fine_box
    inside, _ = hierarchy.box_node_masks(box)
    idx = np.flatnonzero(inside)
    return box_mass(box, hierarchy.h)[idx][:, idx].tocsr()


class PatchSystem:
    """Local Dirichlet problem on a patch together with its level-ell Q0 sources."""

    def __init__(self, hierarchy: MeshHierarchy, coeff, patch: Patch):
        self.hierarchy = hierarchy
        self.patch = patch
        self.level = patch.level
        self.box = patch.fine_box
        self.stiffness = box_stiffness(coeff.fine_values(hierarchy.fine_exponent), self.box, hierarchy.h)
        self.inside, self.sigma = hierarchy.box_node_masks(self.box)
        self.interior = np.flatnonzero(self.inside)
        if self.interior.size == 0:
            raise ValueError(f"patch {patch.box} on level {patch.level} has no interior fine nodes")
        self.load = q0_load_matrix(self.box, hierarchy.h, hierarchy.ratio(patch.level))
        self.elements = patch.coarse_elements(patch.level)
        self.cell_volume = hierarchy.mesh_size(patch.level) ** hierarchy.dim
        self._factor = None

    @property
    def interior_stiffness(self) -> sp.csr_matrix:
        return self.stiffness[self.interior][:, self.interior]

    @property
    def factor(self) -> CholeskyFactor:
        if self._factor is None:
            self._factor = CholeskyFactor(self.interior_stiffness)
        return self._factor

    def harmonics(self) -> np.ndarray:
        """Interior values of the local solutions for every cell indicator, (n_interior, n_e)."""
        rhs = self.load[self.interior].toarray()
        return self.factor.solve(rhs)

    def residual_matrix(self, harmonics: np.ndarray) -> np.ndarray:
        """Conormal residuals ``a(u_K, phi_i) - (chi_K, phi_i)`` at the inner-boundary nodes."""
        sig = np.flatnonzero(self.sigma)
        if sig.size == 0:
            return np.zeros((0, harmonics.shape[1]))
        Ksi = self.stiffness[sig][:, self.interior]
        return np.asarray(Ksi @ harmonics) - self.load[sig].toarray()

    def full_values(self, interior_values: np.ndarray) -> np.ndarray:
        out = np.zeros((self.inside.size,) + interior_values.shape[1:])
        out[self.interior] = interior_values
        return out


def local_inverse_apply(hierarchy: MeshHierarchy, patch: Patch, coeff, g: Q0Function) -> FineFunction:
    """Solve the local Dirichlet problem on ``patch`` with Q0 source ``g``."""
    system = PatchSystem(hierarchy, coeff, patch)
    rhs = load_vector(hierarchy, g, system.box)[system.interior]
    u = system.factor.solve(rhs)
    return FineFunction(hierarchy.fine_exponent, system.box, system.full_values(u))


def conormal_residual_matrix(hierarchy: MeshHierarchy, patch: Patch, coeff) -> np.ndarray:
    system = PatchSystem(hierarchy, coeff, patch)
    return system.residual_matrix(system.harmonics())


def project_q0(hierarchy: MeshHierarchy, level: int, f, box: Box | None = None) -> Q0Function:
    """L2 projection onto level-``level`` constants inside ``box`` (level units; default domain).

    Q1 inputs are averaged exactly from nodal values; callables use tensor
    2-point Gauss per fine cell.
    """
    d = hierarchy.dim
    box = box or hierarchy.domain_box(level)
    ratio = hierarchy.ratio(level)
    fine_box = box.refine(ratio)
    if isinstance(f, FineFunction):
        if f.box.contains(fine_box):
            vals = f.restrict(fine_box)
        else:
            g = f.to_global(hierarchy)
            vals = g[hierarchy.box_node_ids(fine_box)]
        avg = cell_means(vals, fine_box)
    else:
        pts, _ = _gauss_points(fine_box, hierarchy.h)
        avg = np.asarray(f(pts)).mean(axis=1).reshape(fine_box.shape)
    return Q0Function(hierarchy.exponent(level), box, coarsen_means(avg, ratio, d).ravel())


def energy_inner(u: FineFunction, v: FineFunction, coeff) -> float:
    """``a(u, v)`` evaluated over the intersection of the two support boxes."""
    box = u.box.intersect(v.box)
    if box.is_empty():
        return 0.0
    K = box_stiffness(coeff.fine_values(u.fine_exponent), box, u.h)
    return float(u.restrict(box) @ (K @ v.restrict(box)))


def energy_norm(u: FineFunction, coeff) -> float:
    return float(np.sqrt(max(energy_inner(u, u, coeff), 0.0)))


def l2_inner(u: FineFunction, v: FineFunction) -> float:
    box = u.box.intersect(v.box)
    if box.is_empty():
        return 0.0
    return float(u.restrict(box) @ (box_mass(box, u.h) @ v.restrict(box)))


def projection_norms(hierarchy: MeshHierarchy, level: int, values: np.ndarray) -> dict:
    """L2 norms of a global Q1 function, its level-``level`` cell averages and the remainder,
    plus the L2 norm of its gradient."""
    box = hierarchy.domain_box_fine()
    values = np.asarray(values, dtype=np.float64)
    M = box_mass(box, hierarchy.h)
    K = box_stiffness(np.ones((hierarchy.n_fine,) * hierarchy.dim), box, hierarchy.h)
    u = FineFunction(hierarchy.fine_exponent, box, values)
    avg = project_q0(hierarchy, level, u)
    pv = load_vector(hierarchy, avg)  # (Pi v, phi_i)
    pi_sq = float(np.sum(avg.values**2)) * hierarchy.mesh_size(level) ** hierarchy.dim
    v_sq = float(values @ (M @ values))
    # ||v - Pi v||^2 = ||v||^2 - 2 (Pi v, v) + ||Pi v||^2 and (Pi v, v) = ||Pi v||^2
    rem_sq = v_sq - 2 * float(pv @ values) + pi_sq
    return {
        "v": float(np.sqrt(v_sq)),
        "projection": float(np.sqrt(pi_sq)),
        "remainder": float(np.sqrt(max(rem_sq, 0.0))),
        "gradient": float(np.sqrt(max(float(values @ (K @ values)), 0.0))),
    }
