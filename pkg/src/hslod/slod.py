"""Superlocalized basis of one level: LOD functions corrected against their conormal residual."""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np

from .fem import FineFunction, Q0Function, load_vector
from .lod import PatchLodData, compute_patch_lod
from .mesh import MeshHierarchy, Patch, PatchKind, build_patch
from .numerics import admissible_rank, svd
from .parallel import parallel_map

DEFAULT_DELTA_S = 0.5
MODES = ("slod", "lod", "unstabilized")


class StabilityError(RuntimeError):
    pass


@dataclass
class SlodFunction:
    """Normalized basis function of a level together with its Q0 companion.

    ``companion`` holds the source density on the patch cells, so the function
    is the local solution with that source.  ``projection`` holds the cell
    averages of the unnormalized function (``norm`` times the normalized one).
    """

    level: int
    center: int
    patch: Patch
    values: FineFunction
    companion: Q0Function
    projection: np.ndarray
    norm: float
    boundary_residual: float
    kept_rank: int
    admissible_rank: int
    stability_deviation: float
    z: float

    @property
    def box(self):
        return self.values.box


def _correction(lod: PatchLodData, t: int, rank: int, U, s, V, rhs) -> np.ndarray:
    if rank == 0:
        return np.zeros(lod.n_elements - 1)
    return -V[:, :rank] @ ((U[:, :rank].T @ rhs) / s[:rank])


def build_slod_function(
    lod: PatchLodData, center_local: int, delta_s: float = DEFAULT_DELTA_S, mode: str = "slod"
) -> SlodFunction:
    """Correct the LOD function of cell ``center_local`` (patch-local index).

    ``mode='lod'`` keeps rank 0 (the plain LOD function); ``mode='unstabilized'``
    uses every admissible singular value and skips the stability test.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    t = int(center_local)
    G = lod.lod_coefficients()
    n_e = lod.n_elements
    others = np.array([k for k in range(n_e) if k != t], dtype=np.int64)
    d_center = G[:, t]
    d_others = G[:, others]
    avg = lod.averages
    B = lod.B
    e_t = np.zeros(n_e)
    e_t[t] = 1.0

    if B.shape[0] == 0 or others.size == 0 or mode == "lod":
        U = s = V = rhs = None
        r_max = 0
    else:
        BD = B @ d_others
        M = BD.T @ BD
        rhs = BD.T @ (B @ d_center)
        U, s, V = svd(M)
        r_max = admissible_rank(s)

    chosen = None
    for rank in range(r_max, -1, -1):
        c = _correction(lod, t, rank, U, s, V, rhs)
        g = d_center + d_others @ c
        proj = avg @ g
        z = proj[t]
        if z == 0:
            continue
        dev = float(np.max(np.abs(proj / z - e_t)))
        if mode == "unstabilized" or dev <= delta_s or rank == 0:
            chosen = (rank, g, proj, z, dev)
            break
    rank, g, proj, z, dev = chosen
    if dev > delta_s + 1e-9 and mode != "unstabilized":
        raise StabilityError(f"LOD function violates the stability bound ({dev:.3e} > {delta_s})")

    norm = float(np.sqrt(g @ lod.D @ g))
    g_hat = g / norm
    res = float(np.linalg.norm(B @ g_hat)) if B.shape[0] else 0.0
    h = lod.system.hierarchy
    patch = lod.patch
    return SlodFunction(
        level=patch.level,
        center=int(lod.system.elements[t]),
        patch=patch,
        values=lod.function(g_hat),
        companion=Q0Function(h.exponent(patch.level), patch.box, g_hat),
        projection=proj,
        norm=norm,
        boundary_residual=res,
        kept_rank=rank,
        admissible_rank=r_max,
        stability_deviation=dev,
        z=float(z),
    )


def _one(hierarchy, coeff, level, order, delta_s, mode, center):
    patch = build_patch(hierarchy, PatchKind.LOD, level, center, order)
    lod = compute_patch_lod(hierarchy, coeff, patch)
    local = int(np.flatnonzero(lod.system.elements == center)[0])
    return build_slod_function(lod, local, delta_s, mode)


def slod_level_basis(
    hierarchy: MeshHierarchy, coeff, level: int, order: int, delta_s: float = DEFAULT_DELTA_S,
    mode: str = "slod", n_jobs: int = 1,
) -> list[SlodFunction]:
    """One function per level-``level`` cell, ordered by cell index."""
    job = partial(_one, hierarchy, coeff, level, order, delta_s, mode)
    return parallel_map(job, range(hierarchy.num_elements(level)), n_jobs)


def global_counterpart(hierarchy: MeshHierarchy, slod: SlodFunction, coeff, system=None) -> FineFunction:
    """Global fine solution driven by the companion (the unlocalized function)."""
    from .oracle import GlobalFineSystem

    system = system or GlobalFineSystem(hierarchy, coeff)
    return system.solve_load(load_vector(hierarchy, slod.companion))
