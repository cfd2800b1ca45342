"""Constrained energy minimizers on a patch, solved through the Schur complement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import FineFunction, PatchSystem
from .mesh import MeshHierarchy, Patch
from .numerics import CONDITION_CUTOFF


class DegeneratePatchError(np.linalg.LinAlgError):
    pass


@dataclass
class PatchLodData:
    """Local harmonics ``u_K`` for every cell K of the patch and the derived LOD functions.

    ``D[T, K]`` is the integral of ``u_K`` over T.  Coefficient vectors in this
    module act on the harmonics: ``psi = sum_K g_K u_K``.
    """

    system: PatchSystem
    harmonics: np.ndarray  # (n_interior, n_e)
    D: np.ndarray
    D_inv: np.ndarray
    B: np.ndarray  # conormal residuals (n_sigma, n_e)

    @property
    def patch(self) -> Patch:
        return self.system.patch

    @property
    def n_elements(self) -> int:
        return self.D.shape[0]

    @property
    def averages(self) -> np.ndarray:
        """``Pi_l`` of each harmonic: column K holds its cell averages."""
        return self.D / self.system.cell_volume

    def lod_coefficients(self) -> np.ndarray:
        """Column K: coefficients ``g`` of the LOD function whose cell averages are ``e_K``."""
        return self.D_inv * self.system.cell_volume

    def interior_values(self, g: np.ndarray) -> np.ndarray:
        return self.harmonics @ g

    def function(self, g: np.ndarray) -> FineFunction:
        h = self.system.hierarchy
        return FineFunction(h.fine_exponent, self.system.box, self.system.full_values(self.harmonics @ g))

    def energy_gram(self) -> np.ndarray:
        """``a(u_K, u_J)`` which equals ``D`` by Galerkin orthogonality."""
        return self.D

    def lod_functions(self) -> list[FineFunction]:
        G = self.lod_coefficients()
        return [self.function(G[:, k]) for k in range(self.n_elements)]


def compute_patch_lod(hierarchy: MeshHierarchy, coeff, patch: Patch) -> PatchLodData:
    system = PatchSystem(hierarchy, coeff, patch)
    U = system.harmonics()
    D = np.asarray(system.load[system.interior].T @ U)
    D = 0.5 * (D + D.T)
    cond = np.linalg.cond(D)
    if not np.isfinite(cond) or cond > CONDITION_CUTOFF:
        raise DegeneratePatchError(
            f"patch matrix singular (condition {cond:.2e}) for level {patch.level} "
            f"center {patch.center} box {patch.box.lo}-{patch.box.hi}"
        )
    D_inv = np.linalg.inv(D)
    D_inv = 0.5 * (D_inv + D_inv.T)
    B = system.residual_matrix(U)
    return PatchLodData(system, U, D, D_inv, B)
