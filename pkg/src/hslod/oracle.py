"""Brute-force reference computations for validating the localized constructions."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .fem import FineFunction, PatchSystem, box_stiffness, load_vector, q0_load_matrix
from .mesh import MeshHierarchy, Patch
from .numerics import CholeskyFactor, null_space

FINE_BUDGET = 300_000
KERNEL_BUDGET = 4096


class BudgetError(MemoryError):
    pass


class GlobalFineSystem:
    """Fine-mesh Galerkin system on the whole domain with a cached factorization."""

    def __init__(self, hierarchy: MeshHierarchy, coeff, budget: int = FINE_BUDGET):
        self.hierarchy = hierarchy
        self.coeff = coeff
        n_int = (hierarchy.n_fine - 1) ** hierarchy.dim
        if n_int > budget:
            raise BudgetError(f"fine system has {n_int} unknowns, budget is {budget}")
        self.box = hierarchy.domain_box_fine()
        self.full_stiffness = box_stiffness(coeff.fine_values(hierarchy.fine_exponent), self.box, hierarchy.h)
        self.inside, _ = hierarchy.box_node_masks(self.box)
        self.interior = np.flatnonzero(self.inside)
        self.stiffness = self.full_stiffness[self.interior][:, self.interior].tocsr()
        self.factor = CholeskyFactor(self.stiffness)

    def solve_load(self, load_full) -> FineFunction:
        """Solve with a load vector given on all fine nodes (boundary entries ignored)."""
        load_full = np.asarray(load_full)
        u = np.zeros(self.inside.size)
        u[self.interior] = self.factor.solve(load_full[self.interior])
        return FineFunction(self.hierarchy.fine_exponent, self.box, u)

    def fine_solve(self, f) -> FineFunction:
        return self.solve_load(load_vector(self.hierarchy, f))

    def energy_norm(self, u: FineFunction | np.ndarray) -> float:
        v = u.values if isinstance(u, FineFunction) else np.asarray(u)
        return float(np.sqrt(max(v @ (self.full_stiffness @ v), 0.0)))


def fine_solve(hierarchy: MeshHierarchy, coeff, f) -> FineFunction:
    return GlobalFineSystem(hierarchy, coeff).fine_solve(f)


def kernel_matrix(system: GlobalFineSystem, level: int) -> tuple[np.ndarray, np.ndarray]:
    """``D[n, m] = integral over T_n of the global solution for chi_{K_m}`` and those solutions."""
    h = system.hierarchy
    if h.num_elements(level) > KERNEL_BUDGET:
        raise BudgetError(f"level {level} has {h.num_elements(level)} cells, budget is {KERNEL_BUDGET}")
    F = q0_load_matrix(system.box, h.h, h.ratio(level))
    FI = F[system.interior].toarray()
    U = system.factor.solve(FI)
    D = FI.T @ U
    return 0.5 * (D + D.T), U


def global_kernel_basis(hierarchy: MeshHierarchy, coeff, level: int, system=None, rtol=1e-10):
    """Orthonormal coefficient vectors spanning the kernel of the level-l integral map
    composed with the averages on level l - 1.

    Returns ``(kernel, D)``; the kernel functions are the global solutions for
    ``sum_K c_K chi_K`` with vanishing averages on every level-(l-1) cell.
    """
    system = system or GlobalFineSystem(hierarchy, coeff)
    D, _ = kernel_matrix(system, level)
    if level == 0:
        return np.eye(D.shape[0]), D
    # restrict rows to parent-cell integrals: sum the children rows
    n = hierarchy.num_elements(level)
    parents = hierarchy.parent(level, np.arange(n))
    R = np.zeros((hierarchy.num_elements(level - 1), n))
    R[parents, np.arange(n)] = 1.0
    Dl = R @ D
    kernel = null_space(Dl, rtol)
    if kernel.shape[1] < n - hierarchy.num_elements(level - 1):
        raise AssertionError("kernel dimension below N_l - N_{l-1}")
    return kernel, Dl


def dense_kkt_lod(hierarchy: MeshHierarchy, coeff, patch: Patch):
    """Solve the saddle-point system for every cell of the patch in one dense factorization.

    Constraint rows are cell averages.  Returns ``(psi, multipliers, kkt)``
    with ``psi`` of shape (n_interior, n_e).
    """
    system = PatchSystem(hierarchy, coeff, patch)
    K = system.interior_stiffness.toarray()
    P = (system.load[system.interior].toarray() / system.cell_volume).T
    n_i, n_e = K.shape[0], P.shape[0]
    kkt = np.block([[K, P.T], [P, np.zeros((n_e, n_e))]])
    rhs = np.vstack([np.zeros((n_i, n_e)), np.eye(n_e)])
    sol = scipy.linalg.solve(kkt, rhs, assume_a="sym")
    return sol[:n_i], sol[n_i:], kkt
