"""Linear algebra used throughout: SPD factorization, CG, SVD-based kernels and eigenvalues.

Sparse symmetric matrices are plain ``scipy.sparse.csr_matrix`` objects storing
both triangles.  Direct factorizations go through SuperLU in symmetric mode
without pivoting, so a non-positive pivot exposes an indefinite matrix.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

CONDITION_CUTOFF = 1e15
LSTSQ_RCOND = 1e-12
DENSE_LIMIT = 2000


class FactorizationError(np.linalg.LinAlgError):
    """A matrix expected to be SPD could not be factorized."""


class BreakdownError(ArithmeticError):
    """CG encountered zero or negative curvature."""


class EigenError(ArithmeticError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=np.float64)
    A.sum_duplicates()
    A.sort_indices()
    return A


class CholeskyFactor:
    """Reusable SPD factorization ``A = L D L^T`` (SuperLU, symmetric ordering)."""

    def __init__(self, A):
        A = sp.csc_matrix(A, dtype=np.float64)
        n = A.shape[0]
        if A.shape != (n, n):
            raise FactorizationError("matrix is not square")
        self.n = n
        if n == 0:
            self._lu = None
            return
        try:
            lu = spla.splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise FactorizationError(f"factorization failed: {exc}") from exc
        pivots = lu.U.diagonal()
        bad = np.flatnonzero(~(pivots > 0))
        if bad.size:
            j = int(bad[0])
            raise FactorizationError(
                f"non-positive pivot {pivots[j]:.3e} at row {int(lu.perm_c[j])} (elimination step {j})"
            )
        self._lu = lu

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=np.float64)
        if self.n == 0:
            return np.zeros_like(rhs)
        if rhs.ndim == 2 and rhs.shape[1] == 0:
            return np.zeros_like(rhs)
        return self._lu.solve(np.asfortranarray(rhs) if rhs.ndim == 2 else rhs)


def cholesky_factor(A) -> CholeskyFactor:
    return CholeskyFactor(A)


def solve(factor: CholeskyFactor, rhs):
    return factor.solve(rhs)


def cg(A, b, x0=None, max_iters=None, rtol=1e-10):
    """Plain conjugate gradients.

    Returns the final iterate and the residual 2-norm history (starting with the
    initial residual).  Stops after ``max_iters`` steps or once
    ``||r|| <= rtol * ||b||``.
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    max_iters = n if max_iters is None else int(max_iters)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A @ x
    p = r.copy()
    rr = float(r @ r)
    bnorm = float(np.linalg.norm(b))
    history = [np.sqrt(rr)]
    for it in range(max_iters):
        if np.sqrt(rr) <= rtol * bnorm:
            break
        Ap = A @ p
        curv = float(p @ Ap)
        if not curv > 0:
            raise BreakdownError(f"CG breakdown at iteration {it}: p^T A p = {curv:.3e}")
        alpha = rr / curv
        x += alpha * p
        r -= alpha * Ap
        rr_new = float(r @ r)
        history.append(np.sqrt(rr_new))
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, np.array(history)


def cg_multi(A, B, max_iters, rtol=0.0):
    """Independent CG runs for every column of ``B`` from zero initial guesses.

    Columns whose relative residual reaches ``rtol`` are frozen.  Returns
    ``(X, relres, iterations)``; ``X`` keeps exact zeros where the Krylov
    iterates vanish.
    """
    B = np.asarray(B, dtype=np.float64)
    n, ncol = B.shape
    X = np.zeros((n, ncol))
    R = B.copy()
    P = R.copy()
    rr = np.einsum("ij,ij->j", R, R)
    bnorm = np.sqrt(rr)
    iters = np.zeros(ncol, dtype=np.int64)
    active = rr > (rtol * bnorm) ** 2
    for it in range(int(max_iters)):
        if not active.any():
            break
        cols = np.flatnonzero(active)
        Pa = P[:, cols]
        APa = np.asarray(A @ Pa)
        curv = np.einsum("ij,ij->j", Pa, APa)
        if np.any(~(curv > 0)):
            j = int(cols[np.flatnonzero(~(curv > 0))[0]])
            raise BreakdownError(f"CG breakdown in column {j} at iteration {it}")
        alpha = rr[cols] / curv
        X[:, cols] += Pa * alpha
        R[:, cols] -= APa * alpha
        rr_new = np.einsum("ij,ij->j", R[:, cols], R[:, cols])
        P[:, cols] = R[:, cols] + Pa * (rr_new / rr[cols])
        rr[cols] = rr_new
        iters[cols] += 1
        active[cols] = rr_new > (rtol * bnorm[cols]) ** 2
    relres = np.sqrt(rr) / np.where(bnorm > 0, bnorm, 1.0)
    return X, relres, iters


def svd(M):
    """Thin SVD ``M = U diag(s) V^T`` with singular values descending."""
    M = np.asarray(M, dtype=np.float64)
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"SVD did not converge: {exc}") from exc
    return U, s, Vt.T


def qr(M):
    return np.linalg.qr(np.asarray(M, dtype=np.float64), mode="reduced")


def admissible_rank(s, cutoff=CONDITION_CUTOFF) -> int:
    """Number of leading singular values with ``s[0] / s[i] <= cutoff``."""
    s = np.asarray(s)
    if s.size == 0 or not s[0] > 0:
        return 0
    return int(np.count_nonzero((s > 0) & (s[0] <= cutoff * np.where(s > 0, s, 1.0))))


def lstsq(M, rhs, rcond=LSTSQ_RCOND):
    """Minimum-norm least-squares solution via SVD with relative cutoff ``rcond``."""
    U, s, V = svd(M)
    if s.size == 0 or s[0] == 0:
        return np.zeros((np.shape(M)[1],) + np.shape(rhs)[1:])
    keep = s > rcond * s[0]
    coef = U[:, keep].T @ rhs
    coef = coef / (s[keep][:, None] if np.ndim(rhs) == 2 else s[keep])
    return V[:, keep] @ coef


def null_space(M, rtol=LSTSQ_RCOND):
    """Orthonormal basis of the numerical kernel (singular values <= rtol * s_max)."""
    M = np.asarray(M, dtype=np.float64)
    ncol = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(ncol)
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    rank = int(np.count_nonzero(s > rtol * s[0])) if s.size and s[0] > 0 else 0
    return Vt[rank:].T.copy()


def extremal_eigs(A, which="both", tol=1e-8):
    """Smallest and/or largest eigenvalue of a symmetric matrix.

    Dense eigensolve up to ``DENSE_LIMIT``; Lanczos above, with the residual
    ``||A v - lambda v|| <= tol * |lambda|`` checked before returning.
    """
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=np.float64)
        w = scipy.linalg.eigvalsh(dense)
        lo, hi = float(w[0]), float(w[-1])
    else:
        A = as_csr(A)
        lo = hi = None
        if which in ("min", "both"):
            lo = _lanczos(A, "min", tol)
        if which in ("max", "both"):
            hi = _lanczos(A, "max", tol)
    if which == "min":
        return lo
    if which == "max":
        return hi
    return lo, hi


def _lanczos(A, which, tol):
    if which == "max":
        w, v = spla.eigsh(A, k=1, which="LA", tol=tol * 1e-2, maxiter=20 * A.shape[0])
    else:
        w, v = spla.eigsh(A, k=1, sigma=0.0, which="LM", tol=tol * 1e-2, maxiter=20 * A.shape[0])
    lam = float(w[0])
    vec = v[:, 0] / np.linalg.norm(v[:, 0])
    res = float(np.linalg.norm(A @ vec - lam * vec))
    if res > tol * max(abs(lam), 1e-300):
        raise EigenError(f"Lanczos residual {res:.2e} above tolerance for the {which} eigenvalue", lam)
    return lam


def condition_number(A) -> float:
    lo, hi = extremal_eigs(A, "both")
    return hi / lo


def spectral_norm(M, iters=50, tol=1e-6) -> float:
    """2-norm of a (sparse) rectangular matrix: exact below DENSE_LIMIT, power iteration above."""
    rows, cols = M.shape
    if rows == 0 or cols == 0:
        return 0.0
    if max(rows, cols) <= DENSE_LIMIT:
        dense = M.toarray() if sp.issparse(M) else np.asarray(M)
        return float(np.linalg.norm(dense, 2)) if dense.any() else 0.0
    rng = np.random.default_rng(0)
    x = rng.standard_normal(cols)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = M.T @ (M @ x)
        lam_new = float(np.linalg.norm(y))
        if lam_new == 0:
            return 0.0
        x = y / lam_new
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(lam))


def mmwrite(path, A, comment="") -> None:
    from .io import atomic_write_bytes
    import io

    buf = io.BytesIO()
    A = as_csr(A)
    square = A.shape[0] == A.shape[1]
    sym = "symmetric" if square and (A - A.T).count_nonzero() == 0 else "general"
    scipy.io.mmwrite(buf, sp.coo_matrix(A), comment=comment, symmetry=sym)
    atomic_write_bytes(path, buf.getvalue())


def mmread(path) -> sp.csr_matrix:
    return as_csr(scipy.io.mmread(path))
