"""Gram matrix of kernel cross-derivative blocks and the regularized solve.

For training points z_1..z_N in R^{2d} the Gram matrix G is the 2dN x 2dN
symmetric positive-semidefinite matrix whose (n, m) block of size 2d x 2d is
``kernel.cross(z_n, z_m)``.  The fitted coefficient vector solves

    (G + lambda * N * I) c = rhs,

which is strictly positive definite for lambda > 0 and is factorized by
Cholesky.  ``SymplecticBlocks`` applies the block-diagonal symplectic matrix
(one 2d x 2d block J = [[0, I], [-I, 0]] per training point) without ever
materializing it.

Assembly is vectorized and single-pass, so the produced matrix is identical
run to run regardless of BLAS threading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

__all__ = [
    "FactorizationError",
    "SymplecticBlocks",
    "symplectic_matrix",
    "assemble_gram",
    "solve_regularized",
    "spd_factor",
]

# rows of training points converted to matrix rows per assembly chunk
_ASSEMBLY_CHUNK = 128


class FactorizationError(RuntimeError):
    """A positive-definite factorization or solve could not be completed."""


def symplectic_matrix(d: int) -> np.ndarray:
    """Dense canonical symplectic matrix J = [[0, I_d], [-I_d, 0]]."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    J = np.zeros((2 * d, 2 * d))
    J[:d, d:] = np.eye(d)
    J[d:, :d] = -np.eye(d)
    return J


@dataclass(frozen=True)
class SymplecticBlocks:
    """Block-diagonal symplectic matrix acting on stacked phase vectors.

    Represents diag(J, ..., J) with N blocks of size 2d.  The represented
    matrix is orthogonal (J J^T = I) and antisymmetric (J^T = -J), so
    ``apply_transpose`` is also the inverse of ``apply``.
    """

    d: int
    n: int

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ValueError(f"d and n must be >= 1, got d={self.d}, n={self.n}")

    @property
    def dim(self) -> int:
        return 2 * self.d * self.n

    def _blocks(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"vector length {v.shape} does not match 2dN = {self.dim}")
        return v.reshape(self.n, 2 * self.d)

    def apply(self, v) -> np.ndarray:
        """J v: within each 2d block, (q, p) -> (p, -q)."""
        b = self._blocks(v)
        out = np.empty_like(b)
        out[:, : self.d] = b[:, self.d :]
        out[:, self.d :] = -b[:, : self.d]
        return out.reshape(-1)

    def apply_transpose(self, v) -> np.ndarray:
        """J^T v = -J v: within each 2d block, (q, p) -> (-p, q)."""
        b = self._blocks(v)
        out = np.empty_like(b)
        out[:, : self.d] = -b[:, self.d :]
        out[:, self.d :] = b[:, : self.d]
        return out.reshape(-1)

    def dense(self) -> np.ndarray:
        """Materialize the full 2dN x 2dN matrix (tests and small problems only)."""
        J = symplectic_matrix(self.d)
        out = np.zeros((self.dim, self.dim))
        for k in range(self.n):
            s = 2 * self.d * k
            out[s : s + 2 * self.d, s : s + 2 * self.d] = J
        return out


def _check_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError(f"points must be a nonempty (N, 2d) array, got shape {pts.shape}")
    if pts.shape[1] < 2 or pts.shape[1] % 2 != 0:
        raise ValueError(f"phase dimension must be even and >= 2, got {pts.shape[1]}")
    return pts


def assemble_gram(kernel, points) -> np.ndarray:
    """Assemble the 2dN x 2dN matrix of kernel cross-derivative blocks.

    Block (n, m) is ``kernel.cross(points[n], points[m])``.  The result is
    exactly symmetric (block (m, n) is assembled through the same arithmetic)
    and positive semidefinite up to round-off.

    Parameters
    ----------
    kernel : GaussianKernel or compatible
        Must provide ``cross_pairwise``.
    points : array_like, shape (N, 2d)
        Training phase points, all of one dimension.
    """
    pts = _check_points(points)
    n, dim = pts.shape
    G = np.empty((n * dim, n * dim))
    for start in range(0, n, _ASSEMBLY_CHUNK):
        stop = min(start + _ASSEMBLY_CHUNK, n)
        blocks = kernel.cross_pairwise(pts[start:stop], pts)  # (chunk, n, dim, dim)
        rows = blocks.transpose(0, 2, 1, 3).reshape((stop - start) * dim, n * dim)
        G[start * dim : stop * dim, :] = rows
    return G


def spd_factor(mat: np.ndarray, allow_jitter: bool = True):
    """Cholesky-factor a symmetric matrix expected to be positive definite.

    On failure and with ``allow_jitter``, adds a diagonal jitter of
    1e-12 * trace(mat)/dim and escalates it by 10x up to three times.

    Returns
    -------
    factor : (ndarray, bool)
        Factorization usable with ``scipy.linalg.cho_solve``.
    jitter : float
        Diagonal shift actually applied (0.0 on the clean path).
    """
    dim = mat.shape[0]
    try:
        factor = cho_factor(mat, lower=True)
        if not allow_jitter:
            # potrf can return roundoff-scale pivots on an exactly singular
            # matrix; estimate the condition number from the factor diagonal
            # and refuse factors that cannot support a reliable solve
            diag = np.abs(np.diag(factor[0]))
            cond_est = (diag.max() / diag.min()) ** 2 if diag.min() > 0 else np.inf
            if cond_est > 1.0 / (dim * np.finfo(float).eps):
                raise FactorizationError(
                    f"matrix of dimension {dim} is numerically singular "
                    f"(estimated condition {cond_est:.3g}); no jitter permitted"
                )
        return factor, 0.0
    except LinAlgError:
        if not allow_jitter:
            raise FactorizationError(
                f"matrix of dimension {dim} is not numerically positive definite "
                f"(trace {np.trace(mat):.6g}); no jitter permitted"
            ) from None
    jitter = 1e-12 * np.trace(mat) / dim
    if jitter <= 0:
        jitter = 1e-12
    for _ in range(3):
        try:
            return cho_factor(mat + jitter * np.eye(dim), lower=True), jitter
        except LinAlgError:
            jitter *= 10.0
    raise FactorizationError(
        f"Cholesky failed after jitter escalation to {jitter:.3g} "
        f"(dimension {dim}, trace {np.trace(mat):.6g})"
    )


def solve_regularized(
    G: np.ndarray,
    lam: float,
    n: int,
    rhs: np.ndarray,
    tol: float = 1e-8,
) -> np.ndarray:
    """Solve (G + lam * n * I) c = rhs via Cholesky.

    The system is positive definite in exact arithmetic for lam > 0.  If the
    factorization needs jitter (round-off at tiny lam), the jittered factor is
    used as a preconditioner and the solution is polished by iterative
    refinement against the unjittered matrix.  The returned solution always
    satisfies ``||(G + lam n I) c - rhs|| <= tol * ||rhs||``; if that residual
    bound cannot be met, a :class:`FactorizationError` reports the
    conditioning instead of returning a silently inaccurate solution.
    """
    if lam <= 0 or not np.isfinite(lam):
        raise ValueError(f"lam must be positive and finite, got {lam}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rhs = np.asarray(rhs, dtype=float)
    dim = G.shape[0]
    if rhs.shape != (dim,):
        raise ValueError(f"rhs length {rhs.shape} does not match system dimension {dim}")

    ridge = lam * n
    A = G + ridge * np.eye(dim)
    factor, jitter = spd_factor(A)

    rhs_norm = np.linalg.norm(rhs)
    c = cho_solve(factor, rhs)
    residual = rhs - A @ c
    for _ in range(2):
        if np.linalg.norm(residual) <= tol * rhs_norm:
            break
        c = c + cho_solve(factor, residual)
        residual = rhs - A @ c
    res_norm = np.linalg.norm(residual)
    if res_norm > tol * rhs_norm:
        raise FactorizationError(
            f"regularized solve did not reach residual {tol:.1e} * ||rhs||: "
            f"achieved {res_norm:.3e} vs bound {tol * rhs_norm:.3e} "
            f"(dimension {dim}, lam*N {ridge:.3g}, jitter {jitter:.3g})"
        )
    return c
