"""Gaussian kernel with analytic first- and cross-derivative blocks.

The regression machinery consumes three kernel quantities: the scalar value
k(x, y), the gradient with respect to the first argument, and the matrix of
mixed second derivatives d2k/dx_i dy_j.  Any Mercer kernel exposing this
interface (``eval`` / ``grad1`` / ``cross`` plus the batched ``*_pairwise``
variants) can be dropped in; the Gaussian family is the one shipped here.

For a bandwidth ``eta > 0``::

    k(x, y)          = exp(-||x - y||^2 / eta^2)
    grad1(x, y)[i]   = -2 (x_i - y_i) / eta^2 * k(x, y)
    cross(x, y)[i,j] = (2 d_ij / eta^2 - 4 (x_i - y_i)(x_j - y_j) / eta^4)
                       * k(x, y)

``fd_reference`` computes central finite-difference approximations of the
same derivatives.  It exists purely as a test oracle for the analytic
formulas and is never used on any production path.

All functions here are pure and operate on immutable inputs, so concurrent
callers need no synchronization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["GaussianKernel", "fd_reference"]


def _as_point(z, name: str) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size < 2:
        raise ValueError(f"{name} must be a 1-d vector of length >= 2, got shape {z.shape}")
    return z


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = _as_point(x, "x")
    y = _as_point(y, "y")
    if x.size != y.size:
        raise ValueError(f"dimension mismatch: x has length {x.size}, y has length {y.size}")
    return x, y


@dataclass(frozen=True)
class GaussianKernel:
    """Isotropic Gaussian (RBF) kernel with bandwidth ``eta``.

    Parameters
    ----------
    eta : float
        Bandwidth, in the same units as the phase-space coordinates.
        Must be strictly positive and finite.
    """

    eta: float

    def __post_init__(self):
        if not np.isfinite(self.eta) or self.eta <= 0:
            raise ValueError(f"bandwidth eta must be positive and finite, got {self.eta}")

    # -- single-pair interface ------------------------------------------------

    def eval(self, x, y) -> float:
        """Kernel value k(x, y) = exp(-||x - y||^2 / eta^2), in (0, 1]."""
        x, y = _check_pair(x, y)
        d = x - y
        return float(np.exp(-np.dot(d, d) / self.eta**2))

    def grad1(self, x, y) -> np.ndarray:
        """Gradient of k with respect to its first argument, shape (dim,)."""
        x, y = _check_pair(x, y)
        d = x - y
        k = np.exp(-np.dot(d, d) / self.eta**2)
        return (-2.0 / self.eta**2) * d * k

    def cross(self, x, y) -> np.ndarray:
        """Matrix of mixed partials d2k/dx_i dy_j, shape (dim, dim).

        Symmetric in (i, j) for this radial kernel, and satisfies
        ``cross(x, y) == cross(y, x).T`` exactly (same arithmetic path).
        """
        x, y = _check_pair(x, y)
        d = x - y
        k = np.exp(-np.dot(d, d) / self.eta**2)
        dim = x.size
        return ((2.0 / self.eta**2) * np.eye(dim) - (4.0 / self.eta**4) * np.outer(d, d)) * k

    # -- batched interface ----------------------------------------------------
    #
    # X has shape (n, dim), Y has shape (m, dim).  These are what the Gram
    # assembly and grid prediction paths call; they must agree with the
    # single-pair functions entry for entry (tested).

    def eval_pairwise(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """All kernel values, shape (n, m)."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        diff = X[:, None, :] - Y[None, :, :]
        return np.exp(-np.einsum("nmk,nmk->nm", diff, diff) / self.eta**2)

    def grad1_pairwise(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Gradients with respect to the rows of X, shape (n, m, dim)."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        diff = X[:, None, :] - Y[None, :, :]
        k = np.exp(-np.einsum("nmk,nmk->nm", diff, diff) / self.eta**2)
        return (-2.0 / self.eta**2) * diff * k[:, :, None]

    def cross_pairwise(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Mixed-partial blocks for every pair of rows, shape (n, m, dim, dim)."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        dim = X.shape[1]
        diff = X[:, None, :] - Y[None, :, :]
        k = np.exp(-np.einsum("nmk,nmk->nm", diff, diff) / self.eta**2)
        outer = diff[:, :, :, None] * diff[:, :, None, :]
        blocks = (2.0 / self.eta**2) * np.eye(dim)[None, None, :, :] - (4.0 / self.eta**4) * outer
        return blocks * k[:, :, None, None]


def fd_reference(evalfn, x, y, step_grad: float = 1e-5, step_cross: float = 1e-4):
    """Central finite-difference gradient and cross-derivative of a kernel.

    Test oracle only: O(step^2) truncation error, independent of any analytic
    derivative formula.  ``evalfn(x, y)`` must be smooth near (x, y).  The
    default steps balance truncation against round-off at double precision
    for O(1) length scales; callers probing sharper kernels should scale the
    steps by the kernel bandwidth.

    Returns
    -------
    grad : ndarray, shape (dim,)
        Central difference of ``evalfn`` in each coordinate of ``x``.
    cross : ndarray, shape (dim, dim)
        Four-point central difference in (x_i, y_j).
    """
    x, y = _check_pair(x, y)
    if step_grad <= 0 or step_cross <= 0:
        raise ValueError("finite-difference steps must be positive")
    dim = x.size

    grad = np.empty(dim)
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = step_grad
        grad[i] = (evalfn(x + e, y) - evalfn(x - e, y)) / (2.0 * step_grad)

    cross = np.empty((dim, dim))
    h = step_cross
    for i in range(dim):
        ei = np.zeros(dim)
        ei[i] = h
        for j in range(dim):
            ej = np.zeros(dim)
            ej[j] = h
            cross[i, j] = (
                evalfn(x + ei, y + ej)
                - evalfn(x + ei, y - ej)
                - evalfn(x - ei, y + ej)
                + evalfn(x - ei, y - ej)
            ) / (4.0 * h * h)

    return grad, cross
