"""Pointwise Hermitian linear algebra on fields of small matrices.

A Hermitian field is an array of shape ``grid.shape + (n, n)``; the metric
``g`` may also be passed as a single ``(n, n)`` matrix, which broadcasts.
Relative eigenvalues are those of the pencil ``(X, g)``, i.e. of
``g^{-1/2} X g^{-1/2}``, always sorted ascending.
"""

from __future__ import annotations

import numpy as np


class NotPositiveDefinite(ValueError):
    """A field that must be positive definite is not, at some grid point."""

    def __init__(self, what: str, index, min_eig: float):
        self.what = what
        self.index = tuple(int(i) for i in index)
        self.min_eig = float(min_eig)
        super().__init__(f"{what} not positive definite at {self.index}: min eigenvalue {min_eig:.3e}")


def dagger(A: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(A, -1, -2))


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + dagger(A))


def hermitian_residual(A: np.ndarray) -> float:
    return float(np.abs(A - dagger(A)).max())


def identity_field(shape, n: int) -> np.ndarray:
    out = np.zeros(tuple(shape) + (n, n), dtype=complex)
    for i in range(n):
        out[..., i, i] = 1.0
    return out


def det(A: np.ndarray) -> np.ndarray:
    """Determinant of stacked 2x2 or 3x3 matrices by cofactor expansion."""
    n = A.shape[-1]
    if n == 2:
        return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    if n == 3:
        return (
            A[..., 0, 0] * (A[..., 1, 1] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 1])
            - A[..., 0, 1] * (A[..., 1, 0] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 0])
            + A[..., 0, 2] * (A[..., 1, 0] * A[..., 2, 1] - A[..., 1, 1] * A[..., 2, 0])
        )
    return np.linalg.det(A)


def adjugate(A: np.ndarray) -> np.ndarray:
    n = A.shape[-1]
    out = np.empty_like(A)
    if n == 2:
        out[..., 0, 0] = A[..., 1, 1]
        out[..., 1, 1] = A[..., 0, 0]
        out[..., 0, 1] = -A[..., 0, 1]
        out[..., 1, 0] = -A[..., 1, 0]
        return out
    if n == 3:
        for i in range(3):
            for j in range(3):
                r = [k for k in range(3) if k != j]
                c = [k for k in range(3) if k != i]
                minor = A[..., r[0], c[0]] * A[..., r[1], c[1]] - A[..., r[0], c[1]] * A[..., r[1], c[0]]
                out[..., i, j] = (-1) ** (i + j) * minor
        return out
    return np.linalg.inv(A) * np.linalg.det(A)[..., None, None]


def inv(A: np.ndarray) -> np.ndarray:
    """Inverse of stacked small matrices via the adjugate."""
    if A.shape[-1] > 3:
        return np.linalg.inv(A)
    return adjugate(A) / det(A)[..., None, None]


def whiten(X: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Return ``L^{-1} X L^{-H}`` where ``g = L L^H`` (Cholesky)."""
    X, g = np.broadcast_arrays(X, g)
    L = cholesky(g)
    Linv = inv(L)
    return hermitian_part(Linv @ X @ dagger(Linv))


def cholesky(g: np.ndarray) -> np.ndarray:
    n = g.shape[-1]
    if n != 2:
        return np.linalg.cholesky(g)
    p = g[..., 0, 0].real
    r = g[..., 1, 1].real
    q = g[..., 0, 1]
    a = np.sqrt(p)
    c = np.conj(q) / a
    d = np.sqrt(r - np.abs(q) ** 2 / p)
    L = np.zeros(g.shape, dtype=complex)
    L[..., 0, 0] = a
    L[..., 1, 0] = c
    L[..., 1, 1] = d
    return L


def _eig_2x2(A: np.ndarray) -> np.ndarray:
    a = A[..., 0, 0].real
    d = A[..., 1, 1].real
    b = np.abs(A[..., 0, 1])
    mid = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    hi = mid + rad
    lo = mid - rad
    # lo from det/hi keeps relative accuracy when lo << hi
    with np.errstate(divide="ignore", invalid="ignore"):
        lo_alt = (a * d - b * b) / hi
    lo = np.where((hi > 0) & (lo > 0), lo_alt, lo)
    return np.stack([lo, hi], axis=-1)


def check_positive(g: np.ndarray, what: str = "metric") -> None:
    """Raise :class:`NotPositiveDefinite` naming the worst point of ``g``."""
    lam = hermitian_eigvalsh(g)
    lo = lam[..., 0]
    if lo.ndim == 0:
        if lo <= 0:
            raise NotPositiveDefinite(what, (), lo)
        return
    idx = np.unravel_index(np.argmin(lo), lo.shape)
    if lo[idx] <= 0:
        raise NotPositiveDefinite(what, idx, lo[idx])


def hermitian_eigvalsh(A: np.ndarray) -> np.ndarray:
    if A.shape[-1] == 2:
        return _eig_2x2(A)
    return np.linalg.eigvalsh(A)


def rel_eigen(X: np.ndarray, g: np.ndarray, *, check: bool = True) -> np.ndarray:
    """Relative eigenvalues of ``X`` with respect to ``g``, ascending.

    Raises
    ------
    NotPositiveDefinite
        If ``g`` fails to be positive definite somewhere (``check=True``).
    """
    if check:
        check_positive(g)
    if g.ndim == 2 and np.array_equal(g, np.eye(g.shape[-1])):
        A = X
    else:
        A = whiten(X, g)
    return hermitian_eigvalsh(A)


def min_margin(X: np.ndarray, g: np.ndarray) -> float:
    """Infimum over the grid of the smallest relative eigenvalue of ``X``."""
    return float(rel_eigen(X, g)[..., 0].min())


def trace_rel(X: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Pointwise ``tr(g^{-1} X)``."""
    if g.ndim == 2 and np.array_equal(g, np.eye(g.shape[-1])):
        return np.trace(X, axis1=-2, axis2=-1).real
    return np.einsum("...ij,...ji->...", inv(np.asarray(g)), X).real
