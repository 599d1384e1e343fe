"""Elementary symmetric polynomials of eigenvalues and their matrix calculus.

Vector functions act on the last axis, so a field of eigenvalue vectors of
shape ``(..., n)`` is handled in one call.  Matrix functions work on stacked
``(..., n, n)`` arrays and never diagonalise: ``S_k`` of a pencil comes from
the characteristic polynomial and derivatives from the adjugate-type
expansion

    d S_k(A) = tr(P_{k-1}(A) dA),   P_{k-1}(A) = sum_j (-1)^j S_{k-1-j}(A) A^j.
"""

from __future__ import annotations

from math import comb

import numpy as np

from . import tensor


def binom(n: int, k: int) -> int:
    """Exact binomial coefficient C_n^k."""
    return comb(n, k)


def all_elementary(lam) -> np.ndarray:
    """``[S_0, ..., S_n]`` of ``lam`` along the last axis.

    Coefficients of ``prod_i (1 + lam_i x)``, built one factor at a time.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    e = np.zeros(lam.shape[:-1] + (n + 1,))
    e[..., 0] = 1.0
    for i in range(n):
        li = lam[..., i]
        for k in range(i + 1, 0, -1):
            e[..., k] = e[..., k] + li * e[..., k - 1]
    return e


def elementary(k: int, lam) -> np.ndarray | float:
    """``S_k(lam)``; zero for ``k`` beyond the vector length."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if k < 0 or k > n:
        raise ValueError(f"order {k} out of range for length {n}")
    out = all_elementary(lam)[..., k]
    return float(out) if out.ndim == 0 else out


def restricted(k: int, lam, drop) -> np.ndarray | float:
    """``S_{k; drop}(lam)``: ``S_k`` with the entries in ``drop`` set to zero."""
    lam = np.array(lam, dtype=float)
    n = lam.shape[-1]
    drop = [drop] if np.isscalar(drop) else list(drop)
    if len(set(drop)) != len(drop):
        raise ValueError(f"duplicate index in {drop}")
    if any(not 0 <= i < n for i in drop):
        raise ValueError(f"index out of range in {drop} for length {n}")
    lam[..., drop] = 0.0
    return elementary(k, lam)


def restricted_all(k: int, lam) -> np.ndarray:
    """``S_{k;i}(lam)`` for every ``i``, stacked on the last axis."""
    lam = np.asarray(lam, dtype=float)
    return np.stack([restricted(k, lam, i) for i in range(lam.shape[-1])], axis=-1)


# -- matrices --------------------------------------------------------------


def _rel_matrix(X: np.ndarray, g: np.ndarray | None) -> np.ndarray:
    if g is None:
        return X
    return tensor.inv(np.asarray(g)) @ X


def char_coeffs(A: np.ndarray) -> np.ndarray:
    """``[S_0(A), ..., S_n(A)]`` for stacked square matrices (Newton identities)."""
    n = A.shape[-1]
    e = np.zeros(A.shape[:-2] + (n + 1,), dtype=complex)
    e[..., 0] = 1.0
    p = []
    Ak = A
    for k in range(1, n + 1):
        p.append(np.trace(Ak, axis1=-2, axis2=-1))
        if k < n:
            Ak = Ak @ A
    for k in range(1, n + 1):
        acc = 0.0
        for i in range(1, k + 1):
            acc = acc + (-1) ** (i - 1) * e[..., k - i] * p[i - 1]
        e[..., k] = acc / k
    e[..., n] = tensor.det(A)
    return e


def pencil_coeffs(X: np.ndarray, g: np.ndarray | None = None) -> np.ndarray:
    """Real ``[S_0, ..., S_n]`` of the eigenvalues of ``X`` relative to ``g``."""
    if g is not None:
        X, g = np.broadcast_arrays(X, g)
    A = _rel_matrix(X, g)
    e = char_coeffs(A).real
    if g is not None:
        e[..., -1] = (tensor.det(X) / tensor.det(g)).real
    return e


def derivative_poly(A: np.ndarray, k: int, coeffs: np.ndarray | None = None) -> np.ndarray:
    """``P_{k-1}(A)`` so that ``d S_k(A) = tr(P_{k-1}(A) dA)``."""
    n = A.shape[-1]
    if not 0 <= k <= n:
        raise ValueError(f"order {k} out of range for n={n}")
    if coeffs is None:
        coeffs = char_coeffs(A)
    out = np.zeros(A.shape, dtype=complex)
    power = tensor.identity_field(A.shape[:-2], n)
    for j in range(k):
        out += (-1) ** j * coeffs[..., k - 1 - j, None, None] * power
        if j + 1 < k:
            power = power @ A
    return out


def grad_elementary(X: np.ndarray, g: np.ndarray, k: int) -> np.ndarray:
    """Matrix ``D`` with ``d S_k(g^{-1} X) = tr(D dX)``; Hermitian."""
    X, g = np.broadcast_arrays(X, g)
    ginv = tensor.inv(g)
    A = ginv @ X
    return tensor.hermitian_part(derivative_poly(A, k) @ ginv)


def Salpha_inv(X: np.ndarray, g: np.ndarray, alpha: int) -> np.ndarray:
    """``S_alpha`` of the eigenvalues of ``X^{-1}`` relative to ``g^{-1}``.

    Uses ``S_alpha(lambda^*) = S_{n-alpha}(lambda) / S_n(lambda)``.
    """
    n = X.shape[-1]
    e = pencil_coeffs(X, g)
    return e[..., n - alpha] / e[..., n]


def grad_Salpha_inv(X: np.ndarray, g: np.ndarray, alpha: int, check: bool = True) -> np.ndarray:
    """Matrix ``D`` with ``d/ds S_alpha((X + sH)^{-1})|_0 = tr(D H)``.

    With ``B = X^{-1} g`` (the relative inverse) and
    ``d B = -X^{-1} dX X^{-1} g`` this is ``D = -X^{-1} g P_{alpha-1}(B) X^{-1}``.

    Raises
    ------
    NotPositiveDefinite
        If ``X`` is not positive relative to ``g``.
    """
    n = X.shape[-1]
    if not 1 <= alpha <= n:
        raise ValueError(f"alpha={alpha} out of range for n={n}")
    if check:
        tensor.check_positive(tensor.whiten(X, g) if not _is_identity(g) else X, "X")
    X, gg = np.broadcast_arrays(X, g)
    Xinv = tensor.inv(X)
    B = Xinv @ gg
    P = derivative_poly(B, alpha)
    return tensor.hermitian_part(-(Xinv @ gg @ P @ Xinv))


def _is_identity(g: np.ndarray) -> bool:
    return g.ndim == 2 and np.array_equal(g, np.eye(g.shape[-1]))


def grad_log_ratio(X: np.ndarray, g: np.ndarray, alpha: int, coeffs: np.ndarray | None = None) -> np.ndarray:
    """Matrix ``D`` with ``d log(S_n / S_{n-alpha}) = tr(D dX)``, relative to ``g``.

    ``D = X^{-1} - P_{n-alpha-1}(g^{-1} X) g^{-1} / S_{n-alpha}``; equals
    ``-grad_Salpha_inv / S_alpha(lambda^*)`` but avoids the inverse pencil.
    """
    n = X.shape[-1]
    if not 1 <= alpha <= n:
        raise ValueError(f"alpha={alpha} out of range for n={n}")
    ident = _is_identity(np.asarray(g))
    Xinv = tensor.inv(X)
    k = n - alpha
    if k == 0:
        return tensor.hermitian_part(Xinv)
    ginv = np.eye(n) if ident else tensor.inv(np.asarray(g))
    if coeffs is None:
        coeffs = pencil_coeffs(X, None if ident else g)
    # P_{k-1}(A) g^{-1} = sum_j (-1)^j S_{k-1-j} (g^{-1} X)^j g^{-1}
    term = np.broadcast_to(ginv, X.shape)
    acc = coeffs[..., k - 1, None, None] * term
    for j in range(1, k):
        term = term @ X @ ginv if not ident else term @ X
        acc = acc + (-1) ** j * coeffs[..., k - 1 - j, None, None] * term
    return tensor.hermitian_part(Xinv - acc / coeffs[..., k, None, None])
