"""Brute-force reference computations.

Nothing here calls into the solver path beyond field storage: wedge
products are multiplied out term by term, symmetric polynomials are summed
over subsets, derivatives are finite differences and linear systems are
assembled densely.  Slow on purpose.
"""

from __future__ import annotations

import itertools
from math import comb, factorial

import numpy as np


# -- symmetric polynomials -------------------------------------------------


def subset_elementary(k: int, lam, exclude=()) -> float:
    """``S_k`` as an explicit sum over ``k``-subsets, skipping ``exclude``."""
    idx = [i for i in range(len(lam)) if i not in set(exclude)]
    return float(sum(np.prod([lam[i] for i in sub]) for sub in itertools.combinations(idx, k)))


def diagonal_frame_grad(lam, alpha: int) -> np.ndarray:
    """Diagonal entries ``-S_{alpha-1;i}(lam^*) (lam^*_i)^2`` with ``lam^* = 1/lam``.

    The gradient of ``S_alpha(X^{-1})`` written in a frame where the metric
    is the identity and ``X = diag(lam)``.
    """
    star = 1.0 / np.asarray(lam, dtype=float)
    return np.array(
        [-subset_elementary(alpha - 1, star, exclude=(i,)) * star[i] ** 2 for i in range(len(star))]
    )


# -- exterior algebra ------------------------------------------------------


class WedgeForm:
    """A complex-valued form in ``dz^1..dz^n, dzbar^1..dzbar^n``.

    Monomials are keyed by strictly increasing letter tuples; letter ``i``
    is ``dz^{i+1}`` for ``i < n`` and ``dzbar^{i-n+1}`` otherwise.
    """

    def __init__(self, n: int, terms: dict | None = None):
        self.n = n
        self.terms = {k: v for k, v in (terms or {}).items() if v != 0}

    @classmethod
    def one(cls, n: int) -> "WedgeForm":
        return cls(n, {(): 1.0})

    @classmethod
    def from_hermitian(cls, A) -> "WedgeForm":
        """The (1,1)-form ``sum_ij A_ij dz^i ^ dzbar^j`` (overall i/2 dropped)."""
        A = np.asarray(A)
        n = A.shape[0]
        return cls(n, {(i, n + j): complex(A[i, j]) for i in range(n) for j in range(n)})

    @property
    def degree(self) -> tuple[int, int]:
        for key in self.terms:
            return (sum(1 for c in key if c < self.n), sum(1 for c in key if c >= self.n))
        return (0, 0)

    def __add__(self, other):
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0) + v
        return WedgeForm(self.n, out)

    def __sub__(self, other):
        return self + other * -1.0

    def __mul__(self, scalar):
        return WedgeForm(self.n, {k: v * scalar for k, v in self.terms.items()})

    __rmul__ = __mul__

    def wedge(self, other: "WedgeForm") -> "WedgeForm":
        out: dict = {}
        for ka, va in self.terms.items():
            for kb, vb in other.terms.items():
                letters = ka + kb
                if len(set(letters)) < len(letters):
                    continue
                sign = _permutation_sign(letters)
                key = tuple(sorted(letters))
                out[key] = out.get(key, 0) + sign * va * vb
        return WedgeForm(self.n, out)

    def __xor__(self, other):
        return self.wedge(other)

    def power(self, k: int) -> "WedgeForm":
        out = WedgeForm.one(self.n)
        for _ in range(k):
            out = out.wedge(self)
        return out

    def top(self) -> complex:
        """Coefficient relative to the positive volume ``prod_i dz^i ^ dzbar^i``."""
        key = tuple(range(2 * self.n))
        return self.terms.get(key, 0.0) / _volume_sign(self.n)


def _permutation_sign(seq) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _volume_sign(n: int) -> int:
    letters = []
    for i in range(n):
        letters += [i, n + i]
    return _permutation_sign(letters)


def wedge_ratio(chi_u, g, alpha: int) -> float:
    """``chi_u^n / (chi_u^{n-alpha} ^ omega^alpha)`` by literal multiplication."""
    chi_u = np.asarray(chi_u)
    n = chi_u.shape[0]
    if n > 3:
        raise ValueError("wedge oracle supports n <= 3 only")
    X = WedgeForm.from_hermitian(chi_u)
    W = WedgeForm.from_hermitian(g)
    num = X.power(n).top()
    den = X.power(n - alpha).wedge(W.power(alpha)).top()
    return float((num / den).real)


def wedge_density(A, g, k: int) -> float:
    """``A^k ^ omega^{n-k} / omega^n`` for Hermitian matrices at one point."""
    A = np.asarray(A)
    n = A.shape[0]
    X = WedgeForm.from_hermitian(A)
    W = WedgeForm.from_hermitian(g)
    return float((X.power(k).wedge(W.power(n - k)).top() / W.power(n).top()).real)


def cone_form_matrix(chi_p, g, psi: float, alpha: int) -> np.ndarray:
    """Hermitian matrix of ``n chi'^{n-1} - (n-alpha) psi chi'^{n-alpha-1} ^ omega^alpha``.

    Entry ``(i, j)`` is the top coefficient of the form wedged with
    ``dz^i ^ dzbar^j``; the (n-1,n-1)-form is positive exactly when this
    matrix is positive definite.
    """
    chi_p = np.asarray(chi_p)
    n = chi_p.shape[0]
    X = WedgeForm.from_hermitian(chi_p)
    W = WedgeForm.from_hermitian(g)
    theta = n * X.power(n - 1) - (n - alpha) * psi * X.power(n - alpha - 1).wedge(W.power(alpha))
    Q = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            Q[i, j] = theta.wedge(WedgeForm(n, {(i, n + j): 1.0})).top()
    return Q


def cone_wedge_holds(chi_p, g, psi: float, alpha: int) -> bool:
    Q = cone_form_matrix(chi_p, g, psi, alpha)
    Q = 0.5 * (Q + Q.conj().T)
    return bool(np.linalg.eigvalsh(Q)[0] > 0)


def cone_wedge_scale(lam, psi: float, alpha: int) -> np.ndarray:
    """Positive factors relating diagonal wedge entries to pointwise margins.

    In a frame with ``g = I`` and ``chi' = diag(lam)`` the k-th diagonal entry
    of :func:`cone_form_matrix` equals this factor times
    ``C_n^alpha / psi - S_{alpha;k}(1/lam)``.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    Sn = float(np.prod(lam))
    return psi * factorial(n - alpha) * factorial(alpha) * Sn / lam


def cone_pointwise_margins(lam, psi: float, alpha: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    star = 1.0 / lam
    return np.array([comb(n, alpha) / psi - subset_elementary(alpha, star, exclude=(k,)) for k in range(n)])


# -- finite differences ----------------------------------------------------


def fd_directional(F, x, h, s: float = 1e-5, richardson: bool = False):
    """Centred difference ``(F(x + s h) - F(x - s h)) / (2 s)``.

    With ``richardson=True`` the step-``s`` and step-``2s`` estimates are
    combined to cancel the leading error term.
    """
    if s <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x)
    h = np.asarray(h)

    def central(step):
        return (np.asarray(F(x + step * h)) - np.asarray(F(x - step * h))) / (2 * step)

    d1 = central(s)
    if not richardson:
        return d1
    d2 = central(2 * s)
    return (4 * d1 - d2) / 3


def fd_second(F, x, h, s: float = 1e-3):
    """Centred second difference of ``t -> F(x + t h)`` at ``t = 0``."""
    x = np.asarray(x)
    h = np.asarray(h)
    return (np.asarray(F(x + s * h)) - 2 * np.asarray(F(x)) + np.asarray(F(x - s * h))) / s**2


def fd_christoffel(metric, point, step: float = 1e-5) -> np.ndarray:
    """``Gamma[i, l, j] = sum_m g^{i mbar} d_l g_{j mbar}`` from an analytic metric.

    ``metric`` maps a real ``2n``-vector ``(x_1, y_1, ...)`` to an ``n x n``
    Hermitian matrix.  ``g^{i mbar}`` is the inverse metric with
    ``sum_m g^{i mbar} g_{j mbar} = delta_ij``.
    """
    point = np.asarray(point, dtype=float)
    G = np.asarray(metric(point))
    n = G.shape[0]
    Ginv = np.linalg.inv(G)
    dG = []
    for l in range(n):
        ex = np.zeros(2 * n)
        ey = np.zeros(2 * n)
        ex[2 * l] = step
        ey[2 * l + 1] = step
        dx = (np.asarray(metric(point + ex)) - np.asarray(metric(point - ex))) / (2 * step)
        dy = (np.asarray(metric(point + ey)) - np.asarray(metric(point - ey))) / (2 * step)
        dG.append(0.5 * (dx - 1j * dy))
    gamma = np.zeros((n, n, n), dtype=complex)
    for i in range(n):
        for l in range(n):
            for j in range(n):
                gamma[i, l, j] = sum(Ginv[m, i] * dG[l][j, m] for m in range(n))
    return gamma


# -- dense linear algebra --------------------------------------------------

DENSE_LIMIT = 4096


class IncompatibleRHS(ValueError):
    """The right-hand side has a component along the operator's cokernel."""


def assemble(apply, shape) -> np.ndarray:
    """Dense matrix of a linear field operator by probing unit vectors."""
    size = int(np.prod(shape))
    if size > DENSE_LIMIT:
        raise ValueError(f"grid of {size} points too large for dense assembly")
    A = np.empty((size, size))
    e = np.zeros(size)
    for k in range(size):
        e[k] = 1.0
        A[:, k] = np.asarray(apply(e.reshape(shape))).ravel()
        e[k] = 0.0
    return A


def dense_solve(apply, rhs, tol: float = 1e-8) -> np.ndarray:
    """Mean-zero solution of ``apply(eta) = rhs`` by direct factorisation.

    The operator is assumed to annihilate constants.  The system is bordered
    with the constant mode, ``L eta + s = rhs``; a nonzero ``s`` means
    ``rhs`` lies outside the range and :class:`IncompatibleRHS` is raised.
    """
    shape = rhs.shape
    size = rhs.size
    L = assemble(apply, shape)
    B = np.zeros((size + 1, size + 1))
    B[:size, :size] = L
    B[:size, size] = 1.0
    B[size, :size] = 1.0 / size
    sol = np.linalg.solve(B, np.concatenate([rhs.ravel(), [0.0]]))
    eta, s = sol[:size], sol[size]
    if abs(s) > tol * max(1.0, float(np.abs(rhs).max())):
        raise IncompatibleRHS(f"rhs has cokernel component {s:.3e}")
    return eta.reshape(shape)
