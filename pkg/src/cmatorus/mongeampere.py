"""The equation chi_u^n = psi chi_u^{n-alpha} ^ omega^alpha on a torus grid.

In eigenvalue form (eigenvalues of ``chi_u`` relative to ``g``) the equation
reads ``C_n^alpha S_n / S_{n-alpha} = psi``.  The continuity family replaces
``psi`` by ``psi^t start^{1-t} e^b`` and the solver works with the log
residual

    r = log S_alpha(lambda^*) - log C_n^alpha + t log psi + (1-t) log start + b,

where ``lambda^* = 1/lambda`` and ``S_alpha(lambda^*) = S_{n-alpha}/S_n``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import sympoly, tensor
from .grid import TorusGrid


class Inadmissible(ValueError):
    """``chi + ddbar u`` fails to be positive definite."""

    def __init__(self, margin: float):
        self.margin = float(margin)
        super().__init__(f"chi_u is not admissible (min relative eigenvalue {margin:.3e})")


@dataclass(frozen=True)
class ProblemData:
    """Metric ``g``, form ``chi``, right-hand side ``psi`` and order ``alpha``.

    ``varphi`` is the right-hand side solved by ``u = 0``; it is derived
    from ``g`` and ``chi`` by :func:`build`.
    """

    grid: TorusGrid
    g: np.ndarray
    chi: np.ndarray
    psi: np.ndarray
    alpha: int
    varphi: np.ndarray

    @property
    def n(self) -> int:
        return self.grid.n

    def with_psi(self, psi: np.ndarray) -> "ProblemData":
        return replace(self, psi=_check_rhs(self.grid, psi, "psi"))


def _check_rhs(grid: TorusGrid, f, name: str) -> np.ndarray:
    f = np.broadcast_to(np.asarray(f, dtype=float), grid.shape)
    if not np.all(f > 0):
        raise ValueError(f"{name} must be positive everywhere (min {f.min():.3e})")
    return f


def build(grid: TorusGrid, g, chi, psi, alpha: int) -> ProblemData:
    n = grid.n
    if not 1 <= alpha <= n:
        raise ValueError(f"alpha={alpha} out of range 1..{n}")
    g = np.asarray(g, dtype=complex)
    chi = np.asarray(chi, dtype=complex)
    tensor.check_positive(g)
    varphi = varphi_of(g, chi, alpha)
    if psi is None:
        psi = varphi
    return ProblemData(grid, g, chi, _check_rhs(grid, psi, "psi"), alpha, np.asarray(varphi))


def chi_u(data: ProblemData, u: np.ndarray) -> np.ndarray:
    return data.chi + data.grid.hessian_complex(u)


def wedge_ratio(X: np.ndarray, g: np.ndarray, alpha: int) -> np.ndarray:
    """``X^n / (X^{n-alpha} ^ omega^alpha) = C_n^alpha S_n / S_{n-alpha}``."""
    n = X.shape[-1]
    e = sympoly.pencil_coeffs(X, None if _is_identity(g) else g)
    return sympoly.binom(n, alpha) * e[..., n] / e[..., n - alpha]


def varphi_of(g, chi, alpha: int) -> np.ndarray:
    """``varphi`` with ``chi^n = varphi chi^{n-alpha} ^ omega^alpha``.

    Raises
    ------
    Inadmissible
        If ``chi`` is not positive definite; ``varphi`` is meaningless there.
    """
    g = np.asarray(g)
    chi = np.asarray(chi)
    n = chi.shape[-1]
    e = sympoly.pencil_coeffs(chi, None if _is_identity(g) else g)
    if not np.all(e[..., 1:] > 0):
        raise Inadmissible(tensor.min_margin(chi, g))
    return sympoly.binom(n, alpha) * e[..., n] / e[..., n - alpha]


def _is_identity(g) -> bool:
    return g.ndim == 2 and np.array_equal(g, np.eye(g.shape[-1]))


def _coeffs_checked(data: ProblemData, X: np.ndarray) -> np.ndarray:
    e = sympoly.pencil_coeffs(X, None if _is_identity(data.g) else data.g)
    # all S_k > 0 <=> all (real) eigenvalues positive
    if not np.all(e[..., 1:] > 0):
        raise Inadmissible(tensor.min_margin(X, data.g))
    return e


class PencilEval:
    """``chi_u`` at one potential: its ``S_k`` and what Newton needs from them.

    Raises :class:`Inadmissible` on construction if ``chi_u`` is not
    positive.  For ``n = 2`` with the identity metric everything is kept as
    real component fields in closed form, which is what makes fine grids
    fit in memory; other cases go through the Hermitian matrix field.
    """

    def __init__(self, data: ProblemData, u: np.ndarray):
        self.data = data
        self.u = u
        grid = data.grid
        self.lean = grid.n == 2 and _is_identity(data.g)
        if self.lean:
            diag, off = grid.hessian_parts(u)
            chi = data.chi
            # the Hessian parts are fresh arrays: shift them in place
            self.a, self.d = diag
            self.p, self.q = off[(0, 1)]
            for field, value in ((self.a, chi[..., 0, 0].real), (self.d, chi[..., 1, 1].real),
                                 (self.p, chi[..., 0, 1].real), (self.q, chi[..., 0, 1].imag)):
                if np.any(value):
                    field += value
            s2 = self.a * self.d
            tmp = self.p * self.p
            s2 -= tmp
            np.multiply(self.q, self.q, out=tmp)
            s2 -= tmp
            del tmp
            self.S = [None, None, s2]
            if not (np.all(self.a + self.d > 0) and np.all(s2 > 0)):
                raise Inadmissible(self.margin())
        else:
            self.X = data.chi + grid.hessian_complex(u)
            e = _coeffs_checked(data, self.X)
            self.S = [None] + [e[..., k] for k in range(1, grid.n + 1)]
            self._e = e

    def _hi(self) -> np.ndarray:
        """Largest eigenvalue ``(S_1 + sqrt((a - d)^2 + 4|p + iq|^2)) / 2`` (lean path)."""
        hi = self.a - self.d
        hi *= hi
        tmp = self.p * self.p
        hi += 4.0 * tmp
        np.multiply(self.q, self.q, out=tmp)
        tmp *= 4.0
        hi += tmp
        np.sqrt(hi, out=hi)
        hi += self.a
        hi += self.d
        hi *= 0.5
        return hi

    def margin(self) -> float:
        """Infimum of the smallest relative eigenvalue."""
        if self.lean:
            hi = self._hi()
            if hi.min() > 0:
                # lo = S_2 / hi avoids cancellation in (S_1 - disc) / 2
                np.divide(self.S[2], hi, out=hi)
                return float(hi.min())
            s1 = self.a + self.d
            return float((s1 - hi).min())
        return tensor.min_margin(self.X, self.data.g)

    def S_k(self, k: int):
        if k == 0:
            return 1.0
        if k == 1 and self.S[1] is None:
            return self.a + self.d
        return self.S[k]

    def log_F(self) -> np.ndarray:
        """``log(S_n / S_{n-alpha})``."""
        n, a = self.data.n, self.data.alpha
        out = np.log(self.S[n])
        if n - a:
            out -= np.log(self.S_k(n - a))
        return out

    def residual(self, b: float, t: float, start=None) -> np.ndarray:
        data = self.data
        start = data.varphi if start is None else start
        out = self.log_F()
        out *= -1.0
        out += b - np.log(sympoly.binom(data.n, data.alpha))
        for weight, f in ((t, data.psi), (1.0 - t, start)):
            if weight:
                term = np.log(f)
                term *= weight
                out += term
                del term
        return out

    def linearize(self) -> "LinearizedOperator":
        data = self.data
        n, a = data.n, data.alpha
        F = self.S[n] / self.S_k(n - a)
        if not self.lean:
            dlog = sympoly.grad_log_ratio(self.X, data.g, a, self._e)
            return LinearizedOperator(data.grid, dlog, F)
        # X^{-1} for X = [[a, p + iq], [p - iq, d]], minus I / S_1 when alpha = 1
        s2 = self.S[2]
        d0 = self.d / s2
        d1 = self.a / s2
        if a == 1:
            inv1 = self.S_k(1)
            np.reciprocal(inv1, out=inv1)
            d0 -= inv1
            d1 -= inv1
            del inv1
        p = self.p / s2
        p *= -1.0
        q = self.q / s2
        q *= -1.0
        parts = ([d0, d1], {(0, 1): (p, q)})
        return LinearizedOperator(data.grid, None, F, parts=parts)


def residual(u, b: float, t: float, data: ProblemData, start=None) -> np.ndarray:
    """Log residual of the continuity family at parameter ``t``.

    ``start`` is the right-hand side at ``t = 0`` and defaults to
    ``data.varphi``.
    """
    return PencilEval(data, u).residual(b, t, start)


def log_F(data: ProblemData, u) -> np.ndarray:
    """``log(S_n / S_{n-alpha})`` of ``chi_u``."""
    return PencilEval(data, u).log_F()


class LinearizedOperator:
    """Directional derivative of ``log F`` at an admissible ``u``.

    ``apply(eta) = (1/F) sum F^{i jbar} eta_{i jbar}``; stored as the
    Hermitian matrix field ``dlog = F^{-1} [F^{i jbar}]`` in the pairing
    ``apply(eta) = tr(dlog @ H(eta))``.
    """

    def __init__(self, grid: TorusGrid, dlog: np.ndarray | None, scale: np.ndarray, parts=None):
        self.grid = grid
        self.scale = scale
        n = grid.n
        if parts is not None:
            self._diag, self._off = parts
            return
        self._diag = [np.ascontiguousarray(dlog[..., i, i].real) for i in range(n)]
        self._off = {
            (i, j): (np.ascontiguousarray(dlog[..., i, j].real), np.ascontiguousarray(dlog[..., i, j].imag))
            for i in range(n)
            for j in range(i + 1, n)
        }

    @property
    def dlog(self) -> np.ndarray:
        """Hermitian coefficient field in ``apply(eta) = tr(dlog @ H(eta))``."""
        n = self.grid.n
        out = np.zeros(self.grid.shape + (n, n), dtype=complex)
        for i in range(n):
            out[..., i, i] = self._diag[i]
        for (i, j), (re, im) in self._off.items():
            out[..., i, j] = re + 1j * im
            out[..., j, i] = re - 1j * im
        return out

    @property
    def coeff(self) -> np.ndarray:
        """``F^{i jbar}`` as a Hermitian field (``F * dlog``)."""
        return self.scale[..., None, None] * self.dlog

    def omega_metric(self) -> np.ndarray:
        """Hermitian metric whose complex Laplacian equals this operator."""
        return tensor.inv(self.dlog)

    def apply(self, eta: np.ndarray) -> np.ndarray:
        grid = self.grid
        F = grid.rfft(eta) if grid.diff_mode == "spectral" else None
        return self._apply(eta, F)

    def apply_hat(self, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(eta, apply(eta))`` for ``eta`` given by its rfft ``F``."""
        eta = self.grid.irfft(F)
        return eta, self._apply(eta, F if self.grid.diff_mode == "spectral" else None)

    def _apply(self, eta: np.ndarray, F) -> np.ndarray:
        grid = self.grid
        # in-place accumulation keeps the peak at a few fields
        out = np.zeros(grid.shape)
        for i in range(grid.n):
            xi, yi = 2 * i, 2 * i + 1
            c = grid._combination(eta, F, [(1, (xi, xi)), (1, (yi, yi))])
            c *= self._diag[i]
            c *= 0.25
            out += c
            del c
            for j in range(i + 1, grid.n):
                xj, yj = 2 * j, 2 * j + 1
                dre, dim = self._off[(i, j)]
                # 2 Re(conj(D_ij) H_ij) with H_ij = (re + i im) / 4
                re = grid._combination(eta, F, [(1, (xi, xj)), (1, (yi, yj))])
                re *= dre
                re *= 0.5
                out += re
                del re
                im = grid._combination(eta, F, [(1, (xi, yj)), (-1, (yi, xj))])
                im *= dim
                im *= 0.5
                out += im
                del im
        return out

    __call__ = apply

    def mean_symbol(self) -> np.ndarray:
        """Fourier symbol of the operator with coefficients frozen at their means."""
        grid = self.grid
        sym = 0.0
        for i in range(grid.n):
            sym = sym + float(self._diag[i].mean()) * grid.ddbar_symbol(i, i).real
            for j in range(i + 1, grid.n):
                dre, dim = self._off[(i, j)]
                s = grid.ddbar_symbol(i, j)
                sym = sym + 2.0 * (float(dre.mean()) * s.real + float(dim.mean()) * s.imag)
        return sym


def linearize(u, data: ProblemData) -> LinearizedOperator:
    """Linearisation of ``log F`` at ``u``.

    With ``B = X^{-1} g`` the derivative is
    ``d log F = -d S_alpha(B) / S_alpha(B)``, and ``-dS_alpha(B)`` pairs with
    ``dX`` through ``X^{-1} g P_{alpha-1}(B) X^{-1}``, which is positive
    definite for admissible ``u``.  Evaluated in the equivalent form
    :func:`sympoly.grad_log_ratio`.
    """
    return PencilEval(data, u).linearize()


def manufacture(grid: TorusGrid, u_star, g, chi, alpha: int) -> ProblemData:
    """Problem whose exact solution (up to constants) is ``u_star``."""
    base = build(grid, g, chi, 1.0, alpha)
    n = grid.n
    psi = sympoly.binom(n, alpha) * np.exp(PencilEval(base, np.asarray(u_star, dtype=float)).log_F())
    return base.with_psi(psi)


def sup_gauge(u: np.ndarray) -> np.ndarray:
    """Shift ``u`` so that ``sup u = 0``."""
    return u - u.max()
