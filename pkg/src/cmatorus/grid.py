"""Uniform periodic grids on the flat complex torus C^n / (Z + iZ)^n.

Real coordinates are stored in the axis order ``(x_1, y_1, ..., x_n, y_n)``
with ``z_k = x_k + i y_k`` and every coordinate in ``[0, 1)``.  Complex
derivatives follow the usual Wirtinger convention::

    d/dz_k    = (d/dx_k - i d/dy_k) / 2
    d/dzbar_k = (d/dx_k + i d/dy_k) / 2

Two differentiation backends are available: ``"spectral"`` (FFT multipliers,
exact on band-limited data) and ``"central2"`` (second-order centred
stencils, used for convergence-order studies).
"""

from __future__ import annotations

import os
from functools import cached_property

import numpy as np
import scipy.fft as sfft

DIFF_MODES = ("spectral", "central2")


def fft_workers() -> int:
    """Worker count for FFTs, capped by the ``CMA_THREADS`` variable."""
    try:
        return max(1, int(os.environ.get("CMA_THREADS", "1")))
    except ValueError:
        return 1


class GridMismatch(ValueError):
    pass


class TorusGrid:
    """Immutable periodic lattice with ``m`` points per real axis.

    Parameters
    ----------
    n : int
        Complex dimension (2 or 3).
    m : int
        Points per real axis, a power of two and at least 8.
    diff_mode : {"spectral", "central2"}
        Differentiation backend.
    """

    def __init__(self, n: int, m: int, diff_mode: str = "spectral"):
        if n not in (2, 3):
            raise ValueError(f"complex dimension must be 2 or 3, got {n}")
        if m < 8 or m & (m - 1):
            raise ValueError(f"m must be a power of two >= 8, got {m}")
        if diff_mode not in DIFF_MODES:
            raise ValueError(f"unknown diff mode {diff_mode!r}")
        self.n = n
        self.m = m
        self.diff_mode = diff_mode
        self.real_dim = 2 * n
        self.shape = (m,) * self.real_dim
        self.size = m**self.real_dim
        self.h = 1.0 / m

    def __repr__(self):
        return f"TorusGrid(n={self.n}, m={self.m}, diff_mode={self.diff_mode!r})"

    def __eq__(self, other):
        return (
            isinstance(other, TorusGrid)
            and (self.n, self.m, self.diff_mode) == (other.n, other.m, other.diff_mode)
        )

    def __hash__(self):
        return hash((self.n, self.m, self.diff_mode))

    def with_mode(self, diff_mode: str) -> "TorusGrid":
        return TorusGrid(self.n, self.m, diff_mode)

    # -- coordinates -------------------------------------------------------

    def axis(self, k: int) -> np.ndarray:
        """Coordinate values along real axis ``k``, shaped for broadcasting."""
        shape = [1] * self.real_dim
        shape[k] = self.m
        return (np.arange(self.m) / self.m).reshape(shape)

    def x(self, i: int) -> np.ndarray:
        """Broadcastable ``Re z_i`` (``i`` is 0-based)."""
        return self.axis(2 * i)

    def y(self, i: int) -> np.ndarray:
        """Broadcastable ``Im z_i`` (``i`` is 0-based)."""
        return self.axis(2 * i + 1)

    def coords(self) -> list[np.ndarray]:
        return [self.axis(k) for k in range(self.real_dim)]

    def point(self, index) -> np.ndarray:
        """Real coordinates of the grid point with multi-index ``index``."""
        return np.asarray(index, dtype=float) % self.m / self.m

    def full(self, value: float) -> np.ndarray:
        return np.full(self.shape, float(value))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def evaluate(self, fn) -> np.ndarray:
        """Sample ``fn(*coords)`` on the grid and broadcast to full shape."""
        return np.broadcast_to(fn(*self.coords()), self.shape).copy()

    def check(self, f: np.ndarray, trailing: int = 0) -> None:
        if f.shape[: self.real_dim] != self.shape or f.ndim != self.real_dim + trailing:
            raise GridMismatch(f"field of shape {f.shape} does not live on {self!r}")

    # -- spectral symbols --------------------------------------------------

    @cached_property
    def _wavenumbers(self) -> list[np.ndarray]:
        """Angular wavenumbers 2*pi*k on the rfftn layout, one per axis."""
        out = []
        for k in range(self.real_dim):
            if k == self.real_dim - 1:
                freq = sfft.rfftfreq(self.m, d=1.0 / self.m)
            else:
                freq = sfft.fftfreq(self.m, d=1.0 / self.m)
            shape = [1] * self.real_dim
            shape[k] = freq.size
            out.append((2 * np.pi * freq).reshape(shape))
        return out

    def first_symbol(self, k: int) -> np.ndarray:
        """Fourier multiplier of d/d(axis k) for the active backend."""
        w = self._wavenumbers[k]
        if self.diff_mode == "spectral":
            sym = 1j * w
            # odd derivative: Nyquist mode has no real-valued derivative
            return np.where(np.abs(w) >= np.pi * self.m - 1e-9, 0.0, sym)
        return 1j * np.sin(w * self.h) / self.h

    def second_symbol(self, k: int) -> np.ndarray:
        """Fourier multiplier of d^2/d(axis k)^2 for the active backend."""
        w = self._wavenumbers[k]
        if self.diff_mode == "spectral":
            return -(w**2) + 0j
        return -(4.0 * np.sin(0.5 * w * self.h) ** 2) / self.h**2 + 0j

    def derivative_symbol(self, axes: tuple[int, ...]) -> np.ndarray:
        """Multiplier of a first or second real derivative along ``axes``."""
        if len(axes) == 1:
            return self.first_symbol(axes[0])
        a, b = axes
        if a == b:
            return self.second_symbol(a)
        return self.first_symbol(a) * self.first_symbol(b)

    def ddbar_symbol(self, i: int, j: int) -> np.ndarray:
        """Multiplier of d/dz_i d/dzbar_j (acting on any field)."""
        xi, yi, xj, yj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
        d = self.derivative_symbol
        return 0.25 * (d((xi, xj)) + d((yi, yj)) + 1j * (d((xi, yj)) - d((yi, xj))))

    # -- transforms --------------------------------------------------------

    def rfft(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f, workers=fft_workers())

    def irfft(self, F: np.ndarray) -> np.ndarray:
        return sfft.irfftn(F, s=self.shape, workers=fft_workers())

    def apply_multiplier(self, f: np.ndarray, sym: np.ndarray) -> np.ndarray:
        """Apply a real-preserving Fourier multiplier to a real field."""
        return self.irfft(self.rfft(f) * sym)

    # -- real derivatives --------------------------------------------------

    def _roll_first(self, f: np.ndarray, k: int) -> np.ndarray:
        out = np.roll(f, -1, axis=k)
        out -= np.roll(f, 1, axis=k)
        out *= 0.5 / self.h
        return out

    def _roll_second(self, f: np.ndarray, k: int) -> np.ndarray:
        out = np.roll(f, -1, axis=k)
        out += np.roll(f, 1, axis=k)
        out -= f
        out -= f
        out *= 1.0 / self.h**2
        return out

    def _stencil(self, f: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
        if len(axes) == 1:
            return self._roll_first(f, axes[0])
        a, b = axes
        if a == b:
            return self._roll_second(f, a)
        return self._roll_first(self._roll_first(f, a), b)

    def real_derivatives(self, f: np.ndarray, requests) -> list[np.ndarray]:
        """First/second derivatives of ``f`` along each tuple in ``requests``.

        Complex fields are handled by differentiating real and imaginary
        parts separately.
        """
        self.check(f)
        requests = [tuple(r) for r in requests]
        for r in requests:
            if not 1 <= len(r) <= 2 or any(not 0 <= a < self.real_dim for a in r):
                raise ValueError(f"invalid derivative request {r}")
        if np.iscomplexobj(f):
            re = self.real_derivatives(f.real.copy(), requests)
            im = self.real_derivatives(f.imag.copy(), requests)
            return [a + 1j * b for a, b in zip(re, im)]
        if self.diff_mode == "central2":
            return [self._stencil(f, r) for r in requests]
        F = self.rfft(f)
        return [self.irfft(F * self.derivative_symbol(r)) for r in requests]

    def d(self, f: np.ndarray, *axes: int) -> np.ndarray:
        return self.real_derivatives(f, [axes])[0]

    # -- complex derivatives ----------------------------------------------

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise IndexError(f"complex axis {i} out of range for n={self.n}")

    def partial(self, f: np.ndarray, i: int, kind: str = "holomorphic") -> np.ndarray:
        """d/dz_i (``kind="holomorphic"``) or d/dzbar_i (``"antiholomorphic"``)."""
        self._check_index(i)
        fx, fy = self.real_derivatives(f, [(2 * i,), (2 * i + 1,)])
        if kind == "holomorphic":
            return 0.5 * (fx - 1j * fy)
        if kind == "antiholomorphic":
            return 0.5 * (fx + 1j * fy)
        raise ValueError(f"unknown derivative kind {kind!r}")

    def ddbar(self, f: np.ndarray, i: int, j: int) -> np.ndarray:
        """d/dzbar_j d/dz_i f for a real or complex field."""
        self._check_index(i)
        self._check_index(j)
        xi, yi, xj, yj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
        a, b, c, e = self.real_derivatives(f, [(xi, xj), (yi, yj), (xi, yj), (yi, xj)])
        return 0.25 * (a + b + 1j * (c - e))

    def _combination(self, u: np.ndarray, F, terms) -> np.ndarray:
        """Real field ``sum(sign * d_axes u)``; ``F`` is ``rfft(u)`` or None."""
        if F is not None:
            sym = sum(sign * self.derivative_symbol(axes) for sign, axes in terms)
            return self.irfft(F * sym)
        # accumulate in place: fine grids are memory bound
        out = None
        for sign, axes in terms:
            term = self._stencil(u, axes)
            if out is None:
                out = term if sign == 1 else -term
            elif sign == 1:
                out += term
            else:
                out -= term
            del term
        return out

    def hessian_parts(self, u: np.ndarray) -> tuple[list, dict]:
        """Real parts of the complex Hessian of a real field.

        Returns ``(diag, off)`` with ``H[..., i, i] = diag[i]`` and
        ``H[..., i, j] = re + 1j * im`` for ``off[(i, j)] = (re, im)``, ``i < j``.
        """
        self.check(u)
        if np.iscomplexobj(u):
            raise TypeError("hessian_parts expects a real field")
        n = self.n
        F = self.rfft(u) if self.diff_mode == "spectral" else None
        diag = []
        off = {}
        for i in range(n):
            xi, yi = 2 * i, 2 * i + 1
            c = self._combination(u, F, [(1, (xi, xi)), (1, (yi, yi))])
            c *= 0.25
            diag.append(c)
            for j in range(i + 1, n):
                xj, yj = 2 * j, 2 * j + 1
                re = self._combination(u, F, [(1, (xi, xj)), (1, (yi, yj))])
                re *= 0.25
                im = self._combination(u, F, [(1, (xi, yj)), (-1, (yi, xj))])
                im *= 0.25
                off[(i, j)] = (re, im)
        return diag, off

    def hessian_complex(self, u: np.ndarray) -> np.ndarray:
        """Complex Hessian ``H[..., i, j] = d/dzbar_j d/dz_i u`` of a real field.

        The result is Hermitian at every point by construction: only the
        diagonal and upper triangle are differentiated.
        """
        diag, off = self.hessian_parts(u)
        n = self.n
        H = np.empty(self.shape + (n, n), dtype=complex)
        for i in range(n):
            H[..., i, i] = diag[i]
        for (i, j), (re, im) in off.items():
            H[..., i, j] = re + 1j * im
            H[..., j, i] = re - 1j * im
        return H

    def hessian_apply(self, u: np.ndarray, coeff: np.ndarray) -> np.ndarray:
        """``sum_ij coeff[..., j, i] * H[..., i, j]`` with ``H`` the complex Hessian.

        ``coeff`` must be Hermitian pointwise; the result is then real.  This
        is the matrix-free kernel behind every second-order operator here.
        """
        H = self.hessian_complex(u)
        return np.einsum("...ji,...ij->...", coeff, H).real

    # -- quadrature and filtering -----------------------------------------

    def mean(self, f: np.ndarray) -> float:
        """Grid average, i.e. the trapezoidal rule for the unit-volume torus."""
        if f.size == 0:
            raise ValueError("mean of an empty field")
        self.check(f)
        return float(np.mean(f))

    def truncate(self, f: np.ndarray, fraction: float = 2.0 / 3.0) -> np.ndarray:
        """Zero Fourier modes above ``fraction`` of the Nyquist wavenumber."""
        self.check(f)
        cutoff = fraction * np.pi * self.m
        mask = np.ones((1,) * self.real_dim, dtype=bool)
        for w in self._wavenumbers:
            mask = mask & (np.abs(w) <= cutoff)
        return self.irfft(self.rfft(f) * mask)
