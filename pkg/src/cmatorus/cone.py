"""Cone condition, the cohomological constant c, and the stage-0 data.

Pointwise, with ``lambda`` the eigenvalues of ``chi'`` relative to ``g`` and
``lambda^* = 1/lambda``, the cone condition for ``psi`` reads

    C_n^alpha / psi > S_{alpha;k}(lambda^*)    for every k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import oracle, sympoly, tensor
from .grid import TorusGrid
from .mongeampere import Inadmissible, ProblemData, varphi_of


@dataclass
class ConeReport:
    holds: bool
    margin: np.ndarray
    worst_index: np.ndarray
    epsilon: float
    min_margin: float
    wedge_checked: int = 0
    wedge_agrees: bool = True
    wedge_points: list = field(default_factory=list)

    @property
    def epsilon_bounds(self) -> tuple[float, float]:
        """``(eps, 1/eps)`` with ``eps * omega <= chi' <= omega / eps``."""
        return (self.epsilon, 1.0 / self.epsilon if self.epsilon > 0 else float("inf"))

    def summary(self) -> dict:
        return {
            "holds": bool(self.holds),
            "minMargin": float(self.min_margin),
            "epsilonBounds": list(self.epsilon_bounds),
            "wedgeChecked": self.wedge_checked,
            "wedgeAgrees": bool(self.wedge_agrees),
        }


def pointwise_margin(lam: np.ndarray, psi, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    """Margins ``C_n^alpha/psi - max_k S_{alpha;k}(1/lam)`` and the maximising k."""
    n = lam.shape[-1]
    star = 1.0 / lam
    restricted = sympoly.restricted_all(alpha, star)
    worst = np.argmax(restricted, axis=-1)
    margin = sympoly.binom(n, alpha) / np.asarray(psi) - restricted.max(axis=-1)
    return margin, worst


def cone_check(
    chi_prime: np.ndarray,
    psi,
    alpha: int,
    g: np.ndarray,
    *,
    wedge_samples: int = 16,
    seed: int = 0,
) -> ConeReport:
    """Certify the cone condition for ``psi`` with witness ``chi_prime``.

    The wedge-product form is re-checked with the literal exterior-algebra
    oracle at ``wedge_samples`` random grid points.

    Raises
    ------
    Inadmissible
        If ``chi_prime`` is not positive definite.
    """
    lam = tensor.rel_eigen(chi_prime, g)
    lo = float(lam[..., 0].min())
    if lo <= 0:
        raise Inadmissible(lo)
    psi = np.broadcast_to(np.asarray(psi, dtype=float), lam.shape[:-1])
    margin, worst = pointwise_margin(lam, psi, alpha)
    eps = min(lo, 1.0 / float(lam[..., -1].max()))
    report = ConeReport(
        holds=bool(margin.min() > 0),
        margin=margin,
        worst_index=worst,
        epsilon=eps,
        min_margin=float(margin.min()),
    )
    if wedge_samples and margin.ndim:
        rng = np.random.default_rng(seed)
        chi_f = np.broadcast_to(chi_prime, lam.shape + (lam.shape[-1],))
        g_f = np.broadcast_to(g, chi_f.shape)
        flat = rng.choice(margin.size, size=min(wedge_samples, margin.size), replace=False)
        agree = True
        points = []
        for k in np.sort(flat):
            idx = np.unravel_index(k, margin.shape)
            wedge = oracle.cone_wedge_holds(chi_f[idx], g_f[idx], float(psi[idx]), alpha)
            agree &= wedge == bool(margin[idx] > 0)
            points.append(tuple(int(i) for i in idx))
        report.wedge_checked = len(points)
        report.wedge_agrees = bool(agree)
        report.wedge_points = points
    return report


def densities(chi: np.ndarray, g: np.ndarray, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    """``chi^n / omega^n`` and ``chi^{n-alpha} ^ omega^alpha / omega^n`` pointwise."""
    n = chi.shape[-1]
    e = sympoly.pencil_coeffs(chi, None if _is_identity(g) else g)
    return e[..., n], e[..., n - alpha] / sympoly.binom(n, n - alpha)


def _is_identity(g) -> bool:
    g = np.asarray(g)
    return g.ndim == 2 and np.array_equal(g, np.eye(g.shape[-1]))


def kahler_constant(grid: TorusGrid, chi: np.ndarray, g: np.ndarray, alpha: int) -> float:
    """``int chi^n / int chi^{n-alpha} ^ omega^alpha`` by grid quadrature.

    Quadrature is taken against the flat volume, which is also ``omega^n``
    when ``g`` has unit determinant; both densities are divided by
    ``omega^n`` so the ratio is the cohomological one.
    """
    top, mixed = densities(np.asarray(chi), np.asarray(g), alpha)
    vol = _volume(grid, g)
    num = grid.mean(np.broadcast_to(top * vol, grid.shape))
    den = grid.mean(np.broadcast_to(mixed * vol, grid.shape))
    if den == 0:
        raise ZeroDivisionError("chi^{n-alpha} ^ omega^alpha integrates to zero")
    return num / den


def _volume(grid: TorusGrid, g) -> np.ndarray:
    g = np.asarray(g)
    if _is_identity(g):
        return np.ones(grid.shape)
    return np.broadcast_to(tensor.det(g).real, grid.shape)


class DeltaTooLarge(ValueError):
    def __init__(self, delta: float, max_delta: float):
        self.delta = delta
        self.max_delta = max_delta
        super().__init__(f"delta={delta:g} breaks the cone condition for psi_0; max feasible {max_delta:.6g}")


@dataclass
class Stage0:
    psi0: np.ndarray
    v: np.ndarray
    varphi_v: np.ndarray
    strict: bool
    cone: ConeReport
    below_psi0: bool


def smooth_upper(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    """Spectrally truncated copy of ``f``, lifted by a constant to stay ``>= f``."""
    s = grid.truncate(f)
    return s + max(0.0, float((f - s).max()))


def build_stage0(grid: TorusGrid, ulbar: np.ndarray, psi, delta: float, data: ProblemData) -> Stage0:
    """``psi_0 >= max(psi, varphi_ulbar) + delta/2`` and ``v = ulbar``.

    Raises
    ------
    DeltaTooLarge
        If the cone condition fails for ``psi_0``; carries the largest
        feasible ``delta`` found by bisection.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    X = data.chi + grid.hessian_complex(ulbar)
    varphi_v = varphi_of(data.g, X, data.alpha)
    base = np.maximum(np.broadcast_to(psi, grid.shape), varphi_v)

    def attempt(d):
        psi0 = smooth_upper(grid, base + 0.5 * d)
        return psi0, cone_check(X, psi0, data.alpha, data.g, wedge_samples=0)

    psi0, report = attempt(delta)
    if not report.holds:
        lo, hi = 0.0, delta
        if not attempt(0.0)[1].holds:
            raise DeltaTooLarge(delta, 0.0)
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if attempt(mid)[1].holds:
                lo = mid
            else:
                hi = mid
        raise DeltaTooLarge(delta, lo)
    report = cone_check(X, psi0, data.alpha, data.g)
    return Stage0(
        psi0=psi0,
        v=ulbar,
        varphi_v=varphi_v,
        strict=delta > 0,
        cone=report,
        below_psi0=bool(np.all(varphi_v <= psi0)),
    )
