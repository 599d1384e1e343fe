"""Monitors for the a priori estimate quantities.

None of the constants here are assumed: ``C`` is fitted for a given ``A``,
``N`` and ``theta`` of the barrier inequality are measured on the grid, and
the oscillation function is tabulated.  All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sympoly, tensor
from .cone import cone_check
from .grid import TorusGrid
from .mongeampere import ProblemData, _is_identity


class ConeViolation(ValueError):
    """The barrier probe is meaningless without the cone condition."""


def w_field(u: np.ndarray, data: ProblemData) -> np.ndarray:
    """``w = Delta u + tr chi``, i.e. ``tr_g chi_u`` pointwise."""
    grid = data.grid
    if _is_identity(data.g):
        diag, _ = grid.hessian_parts(u)
        tr = np.trace(np.asarray(data.chi), axis1=-2, axis2=-1).real
        return sum(diag) + tr
    return tensor.trace_rel(data.chi + grid.hessian_complex(u), data.g)


def c2_monitor(u: np.ndarray, data: ProblemData, A: float) -> tuple[float, float]:
    """``(sup w, sup w e^{-A (u - inf u)})``.

    The second value is the smallest ``C`` for which
    ``w <= C e^{A (u - inf u)}`` holds on the grid.
    """
    w = w_field(u, data)
    fitted = float(np.max(w * np.exp(-A * (u - u.min()))))
    return float(w.max()), fitted


def phong_sturm(u: np.ndarray, ulbar: np.ndarray, A: float) -> np.ndarray:
    """Test function ``-A (u - ulbar) + 1 / (u - ulbar - inf(u - ulbar) + 1)``."""
    v = u - ulbar
    return -A * v + 1.0 / (v - v.min() + 1.0)


@dataclass
class BarrierReport:
    theta: float
    N: float
    vacuous: bool
    ratio: np.ndarray
    w: np.ndarray
    failures: int

    def summary(self) -> dict:
        return {
            "theta": None if np.isnan(self.theta) else float(self.theta),
            "N": float(self.N),
            "vacuous": bool(self.vacuous),
            "failures": int(self.failures),
        }


def _frame_data(X: np.ndarray, D: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of ``X`` relative to ``g`` and diagonal of ``D`` in that frame."""
    if _is_identity(np.asarray(g)):
        Xw, Dw = X, D
    else:
        X, D, g = np.broadcast_arrays(X, D, g)
        Linv = tensor.inv(tensor.cholesky(g))
        Xw = tensor.hermitian_part(Linv @ X @ tensor.dagger(Linv))
        Dw = tensor.hermitian_part(Linv @ D @ tensor.dagger(Linv))
    lam, V = np.linalg.eigh(Xw)
    diag = np.einsum("...ki,...kl,...li->...i", V.conj(), Dw, V).real
    return lam, diag


def barrier_probe(u: np.ndarray, ulbar: np.ndarray, data: ProblemData) -> BarrierReport:
    """Measure the barrier inequality at every grid point.

    In a ``g``-orthonormal frame diagonalising ``X = chi_u``, with
    ``c_i = S_{alpha-1;i}(lambda^*) (lambda^*_i)^2`` the pointwise ratio is
    ``sum c_i (ulbar - u)_{i ibar} / (sum c_i + 1)``.  ``N`` is the smallest
    threshold such that the ratio is positive wherever ``w >= N``, and
    ``theta`` the minimum ratio there.  If every point fails, ``N`` exceeds
    ``sup w`` and the report is vacuous.

    Raises
    ------
    ConeViolation
        If ``chi_ulbar`` does not satisfy the cone condition for ``psi``.
    """
    grid = data.grid
    H_bar = grid.hessian_complex(ulbar)
    report = cone_check(data.chi + H_bar, data.psi, data.alpha, data.g, wedge_samples=0)
    if not report.holds:
        raise ConeViolation(f"cone condition fails for the barrier (min margin {report.min_margin:.3e})")
    H = grid.hessian_complex(u)
    lam, diff = _frame_data(data.chi + H, H_bar - H, data.g)
    star = 1.0 / lam
    c = sympoly.restricted_all(data.alpha - 1, star) * star**2
    ratio = (c * diff).sum(axis=-1) / (c.sum(axis=-1) + 1.0)
    w = lam.sum(axis=-1)
    bad = ratio <= 0
    if not bad.any():
        N = float(w.min())
    else:
        N = float(np.nextafter(w[bad].max(), np.inf))
    keep = w >= N
    vacuous = not keep.any()
    theta = float(ratio[keep].min()) if not vacuous else float("nan")
    return BarrierReport(theta, N, vacuous, ratio, w, int(bad.sum()))


# -- oscillation -------------------------------------------------------------


def hermitian_directions(n: int) -> np.ndarray:
    """The ``2 n^2`` unit vectors ``(e_i + e_j)`` and ``(e_i + sqrt(-1) e_j)``, normalised."""
    out = []
    for kind in (1.0, 1j):
        for i in range(n):
            for j in range(n):
                v = np.zeros(n, dtype=complex)
                v[i] += 1.0
                v[j] += kind
                out.append(v / np.linalg.norm(v))
    return np.array(out)


def directional_second(hess: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """``u_{gamma gammabar} = sum_ij gamma^i conj(gamma^j) H_{i jbar}`` per direction."""
    return np.einsum("ki,...ij,kj->...k", gamma, hess, gamma.conj()).real


def _ball_offsets(grid: TorusGrid, R: float) -> np.ndarray:
    r = int(np.floor(R / grid.h + 1e-12))
    rng = np.arange(-r, r + 1)
    mesh = np.stack(np.meshgrid(*([rng] * grid.real_dim), indexing="ij"), axis=-1).reshape(-1, grid.real_dim)
    dist2 = (mesh.astype(float) ** 2).sum(axis=1) * grid.h**2
    return mesh[dist2 <= R * R * (1 + 1e-12)]


@dataclass
class HolderTable:
    radii: list
    phi: list
    per_center: list = field(default_factory=list)

    def rows(self) -> list:
        return [(float(R), float(p)) for R, p in zip(self.radii, self.phi)]

    def decay_ratios(self) -> list:
        """``(Phi(R) - R) / Phi(2R)`` where both radii are tabulated."""
        table = dict(self.rows())
        out = []
        for R, p in table.items():
            p2 = table.get(2 * R)
            if p2:
                out.append((R, (p - R) / p2))
        return out


def holder_oscillation(grid: TorusGrid, hess: np.ndarray, radii, centers) -> HolderTable:
    """``Phi(R) = sum_k osc_{B_R} u_{gamma_k gammabar_k}``, maximised over ``centers``.

    Balls are taken in the flat periodic distance.  ``centers`` are grid
    multi-indices.

    Raises
    ------
    ValueError
        If a radius is below the grid spacing.
    """
    grid.check(hess, trailing=2)
    vals = directional_second(hess, hermitian_directions(grid.n))
    centers = np.atleast_2d(np.asarray(centers, dtype=int))
    phis = []
    per_center = []
    for R in radii:
        if R < grid.h:
            raise ValueError(f"radius {R} below grid spacing {grid.h}")
        off = _ball_offsets(grid, R)
        row = []
        for c in centers:
            idx = tuple(((c[None, :] + off) % grid.m).T)
            sample = vals[idx]
            row.append(float((sample.max(axis=0) - sample.min(axis=0)).sum()))
        per_center.append(row)
        phis.append(max(row))
    return HolderTable(list(radii), phis, per_center)


# -- combined report ----------------------------------------------------------


@dataclass
class EstimateReport:
    w_max: float
    c0_osc: float
    fitted_C: float
    fitted_A: float
    barrier: BarrierReport | None
    barrier_error: str | None
    phi_values: np.ndarray
    holder: HolderTable

    def to_dict(self) -> dict:
        return {
            "wMax": self.w_max,
            "c0Osc": self.c0_osc,
            "fittedC": self.fitted_C,
            "fittedA": self.fitted_A,
            "barrierTheta": None if self.barrier is None else self.barrier.summary()["theta"],
            "barrierN": None if self.barrier is None else self.barrier.N,
            "barrierVacuous": None if self.barrier is None else self.barrier.vacuous,
            "barrierError": self.barrier_error,
            "phiRange": [float(self.phi_values.min()), float(self.phi_values.max())],
            "holderTable": self.holder.rows(),
            "holderDecay": self.holder.decay_ratios(),
        }


def default_radii(grid: TorusGrid) -> list:
    return [k * grid.h for k in (1, 2, 4)]


def estimates(
    u: np.ndarray,
    data: ProblemData,
    ulbar: np.ndarray | None = None,
    A: float = 1.0,
    radii=None,
    centers=None,
) -> EstimateReport:
    """All monitors at one state; the barrier part is skipped with a reason if refused."""
    grid = data.grid
    ulbar = grid.zeros() if ulbar is None else ulbar
    w_max, fitted = c2_monitor(u, data, A)
    try:
        barrier, err = barrier_probe(u, ulbar, data), None
    except ConeViolation as exc:
        barrier, err = None, str(exc)
    if centers is None:
        centers = [np.unravel_index(int(np.argmax(w_field(u, data))), grid.shape)]
    holder = holder_oscillation(grid, grid.hessian_complex(u), radii or default_radii(grid), centers)
    return EstimateReport(
        w_max=w_max,
        c0_osc=float(u.max() - u.min()),
        fitted_C=fitted,
        fitted_A=float(A),
        barrier=barrier,
        barrier_error=err,
        phi_values=phong_sturm(u, ulbar, A),
        holder=holder,
    )
