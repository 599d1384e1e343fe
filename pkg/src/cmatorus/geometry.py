"""Chern connection of a Hermitian metric field, traces and the Laplacian.

Index conventions (all 0-based in arrays):

* ``gamma[..., i, l, j]``  is ``Gamma^i_{lj} = sum_m g^{i mbar} d_l g_{j mbar}``
* ``torsion[..., k, i, j]`` is ``T^k_{ij} = Gamma^k_{ij} - Gamma^k_{ji}``
* ``curvature[..., i, j, k, l]`` is ``R_{i jbar k lbar}``

``g^{i mbar}`` denotes the inverse metric in the sense
``sum_m g^{i mbar} g_{j mbar} = delta_ij``, i.e. ``(g^{-1})_{m i}`` as a matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor
from .grid import TorusGrid


class CurvatureMismatch(RuntimeError):
    pass


@dataclass(frozen=True)
class ConnectionData:
    gamma: np.ndarray
    torsion: np.ndarray
    curvature: np.ndarray
    curvature_alt: np.ndarray
    discrepancy: float

    def max_abs(self) -> dict:
        return {
            "gamma": float(np.abs(self.gamma).max()),
            "torsion": float(np.abs(self.torsion).max()),
            "curvature": float(np.abs(self.curvature).max()),
        }


def _metric_field(grid: TorusGrid, g: np.ndarray) -> np.ndarray:
    return np.broadcast_to(g, grid.shape + (grid.n, grid.n)).copy()


def chern_data(grid: TorusGrid, g: np.ndarray, tol: float = 1e-8) -> ConnectionData:
    """Connection, torsion and curvature of ``g``; curvature computed twice.

    Curvature is evaluated both as ``-sum_m g_{m lbar} dbar_j Gamma^m_{ik}``
    and by the two-term metric formula.  If they disagree by more than
    ``tol`` (relative to ``max(1, |R|)``) a :class:`CurvatureMismatch` is
    raised: that almost always means a convention bug upstream.
    """
    n = grid.n
    G = _metric_field(grid, g)
    tensor.check_positive(G)
    Ginv = tensor.inv(G)

    comps = [[G[..., a, b] for b in range(n)] for a in range(n)]
    d = [np.empty(G.shape, dtype=complex) for _ in range(n)]
    dbar = [np.empty(G.shape, dtype=complex) for _ in range(n)]
    for a in range(n):
        for b in range(n):
            f = comps[a][b]
            for l in range(n):
                d[l][..., a, b] = grid.partial(f, l, "holomorphic")
                dbar[l][..., a, b] = grid.partial(f, l, "antiholomorphic")

    gamma = np.empty(grid.shape + (n, n, n), dtype=complex)
    for l in range(n):
        # Gamma^i_{lj} = sum_m Ginv[m, i] d_l G[j, m]
        gamma[..., :, l, :] = np.einsum("...mi,...jm->...ij", Ginv, d[l])
    torsion = gamma - np.swapaxes(gamma, -1, -2)

    curvature = np.zeros(grid.shape + (n, n, n, n), dtype=complex)
    for i in range(n):
        for k in range(n):
            for m in range(n):
                for j in range(n):
                    dG = grid.partial(gamma[..., m, i, k], j, "antiholomorphic")
                    curvature[..., i, j, k, :] -= G[..., m, :] * dG[..., None]

    alt = np.empty_like(curvature)
    for i in range(n):
        for j in range(n):
            # sum_pq g^{p qbar} d_i g_{k qbar} dbar_j g_{p lbar} = (d_i G  Ginv  dbar_j G)_{kl}
            alt[..., i, j, :, :] = d[i] @ Ginv @ dbar[j]
            for k in range(n):
                for l in range(n):
                    alt[..., i, j, k, l] -= grid.ddbar(comps[k][l], i, j)

    scale = max(1.0, float(np.abs(curvature).max()))
    discrepancy = float(np.abs(curvature - alt).max()) / scale
    if discrepancy > tol:
        raise CurvatureMismatch(f"curvature formulas disagree by {discrepancy:.3e}")
    return ConnectionData(gamma, torsion, curvature, alt, discrepancy)


def trace(X: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Pointwise ``tr(g^{-1} X)``."""
    tensor.check_positive(g)
    return tensor.trace_rel(X, g)


def laplacian(grid: TorusGrid, u: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Complex Laplacian ``sum g^{i jbar} d_i dbar_j u``."""
    return trace(grid.hessian_complex(u), g)


# -- metric presets ----------------------------------------------------------

METRIC_PRESETS = ("flat", "conformal", "hermitianPerturbed", "kahlerPerturbed")


def flat(grid: TorusGrid) -> np.ndarray:
    return np.eye(grid.n, dtype=complex)


def conformal(grid: TorusGrid, eps: float = 0.1) -> np.ndarray:
    """``exp(eps cos(2 pi x_1)) * I``."""
    f = grid.evaluate(lambda *c: eps * np.cos(2 * np.pi * c[0]))
    return np.exp(f)[..., None, None] * np.eye(grid.n)


def hermitian_perturbation(n: int, eps: float):
    """Pointwise function for ``I + eps h`` with ``h`` Hermitian, not ddbar-exact.

    Returned callable takes real coordinates ``(x_1, y_1, ..., x_n, y_n)``
    (arrays broadcast) and yields the matrix entries; used both to build
    grid fields and by finite-difference oracles.
    """

    def metric(*c):
        xs = c[0::2]
        ys = c[1::2]
        shape = np.broadcast(*c).shape
        out = np.zeros(shape + (n, n), dtype=complex)
        for i in range(n):
            out[..., i, i] = 1.0 + eps * np.cos(2 * np.pi * xs[(i + 1) % n])
        for i in range(n):
            for j in range(i + 1, n):
                val = 0.5 * eps * (np.sin(2 * np.pi * ys[j]) + 1j * np.cos(2 * np.pi * xs[i]))
                out[..., i, j] = val
                out[..., j, i] = np.conj(val)
        return out

    return metric


def hermitian_perturbed(grid: TorusGrid, eps: float = 0.1) -> np.ndarray:
    return hermitian_perturbation(grid.n, eps)(*grid.coords())


def kahler_potential(grid: TorusGrid, eps: float = 0.05) -> np.ndarray:
    """Band-limited potential ``rho`` used for ``I + ddbar rho`` presets."""
    n = grid.n

    def rho(*c):
        xs = c[0::2]
        ys = c[1::2]
        out = np.cos(2 * np.pi * xs[0]) + 0.5 * np.sin(2 * np.pi * (ys[0] + xs[n - 1]))
        out = out + 0.5 * np.cos(2 * np.pi * (xs[1] - ys[n - 1]))
        return eps * out / np.pi**2

    return grid.evaluate(rho)


def kahler_perturbed(grid: TorusGrid, eps: float = 0.05) -> np.ndarray:
    """``I + ddbar rho``: closed, hence torsion-free."""
    return np.eye(grid.n) + grid.hessian_complex(kahler_potential(grid, eps))


def metric_preset(grid: TorusGrid, name: str, eps: float | None = None) -> np.ndarray:
    if name == "flat":
        return flat(grid)
    if name == "conformal":
        return conformal(grid, 0.1 if eps is None else eps)
    if name == "hermitianPerturbed":
        return hermitian_perturbed(grid, 0.1 if eps is None else eps)
    if name == "kahlerPerturbed":
        return kahler_perturbed(grid, 0.05 if eps is None else eps)
    raise ValueError(f"unknown metric preset {name!r}; expected one of {METRIC_PRESETS}")


def is_closed_preset(name: str) -> bool:
    return name in ("flat", "kahlerPerturbed")
