"""Assemble grids, forms and right-hand sides from a :class:`RunConfig`."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import geometry
from .cone import kahler_constant
from .config import RunConfig
from .continuity import HypothesisViolation
from .grid import TorusGrid
from .mongeampere import Inadmissible, PencilEval, ProblemData, build, manufacture
from .snapshot import field_hash, read_field


@dataclass
class Problem:
    data: ProblemData
    ulbar: np.ndarray
    u_star: np.ndarray | None
    closed: bool
    c: float | None

    def input_hashes(self) -> dict:
        d = self.data
        out = {
            "g": field_hash(np.asarray(d.g)),
            "chi": field_hash(np.asarray(d.chi)),
            "psi": field_hash(np.asarray(d.psi)),
            "ulbar": field_hash(self.ulbar),
        }
        if self.u_star is not None:
            out["uStar"] = field_hash(self.u_star)
        return out


def random_potential(grid: TorusGrid, seed: int, amplitude: float) -> np.ndarray:
    """Sum of the lowest Fourier modes with seeded random phases, ``sup |u| = amplitude``."""
    rng = np.random.default_rng(seed)
    coords = grid.coords()
    u = grid.zeros()
    for k in itertools.product((-1, 0, 1), repeat=grid.real_dim):
        # one representative per +-k pair
        nz = [c for c in k if c]
        if not nz or nz[0] < 0:
            continue
        amp, phase = rng.standard_normal(), rng.uniform(0, 2 * np.pi)
        arg = sum(c * x for c, x in zip(k, coords) if c)
        u += amp * np.cos(2 * np.pi * arg + phase)
    u -= u.mean()
    return amplitude * u / np.abs(u).max()


def make_chi(cfg: RunConfig, grid: TorusGrid) -> np.ndarray:
    kind = cfg.get("problem", "chi")
    if kind == "identity":
        return np.eye(grid.n, dtype=complex)
    if kind == "scaled":
        return cfg.get("problem", "chiScale") * np.eye(grid.n, dtype=complex)
    return geometry.kahler_perturbed(grid, cfg.get("problem", "chiEps"))


def build_problem(cfg: RunConfig) -> Problem:
    """Grid, metric, ``chi``, ``psi``, ``ulbar`` and (if manufactured) ``u*``.

    Raises
    ------
    HypothesisViolation
        If the manufactured potential is not admissible.
    """
    p = lambda key: cfg.get("problem", key)  # noqa: E731
    grid = TorusGrid(p("n"), p("m"), p("diffMode"))
    preset = p("metricPreset")
    g = geometry.metric_preset(grid, preset, p("metricEps"))
    chi = make_chi(cfg, grid)
    alpha = p("alpha")
    closed = geometry.is_closed_preset(preset) and p("chi") in ("identity", "scaled", "kahlerPerturbed")
    ulbar = grid.zeros()
    if cfg.path("problem", "ulbarPath") is not None:
        ulbar, _ = read_field(cfg.path("problem", "ulbarPath"), grid)
    u_star = None
    if cfg.path("problem", "uStarPath") is not None:
        u_star, _ = read_field(cfg.path("problem", "uStarPath"), grid)
    kind = p("psi")
    c = None
    if kind == "manufactured":
        u_star = random_potential(grid, cfg.psi_seed, p("psiAmplitude"))
        # forward evaluation on the spectral grid is exact for band-limited u*
        try:
            data = manufacture(grid.with_mode("spectral"), u_star, g, chi, alpha)
        except Inadmissible as exc:
            raise HypothesisViolation(f"manufactured potential not admissible: {exc}") from None
        data = build(grid, g, chi, data.psi, alpha)
    elif kind == "explicit":
        psi, _ = read_field(cfg.path("problem", "psiPath"), grid)
        data = build(grid, g, chi, psi, alpha)
    elif kind == "varphi":
        data = build(grid, g, chi, None, alpha)
    else:
        c = kahler_constant(grid, chi, g, alpha)
        mod = p("psiModulation")
        shape = 1.0 + mod * np.cos(2 * np.pi * grid.x(0))
        psi = c * (1.0 + p("psiFactor") * shape / (1.0 + mod))
        data = build(grid, g, chi, psi, alpha)
    if c is None and closed:
        c = kahler_constant(grid, chi, g, alpha)
    # fail early on an inadmissible witness
    try:
        PencilEval(data, ulbar)
    except Inadmissible as exc:
        raise HypothesisViolation(f"chi_ulbar not admissible: {exc}") from None
    return Problem(data, ulbar, u_star, closed, c)
