"""Invariant battery behind ``cmatorus verify``.

Each suite compares a main-path computation with an independent oracle
and records the worst discrepancy against its tolerance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from math import comb

import numpy as np

from . import geometry, oracle, sympoly, tensor
from .cone import pointwise_margin
from .continuity import SolveConfig, bordered_solve
from .grid import TorusGrid
from .mongeampere import PencilEval, manufacture


@dataclass
class SuiteResult:
    suite: str
    checks: int
    worst: float
    tol: float
    passed: bool
    detail: str = ""
    seconds: float = 0.0


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    M = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (M + M.conj().T)


def random_positive(rng: np.random.Generator, n: int, floor: float = 0.2) -> np.ndarray:
    M = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return M @ M.conj().T / n + floor * np.eye(n)


class _Worst:
    """Running maximum with the label of the point where it occurred."""

    def __init__(self):
        self.value = 0.0
        self.where = ""
        self.count = 0

    def add(self, value: float, where: str) -> None:
        self.count += 1
        if not value <= self.value:
            self.value, self.where = float(value), where

    def result(self, suite: str, tol: float, module: str) -> SuiteResult:
        ok = self.value <= tol
        detail = "" if ok else f"{module}: worst at {self.where}, discrepancy {self.value:.3e}"
        return SuiteResult(suite, self.count, self.value, tol, ok, detail)


def suite_wedge(samples: int, seed: int = 1) -> SuiteResult:
    """Literal wedge ratio against ``C_n^alpha S_n / S_{n-alpha}``."""
    rng = np.random.default_rng(seed)
    w = _Worst()
    for n in (2, 3):
        for alpha in range(1, n + 1):
            for k in range(samples):
                X, g = random_positive(rng, n), random_positive(rng, n)
                e = sympoly.pencil_coeffs(X, g)
                main = comb(n, alpha) * e[n] / e[n - alpha]
                ref = oracle.wedge_ratio(X, g, alpha)
                w.add(abs(main - ref) / abs(ref), f"n={n} alpha={alpha} sample={k}")
    return w.result("wedge-vs-eigen", 1e-10, "sympoly")


def suite_gradient(samples: int, seed: int = 2, mutate: str | None = None) -> SuiteResult:
    """Gradient of ``-S_alpha(X^{-1})`` against centred differences."""
    rng = np.random.default_rng(seed)
    sign = -1.0 if mutate == "grad-sign" else 1.0
    w = _Worst()
    for n in (2, 3):
        for alpha in range(1, n + 1):
            for k in range(samples):
                X, g = random_positive(rng, n), random_positive(rng, n)
                H = random_hermitian(rng, n)
                D = -sympoly.grad_Salpha_inv(X, g, alpha)
                analytic = sign * float(np.trace(D @ H).real)
                fd = float(oracle.fd_directional(lambda Y: -sympoly.Salpha_inv(Y, g, alpha), X, H, 1e-5, richardson=True))
                scale = max(abs(fd), np.linalg.norm(D) * np.linalg.norm(H))
                w.add(abs(analytic - fd) / scale, f"n={n} alpha={alpha} sample={k}")
    return w.result("gradient-fd", 1e-6, "sympoly.grad_Salpha_inv")


def suite_frame(samples: int, seed: int = 3) -> SuiteResult:
    """Gradient in an eigenframe against the subset-sum formula."""
    rng = np.random.default_rng(seed)
    w = _Worst()
    for n in (2, 3, 4):
        for alpha in range(1, n + 1):
            for k in range(samples):
                lam = rng.uniform(0.3, 3.0, n)
                Q, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
                X = Q @ np.diag(lam) @ Q.conj().T
                D = Q.conj().T @ sympoly.grad_Salpha_inv(X, np.eye(n), alpha) @ Q
                ref = oracle.diagonal_frame_grad(lam, alpha)
                err = np.abs(D - np.diag(ref)).max() / max(1.0, np.abs(ref).max())
                w.add(err, f"n={n} alpha={alpha} sample={k}")
    return w.result("gradient-frame", 1e-10, "sympoly.grad_Salpha_inv")


def suite_concavity(samples: int, seed: int = 4) -> SuiteResult:
    """Second differences of ``-S_alpha(X^{-1})`` along random lines are nonpositive."""
    rng = np.random.default_rng(seed)
    w = _Worst()
    for n in (2, 3):
        for alpha in range(1, n + 1):
            for k in range(samples):
                X, g = random_positive(rng, n), random_positive(rng, n)
                H = random_hermitian(rng, n)
                H /= np.linalg.norm(H)
                d2 = float(oracle.fd_second(lambda Y: -sympoly.Salpha_inv(Y, g, alpha), X, H, 1e-3))
                w.add(max(d2, 0.0), f"n={n} alpha={alpha} sample={k}")
    return w.result("concavity", 1e-8, "sympoly.Salpha_inv")


def suite_cone(samples: int, seed: int = 5) -> SuiteResult:
    """Wedge-form cone verdict against the pointwise margins."""
    rng = np.random.default_rng(seed)
    w = _Worst()
    for n in (2, 3):
        for alpha in range(1, n):
            for k in range(samples):
                chi_p, g = random_positive(rng, n), random_positive(rng, n)
                lam = tensor.rel_eigen(chi_p, g)
                threshold = comb(n, alpha) / sympoly.restricted_all(alpha, 1.0 / lam).max()
                psi = threshold * rng.uniform(0.5, 1.5)
                margin, _ = pointwise_margin(lam, psi, alpha)
                if abs(float(margin)) < 1e-9:
                    continue
                agree = oracle.cone_wedge_holds(chi_p, g, psi, alpha) == bool(margin > 0)
                w.add(0.0 if agree else 1.0, f"n={n} alpha={alpha} sample={k}")
    return w.result("cone-equivalence", 0.0, "cone.pointwise_margin")


def _small_problem(m: int, alpha: int, seed: int):
    grid = TorusGrid(2, m)
    rng = np.random.default_rng(seed)
    x = grid.coords()
    u = 0.02 * np.cos(2 * np.pi * (x[0] + x[3]) + rng.uniform(0, 6)) + 0.01 * np.sin(2 * np.pi * (x[1] - x[2]))
    g = geometry.metric_preset(grid, "conformal", 0.1)
    data = manufacture(grid, u, g, np.eye(2), alpha)
    return grid, data, u


def suite_linearization(seed: int = 6) -> SuiteResult:
    """Linearised operator against a centred difference of ``log F``."""
    w = _Worst()
    for alpha in (1, 2):
        grid, data, u = _small_problem(8, alpha, seed)
        rng = np.random.default_rng(seed + alpha)
        eta = grid.truncate(rng.standard_normal(grid.shape), 0.3)
        L = PencilEval(data, u).linearize()
        fd = oracle.fd_directional(lambda v: PencilEval(data, v).log_F(), u, eta, 1e-4, richardson=True)
        err = np.abs(L.apply(eta) - fd).max() / np.abs(fd).max()
        w.add(err, f"m=8 alpha={alpha} conformal metric")
    return w.result("linearization-fd", 1e-7, "mongeampere.linearize")


def suite_dense(seed: int = 7) -> SuiteResult:
    """Iterative bordered solve against dense factorisation (m = 8)."""
    w = _Worst()
    cfg = SolveConfig(lin_tol=1e-13)
    for alpha in (1, 2):
        grid, data, u = _small_problem(8, alpha, seed)
        L = PencilEval(data, u).linearize()
        rng = np.random.default_rng(seed + alpha)
        rhs = rng.standard_normal(grid.shape)
        rhs -= rhs.mean()
        # make rhs compatible: project onto the range by a bordered solve first
        eta_it, s, _ = bordered_solve(L, rhs, cfg)
        rhs_c = rhs - s
        eta_dense = oracle.dense_solve(lambda v: -L.apply(v), rhs_c, tol=1e-6)
        err = np.abs(eta_it - eta_dense).max() / np.abs(eta_dense).max()
        w.add(err, f"m=8 alpha={alpha}")
    return w.result("dense-vs-iterative", 1e-8, "continuity.bordered_solve")


def suite_curvature(m: int) -> SuiteResult:
    """Both curvature formulas on non-Kahler presets; flat metric has none."""
    w = _Worst()
    grid = TorusGrid(2, m)
    for preset in ("conformal", "hermitianPerturbed"):
        cd = geometry.chern_data(grid, geometry.metric_preset(grid, preset), tol=np.inf)
        w.add(cd.discrepancy, f"m={m} preset={preset}")
        del cd
    flat = geometry.chern_data(TorusGrid(2, 8), geometry.metric_preset(TorusGrid(2, 8), "flat"))
    w.add(max(flat.max_abs().values()) * 1e4, "flat metric (scaled by 1e4)")
    return w.result("curvature-double", 1e-8, "geometry.chern_data")


def run_battery(mutate: str | None = None, quick: bool = False) -> list[SuiteResult]:
    samples = 20 if quick else 100
    suites = [
        lambda: suite_wedge(samples // 2),
        lambda: suite_gradient(samples, mutate=mutate),
        lambda: suite_frame(samples // 5),
        lambda: suite_concavity(samples),
        lambda: suite_cone(samples),
        suite_linearization,
        suite_dense,
        lambda: suite_curvature(16 if quick else 32),
    ]
    out = []
    for suite in suites:
        t0 = time.perf_counter()
        res = suite()
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out
