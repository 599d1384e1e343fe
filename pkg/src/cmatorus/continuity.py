"""Continuation in t with joint Newton correction of ``(u, b)``.

The family at parameter ``t`` is

    chi_u^n = psi^t start^{1-t} e^b chi_u^{n-alpha} ^ omega^alpha,

marched from ``t = 0`` (solved by the start state) to ``t = 1``.  Each
Newton step solves the bordered system ``-L eta + s = -r`` with ``eta``
mean-zero, where ``L`` is the linearisation of ``log F`` and ``s`` the
increment of ``b``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.sparse.linalg as spla

from .cone import build_stage0, cone_check, kahler_constant
from .grid import TorusGrid
from .mongeampere import Inadmissible, LinearizedOperator, PencilEval, ProblemData, chi_u, varphi_of


log = logging.getLogger(__name__)


class ContinuityError(RuntimeError):
    """Numerical failure of the corrector or the t-march."""


class NewtonDiverged(ContinuityError):
    pass


class LineSearchStall(ContinuityError):
    pass


class LinearSolveFailed(ContinuityError):
    pass


class StepUnderflow(ContinuityError):
    def __init__(self, last_t: float, dt: float, trace: list):
        self.last_t = last_t
        self.trace = trace
        super().__init__(f"step {dt:.3e} fell below dtMin; last accepted t = {last_t:.6f}")


class HypothesisViolation(ValueError):
    """Inputs violate a hypothesis the pipeline relies on."""


@dataclass(frozen=True)
class SolveConfig:
    tol_newton: float = 1e-10
    max_newton: int = 30
    dt_init: float = 0.1
    dt_min: float = 1e-4
    line_search_shrink: float = 0.5
    margin_floor: float = 1e-6
    lin_tol: float = 1e-8
    lin_maxiter: int = 500
    # memory cap for Krylov basis vectors; bounds the GMRES restart length
    krylov_bytes: int = 2**29

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"{f.name} must be positive")
        if not self.dt_min <= self.dt_init <= 1:
            raise ValueError("need dt_min <= dt_init <= 1")
        if not self.line_search_shrink < 1:
            raise ValueError("line_search_shrink must be < 1")

    # camelCase names used in config files and reports
    KEYS = {
        "tolNewton": "tol_newton",
        "maxNewton": "max_newton",
        "dtInit": "dt_init",
        "dtMin": "dt_min",
        "lineSearchShrink": "line_search_shrink",
        "marginFloor": "margin_floor",
        "linTol": "lin_tol",
        "linMaxIter": "lin_maxiter",
        "krylovBytes": "krylov_bytes",
    }

    @classmethod
    def from_mapping(cls, values: dict) -> "SolveConfig":
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in values.items():
            name = cls.KEYS.get(key, key)
            if name not in types:
                raise KeyError(f"unknown solver option {key!r}")
            kwargs[name] = int(raw) if types[name] in (int, "int") else float(raw)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {k: getattr(self, v) for k, v in self.KEYS.items()}


@dataclass(frozen=True)
class HomotopyState:
    t: float
    u: np.ndarray
    b: float
    res_inf: float
    margin: float
    newton_iters: int
    res_history: tuple = field(default=(), compare=False)
    lin_iters: int = 0


# -- linear algebra --------------------------------------------------------


def _restart(size: int, cfg: SolveConfig) -> int:
    return int(max(4, min(cfg.lin_maxiter, cfg.krylov_bytes // (8 * size))))


def bordered_solve(L: LinearizedOperator, rhs: np.ndarray, cfg: SolveConfig) -> tuple[np.ndarray, float, int]:
    """Solve ``-L eta + s = rhs`` for mean-zero ``eta`` and constant ``s``.

    Converged means relative residual ``<= cfg.lin_tol``, or an RMS
    residual a hundred times below ``cfg.tol_newton`` (right-hand sides
    at roundoff level cannot reach a relative target).

    The bordered operator ``v -> -L v + mean(v)`` is invertible on all
    fields; ``eta = v - mean(v)`` and ``s = mean(v)`` since ``L`` kills
    constants.  Preconditioned by the inverse of the constant-coefficient
    operator with ``L``'s mean coefficients.

    Raises
    ------
    LinearSolveFailed
        If the true relative residual stays above ``cfg.lin_tol`` within
        ``cfg.lin_maxiter`` iterations.
    """
    grid = L.grid
    shape = grid.shape
    N = grid.size
    sym = -L.mean_symbol()
    sym.flat[0] = 1.0
    precond = 1.0 / sym

    def matvec(x):
        v = x.reshape(shape)
        Lv = L.apply(v)
        Lv *= -1.0
        Lv += np.mean(v)
        return Lv.ravel()

    def psolve(x):
        return grid.irfft(grid.rfft(x.reshape(shape)) * precond).ravel()

    def precond_matvec(y):
        # matvec(psolve(y)) sharing the transform between the two
        F = grid.rfft(y.reshape(shape))
        F *= precond
        v, Lv = L.apply_hat(F)
        del F
        Lv *= -1.0
        Lv += np.mean(v)
        return Lv.ravel()

    # right preconditioning: GMRES then minimises the true residual
    A = spla.LinearOperator((N, N), matvec=precond_matvec, dtype=float)
    b = rhs.ravel()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0:
        return np.zeros(shape), 0.0, 0
    target = max(cfg.lin_tol * bnorm, 1e-2 * cfg.tol_newton * math.sqrt(N))
    restart = _restart(N, cfg)
    count = [0]

    def cb(_):
        count[0] += 1

    # scipy counts restart cycles in maxiter
    y, _ = spla.gmres(
        A,
        b,
        rtol=0.0,
        atol=0.5 * target,
        restart=restart,
        maxiter=max(1, math.ceil(cfg.lin_maxiter / restart)),
        callback=cb,
        callback_type="pr_norm",
    )
    x = psolve(y)
    err = float(np.linalg.norm(b - matvec(x)))
    if err > target:
        raise LinearSolveFailed(
            f"relative residual {err / bnorm:.3e} > {cfg.lin_tol:.1e} after {count[0]} iterations"
        )
    v = x.reshape(shape)
    s = float(np.mean(v))
    return v - s, s, count[0]


# -- Newton corrector ------------------------------------------------------


def _margin(data: ProblemData, u: np.ndarray) -> float:
    return PencilEval(data, u).margin()


def evaluate_state(u, b: float, t: float, data: ProblemData, start=None) -> HomotopyState:
    ev = PencilEval(data, u)
    res = float(np.abs(ev.residual(b, t, start)).max())
    return HomotopyState(t, u, b, res, ev.margin(), 0, (res,))


def newton_correct(state: HomotopyState, t: float, data: ProblemData, cfg: SolveConfig, start=None) -> HomotopyState:
    """Newton iteration on ``residual(u, b, t) = 0`` from ``state``.

    Steps are damped by ``cfg.line_search_shrink`` until the admissibility
    margin stays above ``cfg.margin_floor`` and the residual sup-norm
    decreases.

    Raises
    ------
    NewtonDiverged, LineSearchStall, LinearSolveFailed
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} outside [0, 1]")
    u, b = state.u, float(state.b)
    ev = PencilEval(data, u)
    r = ev.residual(b, t, start)
    res = float(np.abs(r).max())
    history = [res]
    margin = None
    iters = lin_total = 0
    while res > cfg.tol_newton:
        if iters >= cfg.max_newton:
            raise NewtonDiverged(f"no convergence in {cfg.max_newton} iterations (residual {res:.3e})")
        L = ev.linearize()
        # free the old evaluation before the line search allocates new ones
        ev = None
        eta, s, lin = bordered_solve(L, -r, cfg)
        del L
        lin_total += lin
        step = 1.0
        while True:
            ev_try = r_try = u_try = None
            u_try = eta * step
            u_try += u
            b_try = b + step * s
            try:
                ev_try = PencilEval(data, u_try)
                m_try = ev_try.margin()
                ok = m_try >= cfg.margin_floor
                if ok:
                    r_try = ev_try.residual(b_try, t, start)
                    res_try = float(np.abs(r_try).max())
                    ok = res_try < res
            except Inadmissible:
                ok = False
            if ok:
                break
            step *= cfg.line_search_shrink
            if step < 1e-4:
                raise LineSearchStall(f"line search stalled at residual {res:.3e}")
        u, b, r, res, margin, ev = u_try, b_try, r_try, res_try, m_try, ev_try
        ev_try = r_try = u_try = eta = None
        history.append(res)
        iters += 1
    if margin is None:
        margin = ev.margin()
    return HomotopyState(t, u, b, res, margin, iters, tuple(history), lin_total)


# -- continuation ----------------------------------------------------------


def b_bound(data: ProblemData, start=None) -> float:
    """``sup |ln start - ln psi|``: bound on ``|b_t|`` along the family."""
    start = data.varphi if start is None else start
    return float(np.abs(np.log(start) - np.log(data.psi)).max())


def b_bound_at(t: float, data: ProblemData, start=None, reference=None) -> float:
    """Bound on ``|b|`` for one state of the family at time ``t``.

    ``reference`` is ``F`` of any admissible comparison potential (default:
    ``start``). At the maximum and minimum of ``u_t`` minus that potential
    ellipticity gives ``|b_t| <= sup |ln reference - ln psi_t|`` with
    ``ln psi_t = t ln psi + (1 - t) ln start``. For ``reference = start``
    this is ``t * b_bound(data, start)``.
    """
    start = data.varphi if start is None else start
    reference = start if reference is None else reference
    log_t = t * np.log(data.psi) + (1.0 - t) * np.log(start)
    return float(np.abs(np.log(reference) - log_t).max())


def run_homotopy(
    data: ProblemData,
    start_state: tuple[np.ndarray, float] | None = None,
    cfg: SolveConfig | None = None,
    start_rhs=None,
    callback=None,
) -> list[HomotopyState]:
    """March ``t`` from 0 to 1 and return the accepted states.

    ``start_state`` is ``(u0, b0)`` solving the family at ``t = 0``;
    the default ``(0, 0)`` solves it when ``start_rhs`` is ``varphi``.
    ``callback(state)`` is invoked on every accepted state.

    Raises
    ------
    StepUnderflow
        If the step falls below ``cfg.dt_min``; carries the last good t.
    """
    cfg = cfg or SolveConfig()
    grid = data.grid
    if start_state is None:
        start_state = (grid.zeros(), 0.0)
    u0, b0 = start_state
    u0 = np.asarray(u0, dtype=float)
    u0 = u0 - grid.mean(u0)
    start = data.varphi if start_rhs is None else np.broadcast_to(start_rhs, grid.shape)

    state = newton_correct(evaluate_state(u0, float(b0), 0.0, data, start), 0.0, data, cfg, start)
    if np.array_equal(np.broadcast_to(data.psi, grid.shape), start):
        final = replace(state, t=1.0)
        if callback:
            callback(final)
        return [final]
    trace = [state]
    if callback:
        callback(state)
    prev = None
    dt = cfg.dt_init
    while state.t < 1.0:
        t_new = state.t + dt
        if t_new > 1.0 - 1e-12:
            t_new = 1.0
        guess = state
        if prev is not None:
            # secant predictor from the last two accepted states
            w = (t_new - state.t) / (state.t - prev.t)
            u_pred = state.u + w * (state.u - prev.u)
            b_pred = state.b + w * (state.b - prev.b)
            try:
                if _margin(data, u_pred) >= cfg.margin_floor:
                    guess = HomotopyState(state.t, u_pred, b_pred, np.inf, np.nan, 0)
            except Inadmissible:
                pass
        try:
            new = newton_correct(guess, t_new, data, cfg, start)
        except (ContinuityError, Inadmissible) as exc:
            log.debug("corrector failed at t=%.6g: %s", t_new, exc)
            dt *= 0.5
            if dt < cfg.dt_min:
                raise StepUnderflow(state.t, dt, trace) from None
            continue
        prev, state = state, new
        trace.append(state)
        if callback:
            callback(state)
        if state.newton_iters <= 3:
            dt = min(1.5 * dt, cfg.dt_init)
    return trace


@dataclass
class TwoStageResult:
    u: np.ndarray
    b: float
    trace0: list
    trace1: list
    psi0: np.ndarray
    c: float
    stage0: object


def is_closed(grid: TorusGrid, form, tol: float = 1e-9) -> bool:
    """``d_k A_{i jbar} = d_i A_{k jbar}`` for a Hermitian form field."""
    form = np.asarray(form)
    if form.ndim == 2:
        return True
    n = grid.n
    scale = max(1.0, float(np.abs(form).max()))
    for j in range(n):
        for i in range(n):
            for k in range(i + 1, n):
                a = grid.partial(form[..., i, j], k)
                c = grid.partial(form[..., k, j], i)
                if float(np.abs(a - c).max()) > tol * scale:
                    return False
    return True


def solve_kahler_two_stage(
    data: ProblemData,
    ulbar: np.ndarray,
    delta: float,
    cfg: SolveConfig | None = None,
    tol: float = 1e-10,
) -> TwoStageResult:
    """Two continuity runs: ``varphi_v -> psi_0`` then ``psi_0 -> psi``.

    Raises
    ------
    HypothesisViolation
        Before any solve, if the forms are not closed, the cone condition
        fails for ``chi_ulbar`` or ``psi < c - tol`` somewhere.
    """
    cfg = cfg or SolveConfig()
    grid = data.grid
    if not (is_closed(grid, data.g) and is_closed(grid, data.chi)):
        raise HypothesisViolation("two-stage pipeline needs closed g and chi")
    X = chi_u(data, ulbar)
    try:
        report = cone_check(X, data.psi, data.alpha, data.g)
    except Inadmissible as exc:
        raise HypothesisViolation(f"chi_ulbar inadmissible: {exc}") from None
    if not report.holds:
        raise HypothesisViolation(f"cone condition fails (min margin {report.min_margin:.3e})")
    c = kahler_constant(grid, data.chi, data.g, data.alpha)
    if float(np.min(data.psi)) < c - tol:
        raise HypothesisViolation(f"psi dips below c = {c:.6g} (min {float(np.min(data.psi)):.6g})")
    stage0 = build_stage0(grid, ulbar, data.psi, delta, data)
    stage1 = data.with_psi(stage0.psi0)
    trace0 = run_homotopy(stage1, (ulbar, 0.0), cfg, start_rhs=varphi_of(data.g, X, data.alpha))
    last = trace0[-1]
    trace1 = run_homotopy(data, (last.u, last.b), cfg, start_rhs=stage0.psi0)
    final = trace1[-1]
    return TwoStageResult(final.u, final.b, trace0, trace1, stage0.psi0, c, stage0)
