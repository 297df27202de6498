"""
Solvers for steady schemes: residual gradient descent, damped Newton, the
coarse-to-fine schedule and a-posteriori error bounds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .grid_graph import GridGraph, stencil_points
from .jacobian import jacobian_from_problem
from .residual import SteadyProblem

__all__ = [
    "SolveConfig",
    "ScheduleStage",
    "GDResult",
    "MultilevelResult",
    "DivergenceError",
    "ConvergenceError",
    "gradient_descent",
    "newton_solve",
    "prolong_constant",
    "multilevel_solve",
    "stability_bound",
    "APosterioriReport",
    "aposteriori_report",
]

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Non-finite loss; ``u`` is the last finite iterate."""

    def __init__(self, msg, u=None, iteration=None):
        super().__init__(msg)
        self.u = u
        self.iteration = iteration


class ConvergenceError(RuntimeError):
    """Newton failed; ``u`` is the best iterate and ``res_inf`` its residual."""

    def __init__(self, msg, u=None, res_inf=None, iteration=None):
        super().__init__(msg)
        self.u = u
        self.res_inf = res_inf
        self.iteration = iteration


@dataclass
class SolveConfig:
    step: float = 1e-3
    max_iters: int = 100_000
    tol_inf: float = 1e-3
    record_every: int = 100

    def __post_init__(self):
        if not (self.step > 0 and self.tol_inf > 0 and self.max_iters >= 1 and self.record_every >= 1):
            raise ValueError(f"invalid solver configuration {self}")


@dataclass
class ScheduleStage:
    h: float
    lam: float
    alpha: float
    step: float | None = None
    max_iters: int | None = None


@dataclass
class GDResult:
    u: np.ndarray
    history: np.ndarray  # rows (iter, loss, res_inf)
    iters: int
    converged: bool

    @property
    def loss_history(self):
        return self.history[:, 1]

    @property
    def resinf_history(self):
        return self.history[:, 2]


def gradient_descent(u0, prob: SteadyProblem, cfg: SolveConfig | None = None) -> GDResult:
    """Plain gradient steps ``u <- u - step * grad L(u)``.

    Stops as soon as ``max |R(u)| < tol_inf`` (scaled residual) or after
    ``max_iters`` steps. ``iters`` counts the gradient steps taken.
    """
    cfg = SolveConfig() if cfg is None else cfg
    u = np.array(u0, dtype=float)
    rows = []
    u_prev = u.copy()
    converged = False
    it = 0
    while True:
        L, grad, R = prob.loss_and_gradient(u)
        rinf = float(np.max(np.abs(R)))
        if not np.isfinite(L):
            raise DivergenceError(f"non-finite loss at iteration {it}", u=u_prev, iteration=it)
        if it % cfg.record_every == 0:
            rows.append((it, L, rinf))
        if rinf < cfg.tol_inf:
            converged = True
            break
        if it >= cfg.max_iters:
            break
        u_prev = u.copy()
        u -= cfg.step * grad
        it += 1
    if rows[-1][0] != it:
        rows.append((it, L, rinf))
    return GDResult(u=u, history=np.array(rows), iters=it, converged=converged)


def newton_solve(u0, prob: SteadyProblem, tol: float = 1e-12, max_iters: int = 200,
                 min_step: float = 2.0**-30) -> np.ndarray:
    """Damped Newton on ``R(u) = 0`` with backtracking on ``|R|_2``.

    If the line search stalls the iterate is nudged once by ``1e-10`` along
    the negative loss gradient before giving up.
    """
    u = np.array(u0, dtype=float)
    R = prob.residual(u)
    nudged = False
    for it in range(max_iters):
        rinf = float(np.max(np.abs(R)))
        if rinf <= tol:
            return u
        J = jacobian_from_problem(prob, u)
        du = spla.spsolve(J.tocsc(), R)
        r2 = np.linalg.norm(R)
        t = 1.0
        while t >= min_step:
            trial = u - t * du
            R_trial = prob.residual(trial)
            if np.linalg.norm(R_trial) < r2:
                break
            t *= 0.5
        else:
            if nudged:
                raise ConvergenceError("Newton line search stalled", u=u, res_inf=rinf, iteration=it)
            grad = prob.gradient(u)
            gn = np.linalg.norm(grad)
            trial = u - 1e-10 * grad / (gn if gn > 0 else 1.0)
            R_trial = prob.residual(trial)
            nudged = True
        u, R = trial, R_trial
    rinf = float(np.max(np.abs(R)))
    if rinf <= tol:
        return u
    raise ConvergenceError(f"Newton budget exhausted, |R|_inf={rinf:.3e}", u=u, res_inf=rinf,
                           iteration=max_iters)


def prolong_constant(u_coarse, g_coarse: GridGraph, g_fine: GridGraph) -> np.ndarray:
    """Piecewise-constant prolongation: each fine node takes the value of the
    coarse node to its left (per axis) in the coarse lattice."""
    u_coarse = np.asarray(u_coarse, dtype=float)
    lookup = np.full(int(np.prod(g_coarse.shape)), -1, dtype=np.int64)
    lookup[g_coarse.lattice_index] = np.arange(g_coarse.n_nodes)
    rel = (g_fine.coords - g_coarse.lo) / g_coarse.h
    idx = np.floor(rel + 1e-9).astype(np.int64)
    idx = np.clip(idx, 0, np.array(g_coarse.shape) - 1)
    node = lookup[np.ravel_multi_index(idx.T, g_coarse.shape)]
    if np.any(node < 0):
        raise ValueError("fine node has no coarse lattice node to its left")
    return u_coarse[node]


@dataclass
class MultilevelResult:
    stages: list = field(default_factory=list)
    problems: list = field(default_factory=list)
    total_iters: int = 0

    @property
    def u(self):
        return self.stages[-1].u

    @property
    def converged(self):
        return self.stages[-1].converged


def _check_monotone(stages: Sequence[ScheduleStage]):
    if not stages:
        raise ValueError("empty schedule")
    for a, b in zip(stages, stages[1:]):
        if b.h > a.h or b.lam > a.lam or b.alpha > a.alpha:
            raise ValueError("schedule must be non-increasing in h, lambda and alpha")


def multilevel_solve(stages: Sequence[ScheduleStage], build: Callable[[ScheduleStage], SteadyProblem],
                     cfg: SolveConfig | None = None, u0=None) -> MultilevelResult:
    """Gradient descent stage by stage, warm-starting each finer grid.

    ``build(stage)`` returns the :class:`SteadyProblem` of a stage. The first
    stage starts from ``u0`` (zeros by default).
    """
    cfg = SolveConfig() if cfg is None else cfg
    _check_monotone(stages)
    out = MultilevelResult()
    prev = None
    for k, st in enumerate(stages):
        prob = build(st)
        if prev is None:
            start = np.zeros(prob.n) if u0 is None else np.asarray(u0, dtype=float)
        else:
            start = prolong_constant(prev[0].u, prev[1].g, prob.g)
        scfg = SolveConfig(step=st.step or cfg.step, max_iters=st.max_iters or cfg.max_iters,
                           tol_inf=cfg.tol_inf, record_every=cfg.record_every)
        res = gradient_descent(start, prob, scfg)
        log.info("stage %d h=%g: %d iterations, converged=%s", k, st.h, res.iters, res.converged)
        out.stages.append(res)
        out.problems.append(prob)
        out.total_iters += res.iters
        prev = (res, prob)
    return out


def stability_bound(Rinf: float, bdiff: float, lam: float) -> float:
    """``max(bdiff, Rinf / lam)`` bounding the distance to the scheme solution.

    ``Rinf`` is the sup of the unscaled interior scheme residual and ``bdiff``
    the sup of the boundary data mismatch.
    """
    if not lam > 0:
        raise ValueError("stability bound needs lambda > 0")
    return max(bdiff, Rinf / lam)


@dataclass
class APosterioriReport:
    bound: float
    sup_residual: float
    sup_boundary: float
    n_mc: int


def aposteriori_report(candidate: Callable, prob: SteadyProblem, n_mc: int = 1000, seed=0,
                       inside: Callable | None = None) -> APosterioriReport:
    """Sampled version of the continuous a-posteriori bound.

    The scheme residual of ``candidate`` (a function of (m, d) points) is
    evaluated at ``n_mc`` uniform points in the bounding box of the interior
    nodes, optionally filtered by ``inside``; the boundary mismatch is taken
    over all boundary nodes. Sample maxima underestimate the true supremum.
    """
    g = prob.g
    rng = np.random.default_rng(seed)
    xI = g.coords[g.interior]
    lo, hi = xI.min(axis=0), xI.max(axis=0)
    X = lo + (hi - lo) * rng.random((n_mc, g.dim))
    if inside is not None:
        X = X[inside(X)]
    sup_res = 0.0
    if len(X):
        nb = stencil_points(X, g.h)
        u0 = np.asarray(candidate(X), dtype=float)
        un = np.asarray(candidate(nb.reshape(-1, g.dim)), dtype=float).reshape(len(X), -1)
        p = (u0[:, None] - un) / g.h
        sup_res = float(np.max(np.abs(prob.H.evaluate(X, u0, p))))
    ub = np.asarray(candidate(g.coords[g.boundary]), dtype=float)
    sup_b = float(np.max(np.abs(ub - prob.bvals))) if g.N else 0.0
    return APosterioriReport(bound=stability_bound(sup_res, sup_b, prob.H.lam),
                             sup_residual=sup_res, sup_boundary=sup_b, n_mc=n_mc)

