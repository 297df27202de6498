"""
Space-time residuals for ``u_t + F(x, u, grad u) = 0`` on a graph.

Fields are stored as arrays of shape (Ntime + 1, n_nodes); row ``n`` is the
slab at ``t_n = n dt``. The implicit scheme evaluates ``F`` on slab ``n``,
the explicit one on slab ``n - 1``. Scaled residual entries:

* interior, ``n >= 1``: ``(1/(M Nt))^(1/q) ((u^n - u^{n-1})/dt + F)``
* boundary, ``n >= 1``: ``(mu_b/(N Nt))^(1/q) (u^n - b^n)``
* interior, ``n = 0``: ``(mu_i/M)^(1/q) (u^0 - g^0)``

Entries without an equation are stored as 0. For the explicit scheme the
boundary slab ``n = 0`` feeds ``F`` at ``t_1``, so it also gets a boundary
entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_graph import GridError, GridGraph, second_neighbors
from .hamiltonians import DriftBase, ImplicitStep, LaxFriedrichs, ObstacleStep, fd_partials
from .residual import LossParams, SteadyProblem, q_weights
from .steady import ConvergenceError, newton_solve

__all__ = [
    "SpaceTimeField",
    "SpaceTimeProblem",
    "MarchingError",
    "residual_spacetime_implicit",
    "residual_spacetime_explicit",
    "loss_spacetime",
    "F3Report",
    "check_f3",
    "march_implicit",
    "explicit_residual_recurrence",
    "explicit_recurrence_step",
    "forward_substitute",
    "obstacle_residual",
    "obstacle_transport",
    "march_obstacle",
    "stability_time_bound",
    "cumulative_time_bound",
]


class MarchingError(RuntimeError):
    """Per-step Newton failure; ``step`` is the failing time level."""

    def __init__(self, msg, step):
        super().__init__(msg)
        self.step = step


@dataclass
class SpaceTimeField:
    values: np.ndarray
    dt: float

    @property
    def Ntime(self) -> int:
        return self.values.shape[0] - 1


def _node_data(data, g: GridGraph, nodes):
    if callable(data):
        return np.asarray(data(g.coords[nodes]), dtype=float)
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0:
        return np.full(len(nodes), float(arr))
    if arr.shape == (g.n_nodes,):
        return arr[nodes]
    if arr.shape == (len(nodes),):
        return arr
    raise GridError(f"data of shape {arr.shape} does not match the graph")


def _boundary_series(b, g: GridGraph, dt, Ntime):
    """(Ntime + 1, N) boundary values; ``b`` may be scalar, (N,), (Nt+1, N) or b(x, t)."""
    xb = g.coords[g.boundary]
    if callable(b):
        return np.stack([np.asarray(b(xb, n * dt), dtype=float) * np.ones(g.N) for n in range(Ntime + 1)])
    arr = np.asarray(b, dtype=float)
    if arr.ndim == 2:
        if arr.shape != (Ntime + 1, g.N):
            raise GridError(f"boundary series has shape {arr.shape}, expected {(Ntime + 1, g.N)}")
        return arr.copy()
    return np.tile(_node_data(arr, g, g.boundary), (Ntime + 1, 1))


class SpaceTimeProblem:
    """Implicit or explicit space-time residual of ``u_t + F = 0``.

    Args:
        g: spatial graph.
        F: spatial Hamiltonian (slot interface of :mod:`hjres.hamiltonians`).
        g0: initial data on the nodes (scalar, (n,), (M,) or callable).
        b: boundary data (scalar, (N,), (Nt+1, N) or ``b(x, t)``).
        dt: time step.
        Ntime: number of steps.
        lp: loss parameters (``q``, ``mu_b``, ``mu_i``).
        scheme: ``"implicit"`` or ``"explicit"``.
    """

    def __init__(self, g: GridGraph, F, g0, b, dt: float, Ntime: int, lp: LossParams | None = None,
                 scheme: str = "implicit"):
        if scheme not in ("implicit", "explicit"):
            raise ValueError(f"unknown scheme {scheme!r}")
        if not dt > 0 or Ntime < 1:
            raise ValueError("need dt > 0 and Ntime >= 1")
        self.g, self.F, self.dt, self.Nt, self.scheme = g, F, float(dt), int(Ntime), scheme
        self.lp = LossParams(mu_i=1.0) if lp is None else lp
        self.g0 = _node_data(g0, g, g.interior)
        self.b = _boundary_series(b, g, dt, Ntime)
        q = self.lp.q
        self.s_int = (g.M * self.Nt) ** (-1.0 / q)
        self.s_bdy = (self.lp.mu_b / (g.N * self.Nt)) ** (1.0 / q) if g.N else 0.0
        self.s_ini = (self.lp.mu_i / g.M) ** (1.0 / q)
        self._I = g.interior
        self._nb = g.neighbors[g.interior]
        self._dx = g.edge_len[g.interior]
        self._x = np.tile(g.coords[g.interior], (self.Nt, 1))
        self._idx = np.tile(np.arange(g.M), self.Nt)

    @property
    def shape(self):
        return (self.Nt + 1, self.g.n_nodes)

    def _check(self, U):
        U = np.asarray(U.values if isinstance(U, SpaceTimeField) else U, dtype=float)
        if U.shape != self.shape:
            raise GridError(f"field has shape {U.shape}, expected {self.shape}")
        return U

    def _slabs(self, U):
        return U[1:] if self.scheme == "implicit" else U[:-1]

    def _F_args(self, S):
        p = (S[:, self._I, None] - S[:, self._nb]) / self._dx
        return self._x, S[:, self._I].ravel(), p.reshape(-1, p.shape[-1]), self._idx

    def residual(self, U) -> np.ndarray:
        U = self._check(U)
        R = np.zeros(self.shape)
        Fv = self.F.evaluate(*self._F_args(self._slabs(U))).reshape(self.Nt, -1)
        I, B = self._I, self.g.boundary
        R[1:, I] = self.s_int * ((U[1:, I] - U[:-1, I]) / self.dt + Fv)
        R[1:, B] = self.s_bdy * (U[1:, B] - self.b[1:])
        R[0, I] = self.s_ini * (U[0, I] - self.g0)
        if self.scheme == "explicit":
            R[0, B] = self.s_bdy * (U[0, B] - self.b[0])
        return R

    def loss(self, U) -> float:
        R = self.residual(U)
        return float(np.sum(np.abs(R) ** self.lp.q)) / self.lp.q

    def F_partials(self, U):
        """``(F_u, F_p)`` on the slabs feeding the interior equations, shapes (Nt, M), (Nt, M, K)."""
        U = self._check(U)
        Fu, Fp = self.F.partials(*self._F_args(self._slabs(U)))
        return Fu.reshape(self.Nt, -1), Fp.reshape(self.Nt, self.g.M, -1)

    def loss_and_gradient(self, U):
        U = self._check(U)
        R = self.residual(U)
        W = q_weights(R, self.lp.q)
        n = self.g.n_nodes
        I, B = self._I, self.g.boundary
        G = np.zeros(self.shape)
        wI = W[1:, I]
        G[1:, I] += self.s_int / self.dt * wI
        G[:-1, I] -= self.s_int / self.dt * wI
        Fu, Fp = self.F_partials(U)
        scaled = Fp / self._dx
        off = 1 if self.scheme == "implicit" else 0
        slab_grad = np.zeros((self.Nt, n))
        slab_grad[:, I] = self.s_int * (Fu + scaled.sum(axis=2)) * wI
        contrib = -self.s_int * scaled * wI[:, :, None]
        flat = (np.arange(self.Nt)[:, None, None] * n + self._nb[None, :, :]).ravel()
        slab_grad += np.bincount(flat, weights=contrib.ravel(), minlength=self.Nt * n).reshape(self.Nt, n)
        G[off:off + self.Nt] += slab_grad
        G[1:, B] += self.s_bdy * W[1:, B]
        G[0, I] += self.s_ini * W[0, I]
        if self.scheme == "explicit":
            G[0, B] += self.s_bdy * W[0, B]
        return float(np.sum(np.abs(R) ** self.lp.q)) / self.lp.q, G, R

    def gradient(self, U):
        return self.loss_and_gradient(U)[1]


def residual_spacetime_implicit(U, g, F, g0, b, dt, lp=None) -> np.ndarray:
    U = np.asarray(U.values if isinstance(U, SpaceTimeField) else U, dtype=float)
    return SpaceTimeProblem(g, F, g0, b, dt, U.shape[0] - 1, lp, "implicit").residual(U)


def residual_spacetime_explicit(U, g, F, g0, b, dt, lp=None) -> np.ndarray:
    U = np.asarray(U.values if isinstance(U, SpaceTimeField) else U, dtype=float)
    return SpaceTimeProblem(g, F, g0, b, dt, U.shape[0] - 1, lp, "explicit").residual(U)


def loss_spacetime(U, g, F, g0, b, dt, lp=None, scheme="implicit") -> float:
    U = np.asarray(U.values if isinstance(U, SpaceTimeField) else U, dtype=float)
    return SpaceTimeProblem(g, F, g0, b, dt, U.shape[0] - 1, lp, scheme).loss(U)


@dataclass
class F3Report:
    ok: bool
    worst_lambda: float
    min_dt_Fu: float


def check_f3(F, dt: float, g: GridGraph, samples: int = 1000, seed=0, eps=1e-6, margin=1e-6,
             u_range=(-2.0, 2.0), p_range=(-5.0, 5.0)) -> F3Report:
    """Sampled check of ``dt * dF/du >= -lambda`` with ``lambda < 1``."""
    if samples < 1:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(seed)
    index = rng.integers(0, g.M, size=samples)
    x = g.coords[g.interior[index]]
    u = rng.uniform(*u_range, size=samples)
    p = rng.uniform(*p_range, size=(samples, g.K))
    Fu, _ = fd_partials(F, x, u, p, index, eps)
    worst = float(dt * Fu.min())
    return F3Report(ok=worst >= -1.0 + margin, worst_lambda=-min(0.0, worst), min_dt_Fu=worst)


def march_implicit(g0, b, g: GridGraph, F, dt: float, Ntime: int, tol: float = 1e-12,
                   lp: LossParams | None = None, max_iters: int = 200) -> SpaceTimeField:
    """Backward-Euler marching, one Newton solve per step (the space-time oracle)."""
    prob = SpaceTimeProblem(g, F, g0, b, dt, Ntime, lp)
    U = np.zeros(prob.shape)
    U[0, g.interior] = prob.g0
    U[0, g.boundary] = prob.b[0]
    for n in range(1, Ntime + 1):
        step = SteadyProblem(g, ImplicitStep(F, U[n - 1, g.interior], dt), prob.b[n], lp)
        try:
            U[n] = newton_solve(U[n - 1], step, tol=tol, max_iters=max_iters)
        except ConvergenceError as exc:
            raise MarchingError(f"Newton failed at step {n}: {exc}", n) from exc
    return SpaceTimeField(U, dt)


def forward_substitute(g0, b, g: GridGraph, F, dt: float, Ntime: int) -> SpaceTimeField:
    """Explicit Euler solution ``u^{n+1} = u^n - dt F(u^n)``, boundary from ``b``."""
    prob = SpaceTimeProblem(g, F, g0, b, dt, Ntime, scheme="explicit")
    U = np.zeros(prob.shape)
    U[0, g.interior] = prob.g0
    U[0, g.boundary] = prob.b[0]
    x, idx = g.coords[g.interior], np.arange(g.M)
    for n in range(Ntime):
        p = (U[n, g.interior, None] - U[n, prob._nb]) / prob._dx
        U[n + 1, g.interior] = U[n, g.interior] - dt * F.evaluate(x, U[n, g.interior], p, idx)
        U[n + 1, g.boundary] = prob.b[n + 1]
    return SpaceTimeField(U, dt)


def explicit_recurrence_step(prob: SpaceTimeProblem, Fu, Fp, n: int, w_next) -> np.ndarray:
    """One backward step of the explicit residual recurrence, level ``n`` from ``n + 1``.

    ``Fu``/``Fp`` are the partials on slab ``n`` (as from ``prob.F_partials``).
    Entries at boundary nodes are zero.
    """
    g = prob.g
    dt = prob.dt
    c = dt * Fp[n] / prob._dx
    w = np.zeros(g.n_nodes)
    wI = w_next[g.interior]
    w[g.interior] = (1.0 - dt * Fu[n] - c.sum(axis=1)) * wI
    w += np.bincount(prob._nb.ravel(), weights=(c * wI[:, None]).ravel(), minlength=g.n_nodes)
    w[g.boundary] = 0.0
    return w


def explicit_residual_recurrence(U, prob: SpaceTimeProblem, w_final=None) -> np.ndarray:
    """Propagate interior residual weights backwards from ``w^N`` (zero by default).

    Returns an array of shape (Ntime + 1, n_nodes).
    """
    if prob.scheme != "explicit":
        raise ValueError("recurrence applies to the explicit scheme")
    Fu, Fp = prob.F_partials(U)
    W = np.zeros(prob.shape)
    if w_final is not None:
        W[-1] = w_final
    for n in range(prob.Nt - 1, -1, -1):
        W[n] = explicit_recurrence_step(prob, Fu, Fp, n, W[n + 1])
    return W


# -- obstacle problem -------------------------------------------------------------


def _unit(a):
    a = np.asarray(a, dtype=float)
    return a / np.linalg.norm(a)


def obstacle_transport(u, g: GridGraph, a, scheme: str = "laxfriedrichs") -> np.ndarray:
    """Discrete ``(a . grad u)_+`` (plus viscosity) on the interior nodes.

    ``laxfriedrichs``: centred differences and ``-sum_i (u_+ + u_- - 2u)/(2h)``.
    ``one_sided_2nd``: ``(sum_i a_i D_i u)_+`` with the second order upwind
    difference ``(3u - 4u(x - h e_i) + u(x - 2h e_i)) / (2h)`` (mirrored for
    ``a_i < 0``); nodes lacking the second neighbour use ``(u - u(x - h e_i))/h``.
    """
    a = _unit(a)
    u = np.asarray(u, dtype=float)
    I = g.interior
    if scheme == "laxfriedrichs":
        H = LaxFriedrichs(DriftBase(a), alpha=1.0, lam=0.0)
        p = (u[I, None] - u[g.neighbors[I]]) / g.edge_len[I]
        return H.evaluate(g.coords[I], u[I], p)
    if scheme != "one_sided_2nd":
        raise ValueError(f"unknown obstacle scheme {scheme!r}")
    total = np.zeros(g.M)
    for i in range(g.dim):
        slot = 2 * i if a[i] >= 0 else 2 * i + 1
        sgn = 1.0 if a[i] >= 0 else -1.0
        n1 = g.neighbors[I, slot]
        n2 = second_neighbors(g, slot)[I]
        first = (u[I] - u[n1]) / g.h
        second = (3 * u[I] - 4 * u[n1] + u[np.maximum(n2, 0)]) / (2 * g.h)
        total += a[i] * sgn * np.where(n2 >= 0, second, first)
    return np.maximum(total, 0.0)


def obstacle_residual(U, g: GridGraph, a, Psi, dt: float, scheme: str = "laxfriedrichs",
                      g0=None) -> np.ndarray:
    """``min((u^n - u^{n-1})/dt + T(u^n), u^n - Psi)`` on interior nodes, n >= 1.

    Row 0 holds ``u^0 - g0`` when ``g0`` is given (zeros otherwise); boundary
    entries are zero. Unscaled.
    """
    U = np.asarray(U.values if isinstance(U, SpaceTimeField) else U, dtype=float)
    psi = _node_data(Psi, g, np.arange(g.n_nodes))
    I = g.interior
    R = np.zeros_like(U)
    for n in range(1, U.shape[0]):
        A = (U[n, I] - U[n - 1, I]) / dt + obstacle_transport(U[n], g, a, scheme)
        R[n, I] = np.minimum(A, U[n, I] - psi[I])
    if g0 is not None:
        R[0, I] = U[0, I] - _node_data(g0, g, I)
    return R


def march_obstacle(g: GridGraph, a, Psi, g0, dt: float, Ntime: int, tol: float = 1e-10) -> SpaceTimeField:
    """Implicit Lax-Friedrichs marching of the obstacle problem by Newton.

    Boundary nodes keep their initial values.
    """
    psi = _node_data(Psi, g, np.arange(g.n_nodes))
    u0 = _node_data(g0, g, np.arange(g.n_nodes))
    T = LaxFriedrichs(DriftBase(_unit(a)), alpha=1.0, lam=0.0)
    U = np.zeros((Ntime + 1, g.n_nodes))
    U[0] = u0
    for n in range(1, Ntime + 1):
        step = ObstacleStep(T, U[n - 1, g.interior], psi[g.interior], dt)
        prob = SteadyProblem(g, step, u0[g.boundary])
        try:
            U[n] = newton_solve(U[n - 1], prob, tol=tol)
        except ConvergenceError as exc:
            raise MarchingError(f"Newton failed at step {n}: {exc}", n) from exc
    return SpaceTimeField(U, dt)


# -- stability -------------------------------------------------------------------


def stability_time_bound(prev_diff: float, Rinf_next: float, bdiff: float, dt: float) -> float:
    """``prev_diff + max(dt * Rinf_next, bdiff)``."""
    return prev_diff + max(dt * Rinf_next, bdiff)


def cumulative_time_bound(diff0: float, Rinf_seq, bdiff_seq, dt: float) -> np.ndarray:
    """Fold :func:`stability_time_bound` over the steps; entry ``n`` bounds level ``n``."""
    Rinf_seq = np.asarray(Rinf_seq, dtype=float)
    bdiff_seq = np.broadcast_to(np.asarray(bdiff_seq, dtype=float), Rinf_seq.shape)
    out = [float(diff0)]
    for r, bd in zip(Rinf_seq, bdiff_seq):
        out.append(stability_time_bound(out[-1], r, bd, dt))
    return np.array(out)
