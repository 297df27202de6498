"""
Monotone numerical Hamiltonians and a sampling verifier for their hypotheses.

All evaluators are vectorised: ``x`` is (m, d), ``u`` is (m,), ``p`` is
(m, K) with the finite differences ``(u_j - u_k) / dx_jk`` in the slot order
of :mod:`hjres.grid_graph`. ``partials`` returns ``(dH/du, dH/dp)`` with
shapes (m,) and (m, K).

Derivatives at kinks follow one fixed convention so that Jacobians are
deterministic: ``sign(0) = 0``, the derivative of ``max(z, 0)`` at 0 is 0,
``max``/``min`` ties go to the first argument.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StencilError",
    "NumericalHamiltonian",
    "NormBase",
    "DriftBase",
    "FunctionBase",
    "LaxFriedrichs",
    "UpwindEikonal",
    "Godunov1D",
    "IsaacsHamiltonian",
    "FunctionHamiltonian",
    "ImplicitStep",
    "ObstacleStep",
    "eval_lax_friedrichs_1d",
    "eval_lax_friedrichs_graph",
    "eval_upwind_eikonal",
    "eval_godunov_ext_1d",
    "godunov_ext",
    "eval_isaacs",
    "isaacs_wind",
    "HypothesisReport",
    "check_hypotheses",
]

FD_STEP = 1e-6


class StencilError(ValueError):
    """Raised when a node lacks the neighbours an evaluator needs."""


def _source(f, x):
    if callable(f):
        return np.asarray(f(x), dtype=float)
    return float(f)


class NumericalHamiltonian:
    """Base class. Subclasses implement ``evaluate`` and usually ``partials``.

    ``index`` identifies the interior nodes being evaluated (positions in the
    interior ordering); only Hamiltonians that carry per-node data use it.
    """

    name = "generic"
    lam = 0.0
    alpha = 0.0
    lipschitz_bound: float | None = None

    def evaluate(self, x, u, p, index=None):
        raise NotImplementedError

    def partials(self, x, u, p, index=None):
        """Central finite differences with step ``FD_STEP``."""
        return fd_partials(self, x, u, p, index)

    def __call__(self, x, u, p, index=None):
        return self.evaluate(x, u, p, index)


def fd_partials(H, x, u, p, index=None, eps=FD_STEP):
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    Hu = (H.evaluate(x, u + eps, p, index) - H.evaluate(x, u - eps, p, index)) / (2 * eps)
    Hp = np.empty_like(p)
    for k in range(p.shape[1]):
        dp = np.zeros_like(p)
        dp[:, k] = eps
        Hp[:, k] = (H.evaluate(x, u, p + dp, index) - H.evaluate(x, u, p - dp, index)) / (2 * eps)
    return Hu, Hp


# -- base Hamiltonians H(x, P) of a continuous gradient P, used by LxF --------


class NormBase:
    """``H(x, P) = |P|_2 - f(x)``."""

    lipschitz = 1.0

    def __init__(self, f=1.0):
        self.f = f

    def value(self, x, P):
        return np.sqrt(np.sum(P * P, axis=1)) - _source(self.f, x)

    def dP(self, x, P):
        nrm = np.sqrt(np.sum(P * P, axis=1))
        safe = np.where(nrm > 0, nrm, 1.0)
        return np.where(nrm[:, None] > 0, P / safe[:, None], 0.0)


class DriftBase:
    """``H(x, P) = (a . P)_+`` (one-directional transport along ``a``)."""

    def __init__(self, a):
        self.a = np.asarray(a, dtype=float)
        self.lipschitz = float(np.max(np.abs(self.a)))

    def value(self, x, P):
        return np.maximum(P @ self.a, 0.0)

    def dP(self, x, P):
        active = (P @ self.a) > 0
        return active[:, None] * self.a[None, :]


class FunctionBase:
    """Wraps ``fn(x, P)``; gradient by finite differences unless ``dfn`` is given."""

    def __init__(self, fn, dfn=None, lipschitz=None):
        self.fn = fn
        self.dfn = dfn
        self.lipschitz = lipschitz

    def value(self, x, P):
        return np.asarray(self.fn(x, P), dtype=float)

    def dP(self, x, P):
        if self.dfn is not None:
            return np.asarray(self.dfn(x, P), dtype=float)
        out = np.empty_like(P)
        for i in range(P.shape[1]):
            dP = np.zeros_like(P)
            dP[:, i] = FD_STEP
            out[:, i] = (self.fn(x, P + dP) - self.fn(x, P - dP)) / (2 * FD_STEP)
        return out


# -- numerical Hamiltonians ----------------------------------------------------


class LaxFriedrichs(NumericalHamiltonian):
    """Lax-Friedrichs Hamiltonian on axis stencils.

    ``H(x, P) - alpha * sum_i (u_{i+} + u_{i-} - 2u) / (2h) + lam * u`` with
    the centred gradient ``P_i = (u_{i+} - u_{i-}) / (2h)``. In slot variables
    ``P_i = (p_{2i} - p_{2i+1}) / 2`` and the viscosity term is
    ``alpha * (p_{2i} + p_{2i+1}) / 2``. Monotone when ``alpha`` bounds
    ``|dH/dP_i|``.
    """

    name = "lax_friedrichs"

    def __init__(self, base=None, alpha=1.0, lam=0.0):
        self.base = NormBase() if base is None else base
        self.alpha = float(alpha)
        self.lam = float(lam)
        self.lipschitz_bound = getattr(self.base, "lipschitz", None)

    def _split(self, p):
        if p.shape[1] % 2:
            raise StencilError("Lax-Friedrichs needs axis pairs of neighbours")
        back, fwd = p[:, 0::2], p[:, 1::2]
        return 0.5 * (back - fwd), 0.5 * (back + fwd)

    def evaluate(self, x, u, p, index=None):
        P, visc = self._split(np.asarray(p, dtype=float))
        return self.base.value(x, P) + self.alpha * visc.sum(axis=1) + self.lam * np.asarray(u)

    def partials(self, x, u, p, index=None):
        p = np.asarray(p, dtype=float)
        P, _ = self._split(p)
        dP = self.base.dP(x, P)
        Hp = np.empty_like(p)
        Hp[:, 0::2] = 0.5 * (dP + self.alpha)
        Hp[:, 1::2] = 0.5 * (self.alpha - dP)
        return np.full(p.shape[0], self.lam), Hp


class UpwindEikonal(NumericalHamiltonian):
    """Rouy-Tourin type upwind eikonal: ``max_k (p_k)_+ - f(x) + lam * u``."""

    name = "upwind_eikonal"

    def __init__(self, f=1.0, lam=0.0):
        self.f = f
        self.lam = float(lam)
        self.lipschitz_bound = 1.0

    def evaluate(self, x, u, p, index=None):
        p = np.asarray(p, dtype=float)
        if p.shape[1] == 0:
            raise StencilError("upwind eikonal needs at least one neighbour")
        return np.maximum(p.max(axis=1), 0.0) - _source(self.f, x) + self.lam * np.asarray(u)

    def partials(self, x, u, p, index=None):
        p = np.asarray(p, dtype=float)
        k = np.argmax(p, axis=1)
        rows = np.arange(p.shape[0])
        Hp = np.zeros_like(p)
        Hp[rows, k] = (p[rows, k] > 0).astype(float)
        return np.full(p.shape[0], self.lam), Hp


def godunov_ext(H, a, b, n_samples: int = 513, refine: int = 60):
    """``ext_{p in I[a, b]} H(p)``: min over [a, b] if a <= b, else max over [b, a].

    ``H`` is ``"abs"``, ``"square"`` (closed forms) or a vectorised callable;
    callables are handled by dense sampling followed by golden-section
    refinement around the best sample.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    take_min = a <= b
    if isinstance(H, str):
        if H == "abs":
            f_lo, f_hi = np.abs(lo), np.abs(hi)
        elif H == "square":
            f_lo, f_hi = lo**2, hi**2
        else:
            raise ValueError(f"no closed form for {H!r}")
        straddle = (lo <= 0) & (hi >= 0)
        mn = np.where(straddle, 0.0, np.minimum(f_lo, f_hi))
        return np.where(take_min, mn, np.maximum(f_lo, f_hi))

    shape = a.shape
    lo, hi, take_min = lo.ravel(), hi.ravel(), take_min.ravel()
    sgn = np.where(take_min, 1.0, -1.0)  # minimise sgn * H
    t = np.linspace(0.0, 1.0, n_samples)
    pts = lo[:, None] + t[None, :] * (hi - lo)[:, None]
    vals = sgn[:, None] * np.asarray(H(pts), dtype=float).reshape(pts.shape)
    i = np.argmin(vals, axis=1)
    rows = np.arange(lo.size)
    best = vals[rows, i]
    left = pts[rows, np.maximum(i - 1, 0)]
    right = pts[rows, np.minimum(i + 1, n_samples - 1)]
    ratio = (np.sqrt(5.0) - 1.0) / 2.0
    c = right - ratio * (right - left)
    d = left + ratio * (right - left)
    fc = sgn * H(c)
    fd = sgn * H(d)
    for _ in range(refine):
        go_left = fc < fd
        right = np.where(go_left, d, right)
        left = np.where(go_left, left, c)
        d_new = np.where(go_left, c, left + ratio * (right - left))
        c_new = np.where(go_left, right - ratio * (right - left), d)
        fc, fd = (np.where(go_left, sgn * H(c_new), fd),
                  np.where(go_left, fc, sgn * H(d_new)))
        c, d = c_new, d_new
    refined = np.minimum(np.minimum(fc, fd), best)
    return (sgn * refined).reshape(shape)


class Godunov1D(NumericalHamiltonian):
    """1D Godunov Hamiltonian ``ext_{P in I[D-u, D+u]} H(P) + lam * u``.

    With the slot convention ``D-u = p_0`` and ``D+u = -p_1``.
    """

    name = "godunov_1d"

    def __init__(self, H="abs", f=0.0, lam=0.0):
        self.H = H
        self.f = f
        self.lam = float(lam)

    def evaluate(self, x, u, p, index=None):
        p = np.asarray(p, dtype=float)
        if p.shape[1] != 2:
            raise StencilError("Godunov1D needs a two-point stencil")
        return godunov_ext(self.H, p[:, 0], -p[:, 1]) - _source(self.f, x) + self.lam * np.asarray(u)


def isaacs_wind(x, y, a=0.2, r=0.5, R=np.sqrt(2.0)):
    """Wind speed ``1 - a sin(pi (x^2 + y^2 - r^2) / (R^2 - r^2))``."""
    return 1.0 - a * np.sin(np.pi * (x * x + y * y - r * r) / (R * R - r * r))


class IsaacsHamiltonian(NumericalHamiltonian):
    """Monotone discretisation of the stochastic Zermelo Isaacs operator.

    ``-(sx^2/2) u_xx - (sy^2/2) u_yy - v_c u_x + vs |grad u|_2 - kappa |grad u|_1 - 1``
    (plus ``lambda_extra * u``) on the 4-point stencil with
    ``p = (DV-_x, DV+_x, DV-_y, DV+_y)``, ``DV+-_x = (u - u(x +- h)) / h``.

    ``scheme="upwind"`` uses one-sided differences for all first order terms:
    ``sqrt(sum (DV)_+^2)`` for the 2-norm, ``min(DV-, DV+)`` per axis for
    minus the 1-norm, and the advection upwinded on the sign of ``v_c``.
    ``scheme="hybrid"`` replaces them by centred differences at every node
    where the diffusion is strong enough to keep all slot derivatives
    non-negative, and falls back to the upwind form elsewhere.

    ``dx`` optionally gives per-node edge lengths (M, 4) in interior order; the
    second differences then use ``2 / (dx_- + dx_+)`` in place of ``1 / h``
    (selected through ``index``).
    """

    name = "isaacs"

    def __init__(self, h, sigma_x=0.5, sigma_y=0.2, vs=0.5, kappa=0.1, a=0.2,
                 r=0.5, R=np.sqrt(2.0), lambda_extra=0.0, dx=None, scheme="upwind"):
        if scheme not in ("upwind", "hybrid"):
            raise ValueError(f"unknown Isaacs scheme {scheme!r}")
        self.h = float(h)
        self.dx = None if dx is None else np.asarray(dx, dtype=float)
        self.sigma_x, self.sigma_y = float(sigma_x), float(sigma_y)
        self.vs, self.kappa, self.a = float(vs), float(kappa), float(a)
        self.r, self.R = float(r), float(R)
        self.lam = float(lambda_extra)
        self.scheme = scheme

    def wind(self, x):
        return isaacs_wind(x[:, 0], x[:, 1], self.a, self.r, self.R)

    def _spacing(self, m, index):
        if self.dx is None:
            return np.full((m, 4), self.h)
        return self.dx if index is None else self.dx[index]

    def _geometry(self, x, m, index):
        """Diffusion factors, centred-gradient weights and the hybrid mask."""
        dx = self._spacing(m, index)
        sx, sy = dx[:, 0] + dx[:, 1], dx[:, 2] + dx[:, 3]
        cx, cy = 2.0 / sx, 2.0 / sy
        # dP_x/dp_0, dP_x/dp_1, dP_y/dp_2, dP_y/dp_3
        w = np.column_stack([dx[:, 0] / sx, -dx[:, 1] / sx, dx[:, 2] / sy, -dx[:, 3] / sy])
        vc = self.wind(np.asarray(x))
        if self.scheme == "hybrid":
            wx = np.maximum(w[:, 0], -w[:, 1])
            wy = np.maximum(w[:, 2], -w[:, 3])
            centred = ((0.5 * self.sigma_x**2 * cx >= (np.abs(vc) + self.vs + self.kappa) * wx)
                       & (0.5 * self.sigma_y**2 * cy >= (self.vs + self.kappa) * wy))
        else:
            centred = np.zeros(m, dtype=bool)
        return cx, cy, w, vc, centred

    def evaluate(self, x, u, p, index=None):
        p = np.asarray(p, dtype=float)
        if p.shape[1] != 4:
            raise StencilError("Isaacs Hamiltonian needs the 4-point stencil")
        cx, cy, w, vc, centred = self._geometry(x, p.shape[0], index)
        diff = (0.5 * self.sigma_x**2 * cx * (p[:, 0] + p[:, 1])
                + 0.5 * self.sigma_y**2 * cy * (p[:, 2] + p[:, 3]))
        pos = np.maximum(p, 0.0)
        upwind = (np.maximum(vc, 0.0) * p[:, 1] - np.minimum(vc, 0.0) * p[:, 0]
                  + self.vs * np.sqrt(np.sum(pos * pos, axis=1))
                  + self.kappa * (np.minimum(p[:, 0], p[:, 1]) + np.minimum(p[:, 2], p[:, 3])))
        Px = w[:, 0] * p[:, 0] + w[:, 1] * p[:, 1]
        Py = w[:, 2] * p[:, 2] + w[:, 3] * p[:, 3]
        central = -vc * Px + self.vs * np.hypot(Px, Py) - self.kappa * (np.abs(Px) + np.abs(Py))
        first = np.where(centred, central, upwind)
        return diff + first - 1.0 + self.lam * np.asarray(u)

    def partials(self, x, u, p, index=None):
        p = np.asarray(p, dtype=float)
        m = p.shape[0]
        cx, cy, w, vc, centred = self._geometry(x, m, index)
        rows = np.arange(m)
        # upwind form
        Hu_p = np.zeros_like(p)
        Hu_p[:, 1] += np.maximum(vc, 0.0)
        Hu_p[:, 0] -= np.minimum(vc, 0.0)
        pos = np.maximum(p, 0.0)
        norm2 = np.sqrt(np.sum(pos * pos, axis=1))
        safe = np.where(norm2 > 0, norm2, 1.0)
        Hu_p += self.vs * np.where(norm2[:, None] > 0, pos / safe[:, None], 0.0)
        Hu_p[rows, np.where(p[:, 0] <= p[:, 1], 0, 1)] += self.kappa
        Hu_p[rows, np.where(p[:, 2] <= p[:, 3], 2, 3)] += self.kappa
        # centred form
        Px = w[:, 0] * p[:, 0] + w[:, 1] * p[:, 1]
        Py = w[:, 2] * p[:, 2] + w[:, 3] * p[:, 3]
        nrm = np.hypot(Px, Py)
        sn = np.where(nrm > 0, nrm, 1.0)
        dPx = -vc + self.vs * np.where(nrm > 0, Px / sn, 0.0) - self.kappa * np.sign(Px)
        dPy = self.vs * np.where(nrm > 0, Py / sn, 0.0) - self.kappa * np.sign(Py)
        Hc_p = w * np.column_stack([dPx, dPx, dPy, dPy])
        Hp = np.where(centred[:, None], Hc_p, Hu_p)
        Hp[:, 0:2] += 0.5 * self.sigma_x**2 * cx[:, None]
        Hp[:, 2:4] += 0.5 * self.sigma_y**2 * cy[:, None]
        return np.full(m, self.lam), Hp


class FunctionHamiltonian(NumericalHamiltonian):
    """User Hamiltonian ``fn(x, u, p)``; partials by finite differences by default."""

    def __init__(self, fn, partials=None, lam=0.0, name="function"):
        self.fn = fn
        self._partials = partials
        self.lam = float(lam)
        self.name = name

    def evaluate(self, x, u, p, index=None):
        return np.asarray(self.fn(x, np.asarray(u, dtype=float), np.asarray(p, dtype=float)),
                          dtype=float) * np.ones(np.shape(u))

    def partials(self, x, u, p, index=None):
        if self._partials is None:
            return fd_partials(self, x, u, p, index)
        Hu, Hp = self._partials(x, np.asarray(u, dtype=float), np.asarray(p, dtype=float))
        m = np.shape(u)[0]
        return np.broadcast_to(Hu, (m,)).astype(float), np.broadcast_to(Hp, np.shape(p)).astype(float)


class ImplicitStep(NumericalHamiltonian):
    """Backward-Euler step ``(u - u_prev) / dt + F(x, u, p)``.

    ``u_prev`` is aligned with the interior ordering of the graph.
    """

    name = "implicit_step"

    def __init__(self, F, u_prev, dt):
        self.F = F
        self.u_prev = np.asarray(u_prev, dtype=float)
        self.dt = float(dt)
        self.lam = 1.0 / self.dt + F.lam
        self.alpha = F.alpha

    def _prev(self, index):
        return self.u_prev if index is None else self.u_prev[index]

    def evaluate(self, x, u, p, index=None):
        return (np.asarray(u) - self._prev(index)) / self.dt + self.F.evaluate(x, u, p, index)

    def partials(self, x, u, p, index=None):
        Fu, Fp = self.F.partials(x, u, p, index)
        return Fu + 1.0 / self.dt, Fp


class ObstacleStep(NumericalHamiltonian):
    """``min((u - u_prev) / dt + T(x, p), u - psi)`` for one implicit step.

    ``T`` is a slot Hamiltonian without ``u`` dependence. Ties of the ``min``
    differentiate the first argument.
    """

    name = "obstacle_step"

    def __init__(self, transport, u_prev, psi, dt):
        self.T = transport
        self.u_prev = np.asarray(u_prev, dtype=float)
        self.psi = np.asarray(psi, dtype=float)
        self.dt = float(dt)
        self.lam = min(1.0 / self.dt, 1.0)

    def _data(self, index):
        if index is None:
            return self.u_prev, self.psi
        return self.u_prev[index], self.psi[index]

    def evaluate(self, x, u, p, index=None):
        prev, psi = self._data(index)
        u = np.asarray(u, dtype=float)
        A = (u - prev) / self.dt + self.T.evaluate(x, u, p, index)
        return np.minimum(A, u - psi)

    def partials(self, x, u, p, index=None):
        prev, psi = self._data(index)
        u = np.asarray(u, dtype=float)
        A = (u - prev) / self.dt + self.T.evaluate(x, u, p, index)
        Tu, Tp = self.T.partials(x, u, p, index)
        first = A <= u - psi
        Hu = np.where(first, Tu + 1.0 / self.dt, 1.0)
        Hp = np.where(first[:, None], Tp, 0.0)
        return Hu, Hp


# -- scalar convenience evaluators ----------------------------------------------


def eval_lax_friedrichs_1d(u_j, u_jm, u_jp, h, alpha, lam, f):
    """``|(u_jp - u_jm)/(2h)| - alpha (u_jp + u_jm - 2 u_j)/(2h) + lam u_j - f``."""
    return (abs((u_jp - u_jm) / (2 * h)) - alpha * (u_jp + u_jm - 2 * u_j) / (2 * h)
            + lam * u_j - f)


def eval_lax_friedrichs_graph(x, u_i, neighbor_values, h, alpha=1.0, base=None, lam=0.0):
    """Lax-Friedrichs value at one node from its slot-ordered neighbour values."""
    nv = np.asarray(neighbor_values, dtype=float)
    if nv.size == 0 or nv.size % 2:
        raise StencilError("Lax-Friedrichs needs complete axis pairs")
    p = ((u_i - nv) / h)[None, :]
    x = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
    return float(LaxFriedrichs(base, alpha, lam).evaluate(x, np.array([u_i]), p)[0])


def eval_upwind_eikonal(u_i, neighbor_values, edge_lengths, f):
    """``max_k (u_i - u_k)_+ / dx_k - f``."""
    nv = np.asarray(neighbor_values, dtype=float)
    if nv.size == 0:
        raise StencilError("empty neighbour list")
    return float(np.max(np.maximum(u_i - nv, 0.0) / np.asarray(edge_lengths, dtype=float)) - f)


def eval_godunov_ext_1d(H, p_minus, p_plus):
    """Scalar Godunov ``ext`` of ``H`` over ``I[p_minus, p_plus]``."""
    return float(godunov_ext(H, np.array([p_minus]), np.array([p_plus]))[0])


def eval_isaacs(center, neighbor_values, x, y, h, **params):
    """Isaacs value at ``(x, y)`` from ``(u(x-h), u(x+h), u(y-h), u(y+h))``."""
    nv = np.asarray(neighbor_values, dtype=float)
    if nv.size != 4:
        raise StencilError("Isaacs evaluator needs the four axis neighbours")
    H = IsaacsHamiltonian(h, **params)
    p = ((center - nv) / h)[None, :]
    return float(H.evaluate(np.array([[x, y]]), np.array([center]), p)[0])


# -- hypothesis verifier ---------------------------------------------------------


@dataclass
class HypothesisReport:
    h2_ok: bool
    h3_margin: float
    lipschitz_estimate: float
    worst_h2: float
    n_samples: int


def check_hypotheses(Hs, g, n_samples: int = 1000, eps: float = 1e-6, seed=0,
                     u_range=(-2.0, 2.0), p_range=(-5.0, 5.0), tol: float = 1e-8):
    """Estimate monotonicity in ``p`` and in ``u`` by sampled central differences.

    Samples interior nodes of ``g`` together with uniform ``u`` and ``p``.
    ``h2_ok`` holds when every sampled ``dH/dp_k >= -tol``; ``h3_margin`` is the
    smallest sampled ``dH/du``; ``lipschitz_estimate`` the largest sampled
    gradient norm.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    index = rng.integers(0, g.M, size=n_samples)
    x = g.coords[g.interior[index]]
    u = rng.uniform(*u_range, size=n_samples)
    p = rng.uniform(*p_range, size=(n_samples, g.K))
    Hu, Hp = fd_partials(Hs, x, u, p, index, eps)
    worst = float(Hp.min())
    grad_norm = np.sqrt(Hu**2 + np.sum(Hp**2, axis=1))
    return HypothesisReport(
        h2_ok=worst >= -tol,
        h3_margin=float(Hu.min()),
        lipschitz_estimate=float(grad_norm.max()),
        worst_h2=worst,
        n_samples=n_samples,
    )
