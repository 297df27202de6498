"""
A small dense network with hand-written backpropagation, Adam, and the
collocation losses used to train it on monotone scheme residuals.

Parameters live in one flat float64 vector; per-layer weight and bias arrays
are views into it. Weights have shape (fan_in, fan_out), so a layer is
``a @ W + b``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .grid_graph import stencil_points

__all__ = [
    "MlpParams",
    "AdamState",
    "TrainConfig",
    "TrainResult",
    "DivergenceError",
    "init_params",
    "lipschitz_init",
    "forward",
    "forward_cache",
    "backward",
    "param_gradient",
    "empirical_lipschitz",
    "collocation_loss",
    "Eikonal1DTask",
    "ObstacleTask",
    "sgd_min_res",
    "multilevel_train",
    "save_checkpoint",
    "load_checkpoint",
]

ACTIVATIONS = {"tanh": 0, "identity": 1}
MAGIC = b"HJMLP1"


class DivergenceError(RuntimeError):
    def __init__(self, msg, iteration):
        super().__init__(msg)
        self.iteration = iteration


@dataclass
class MlpParams:
    layer_sizes: tuple
    theta: np.ndarray
    activation: str = "tanh"
    seed: int = 0
    lipschitz_bound: float | None = None

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if self.layer_sizes[-1] != 1:
            raise ValueError("output dimension must be 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.size != n_params(self.layer_sizes):
            raise ValueError("parameter vector does not match layer sizes")

    @property
    def n_params(self) -> int:
        return self.theta.size

    def layers(self, theta=None):
        """[(W, b), ...] as views into ``theta`` (defaults to own parameters)."""
        return _unpack(self.layer_sizes, self.theta if theta is None else theta)

    def copy(self) -> "MlpParams":
        return MlpParams(self.layer_sizes, self.theta.copy(), self.activation, self.seed,
                         self.lipschitz_bound)


def n_params(sizes) -> int:
    return sum((a + 1) * b for a, b in zip(sizes[:-1], sizes[1:]))


def _unpack(sizes, theta):
    out, k = [], 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        W = theta[k:k + a * b].reshape(a, b)
        k += a * b
        out.append((W, theta[k:k + b]))
        k += b
    return out


def init_params(layer_sizes, seed=0, activation="tanh") -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(n_params(layer_sizes))
    p = MlpParams(tuple(layer_sizes), theta, activation, seed)
    for W, _ in p.layers():
        lim = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
        W[...] = rng.uniform(-lim, lim, size=W.shape)
    return p


def lipschitz_init(layer_sizes, L: float, seed=0, activation="tanh") -> MlpParams:
    """Random init rescaled so that prod_l |W_l|_2 equals ``L``.

    tanh has slope at most 1, so ``L`` is a certified Lipschitz bound of the
    network (in the Euclidean norm of the input).
    """
    if not L > 0:
        raise ValueError("Lipschitz target must be positive")
    p = init_params(layer_sizes, seed, activation)
    layers = p.layers()
    norms = [np.linalg.norm(W, 2) for W, _ in layers]
    c = (L / np.prod(norms)) ** (1.0 / len(layers))
    for W, _ in layers:
        W *= c
    p.lipschitz_bound = float(np.prod([np.linalg.norm(W, 2) for W, _ in layers]))
    return p


def _act(z, kind):
    return np.tanh(z) if kind == "tanh" else z


def forward(params: MlpParams, X, theta=None) -> np.ndarray:
    """Network output at the rows of ``X`` (shape (m, d_in)) -> (m,)."""
    return forward_cache(params, X, theta)[0]


def forward_cache(params: MlpParams, X, theta=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != params.layer_sizes[0]:
        raise ValueError(f"input dimension {X.shape[1]} != {params.layer_sizes[0]}")
    layers = params.layers(theta)
    acts = [X]
    a = X
    for i, (W, b) in enumerate(layers):
        z = a @ W + b
        a = z if i == len(layers) - 1 else _act(z, params.activation)
        acts.append(a)
    return a[:, 0], acts


def backward(params: MlpParams, acts, gout, theta=None) -> np.ndarray:
    """Gradient of ``sum_i gout_i * u(x_i)`` with respect to the flat parameters."""
    layers = params.layers(theta)
    grad = np.zeros(params.n_params)
    glayers = _unpack(params.layer_sizes, grad)
    delta = np.asarray(gout, dtype=float)[:, None]
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        gW, gb = glayers[i]
        gW[...] = acts[i].T @ delta
        gb[...] = delta.sum(axis=0)
        if i:
            delta = delta @ W.T
            if params.activation == "tanh":
                delta *= 1.0 - acts[i] ** 2
    return grad


def param_gradient(params: MlpParams, X, dloss_du: Callable, theta=None):
    """Reverse-mode gradient of a loss that depends on the outputs at ``X``.

    ``dloss_du(u)`` returns ``(loss, dloss/du)`` for the outputs ``u``.
    """
    u, acts = forward_cache(params, X, theta)
    L, gu = dloss_du(u)
    return L, backward(params, acts, gu, theta)


def empirical_lipschitz(params: MlpParams, n_pairs: int = 10_000, lo=-1.0, hi=1.0, seed=0) -> float:
    """Largest difference quotient over random input pairs."""
    rng = np.random.default_rng(seed)
    d = params.layer_sizes[0]
    X = rng.uniform(lo, hi, size=(n_pairs, d))
    Y = X + rng.normal(scale=0.1, size=(n_pairs, d))
    num = np.abs(forward(params, X) - forward(params, Y))
    return float(np.max(num / np.linalg.norm(X - Y, axis=1)))


# -- collocation losses ----------------------------------------------------------


def _qpow(r, q):
    if q == 2:
        return r * r, 2 * r
    a = np.abs(r)
    return a**q, q * a ** (q - 1) * np.sign(r)


def collocation_loss(params: MlpParams, theta, X, Xb, gb, H, h: float, q: float = 2.0,
                     mu_b: float = 10.0):
    """Stochastic residual loss on collocation points.

    ``(1/(q N0)) sum |H(x, u, grad_h u)|^q + (mu_b/(q Nb)) sum |u(xb) - gb|^q``
    with the axis stencil of spacing ``h`` around each ``x``.

    Returns ``(loss, grad, R)`` where ``R`` are the interior scheme values.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m, d = X.shape
    K = 2 * d
    nb = stencil_points(X, h).reshape(-1, d)
    Xb = np.asarray(Xb, dtype=float).reshape(-1, d)
    allX = np.vstack([X, nb, Xb])
    u, acts = forward_cache(params, allX, theta)
    u0, un, ub = u[:m], u[m:m + m * K].reshape(m, K), u[m + m * K:]
    p = (u0[:, None] - un) / h
    R = H.evaluate(X, u0, p)
    Hu, Hp = H.partials(X, u0, p)
    vi, di = _qpow(R, q)
    rb = ub - np.asarray(gb, dtype=float)
    vb, db = _qpow(rb, q)
    nB = max(len(rb), 1)
    L = vi.sum() / (q * m) + mu_b * vb.sum() / (q * nB)
    ci = di / (q * m)
    g_u0 = ci * (Hu + Hp.sum(axis=1) / h)
    g_un = -(ci[:, None] * Hp) / h
    gout = np.concatenate([g_u0, g_un.ravel(), mu_b * db / (q * nB)])
    return float(L), backward(params, acts, gout, theta), R


@dataclass
class Eikonal1DTask:
    """``|u'| + lam u = 1`` on (0, 1), ``u(0) = u(1) = 0``, Lax-Friedrichs residual."""

    h: float
    lam: float
    alpha: float = 1.0
    n_colloc: int = 20
    mu_b: float = 10.0
    q: float = 2.0

    def __post_init__(self):
        from .hamiltonians import LaxFriedrichs, NormBase

        self.H = LaxFriedrichs(NormBase(1.0), alpha=self.alpha, lam=self.lam)
        self.Xb = np.array([[0.0], [1.0]])
        self.gb = np.zeros(2)

    def sample(self, rng):
        return rng.random((self.n_colloc, 1))

    def loss(self, params, theta, batch):
        L, grad, _ = collocation_loss(params, theta, batch, self.Xb, self.gb, self.H, self.h,
                                      self.q, self.mu_b)
        return L, grad


@dataclass
class ObstacleTask:
    """Implicit-in-time obstacle residual on (t, x) collocation points.

    ``R = min((u(t,x) - u(t',x)) / (t - t') + T(grad_h u(t,x)), u(t,x) - Psi(x))``
    with ``t' = max(t - dt, 0)``; ``T`` is the Lax-Friedrichs transport
    ``(sum_i a_i D0_i u)_+ - sum_i (u_+ + u_- - 2u)/(2h)`` or the one-sided
    second order ``(sum_i a_i (3u - 4u(x - h e_i) + u(x - 2h e_i))/(2h))_+``.
    Loss: ``mean R^2 / 2 + w0 * mean (u(0,x) - g(x))^2 / 2``.
    """

    d: int = 2
    h: float = 0.3
    dt: float = 0.15
    scheme: str = "laxfriedrichs"
    T: float = 2.0
    box: float = 2.5
    n_colloc: int = 1000
    n_init: int = 400
    w0: float = 10.0
    a0: np.ndarray = None
    init_focus: float = 0.0
    focus_radius: float = 0.6

    def __post_init__(self):
        a0 = np.ones(self.d) if self.a0 is None else np.asarray(self.a0, dtype=float)
        self.a0 = a0
        self.a = a0 / np.linalg.norm(a0)
        if not 0.0 <= self.init_focus <= 1.0:
            raise ValueError("init_focus must lie in [0, 1]")
        if self.scheme not in ("laxfriedrichs", "one_sided_2nd"):
            raise ValueError(f"unknown obstacle scheme {self.scheme!r}")

    def psi(self, X):
        return np.linalg.norm(X, axis=1) - 0.5

    def g0(self, X):
        return np.maximum(np.linalg.norm(X + self.a0, axis=1) - 1.0, self.psi(X))

    def sample(self, rng):
        t = self.T * rng.random(self.n_colloc)
        X = rng.uniform(-self.box, self.box, size=(self.n_colloc, self.d))
        X0 = rng.uniform(-self.box, self.box, size=(self.n_init, self.d))
        # g < 0 only inside the obstacle's zero ball; put a share of the
        # initial points there so the thin initial region is seen at all
        k = int(self.init_focus * self.n_init)
        if k:
            v = rng.standard_normal((k, self.d))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            X0[:k] = v * self.focus_radius * rng.random((k, 1)) ** (1.0 / self.d)
        return t, X, X0

    def _offsets(self):
        d, h = self.d, self.h
        E = np.eye(d)
        if self.scheme == "laxfriedrichs":
            return np.concatenate([-h * E, h * E])  # minus block, plus block
        sgn = np.where(self.a >= 0, 1.0, -1.0)[:, None]
        return np.concatenate([-h * sgn * E, -2 * h * sgn * E])  # one and two cells upwind

    def residual_parts(self, params, theta, batch):
        """Forward pass with everything needed for the loss and its gradient."""
        t, X, X0 = batch
        m, d = X.shape
        tp = np.maximum(t - self.dt, 0.0)
        tau = t - tp
        off = self._offsets()
        pts_x = (X[:, None, :] + off[None, :, :]).reshape(-1, d)
        tx = np.column_stack([t, X])
        tpx = np.column_stack([tp, X])
        nbx = np.column_stack([np.repeat(t, 2 * d), pts_x])
        init = np.column_stack([np.zeros(len(X0)), X0])
        allX = np.vstack([tx, tpx, nbx, init])
        u, acts = forward_cache(params, allX, theta)
        u0 = u[:m]
        up = u[m:2 * m]
        un = u[2 * m:2 * m + 2 * d * m].reshape(m, 2 * d)
        ui = u[2 * m + 2 * d * m:]
        return t, X, X0, tau, u0, up, un, ui, acts

    def transport(self, u0, un):
        """Value and partials of the transport term; un is (m, 2d)."""
        d, h, a = self.d, self.h, self.a
        A, B = un[:, :d], un[:, d:]
        if self.scheme == "laxfriedrichs":
            s = ((B - A) / (2 * h)) @ a
            on = (s > 0).astype(float)
            visc = ((A + B - 2 * u0[:, None]) / (2 * h)).sum(axis=1)
            val = np.maximum(s, 0.0) - visc
            dA = -on[:, None] * a / (2 * h) - 1.0 / (2 * h)
            dB = on[:, None] * a / (2 * h) - 1.0 / (2 * h)
            du = np.full(len(u0), d / h)
            return val, du, np.hstack([dA, dB])
        absa = np.abs(a)
        s = ((3 * u0[:, None] - 4 * A + B) / (2 * h)) @ absa
        on = (s > 0).astype(float)
        val = np.maximum(s, 0.0)
        du = on * 3 * absa.sum() / (2 * h)
        dA = -on[:, None] * 4 * absa / (2 * h)
        dB = on[:, None] * absa / (2 * h)
        return val, du, np.hstack([dA, dB])

    def residual(self, params, theta, batch):
        t, X, X0, tau, u0, up, un, ui, _ = self.residual_parts(params, theta, batch)
        Tv, _, _ = self.transport(u0, un)
        return np.minimum((u0 - up) / tau + Tv, u0 - self.psi(X))

    def loss(self, params, theta, batch):
        t, X, X0, tau, u0, up, un, ui, acts = self.residual_parts(params, theta, batch)
        m = len(t)
        Tv, Tu, Tn = self.transport(u0, un)
        A = (u0 - up) / tau + Tv
        Bv = u0 - self.psi(X)
        first = A <= Bv
        R = np.where(first, A, Bv)
        ri = ui - self.g0(X0)
        L = 0.5 * np.mean(R * R) + 0.5 * self.w0 * np.mean(ri * ri)
        c = R / m
        g0_ = np.where(first, c * (1.0 / tau + Tu), c)
        gp = np.where(first, -c / tau, 0.0)
        gn = np.where(first[:, None], c[:, None] * Tn, 0.0)
        gi = self.w0 * ri / len(ri)
        gout = np.concatenate([g0_, gp, gn.ravel(), gi])
        return float(L), backward(params, acts, gout, theta)


# -- optimisation ----------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n, lr=1e-3, **kw):
        return cls(np.zeros(n), np.zeros(n), 0, lr, **kw)

    def step(self, theta, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mh = self.m / (1 - self.beta1**self.t)
        vh = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * mh / (np.sqrt(vh) + self.eps)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    max_iters: int = 10_000
    optimizer: str = "adam"
    stop_tol: float | None = 1e-3
    window: int = 50
    record_every: int = 100
    lr_decay: float = 1.0  # learning rate factor reached (geometrically) at max_iters


@dataclass
class TrainResult:
    params: MlpParams
    losses: np.ndarray
    iters: int
    converged: bool
    log: list = field(default_factory=list)  # (iter, loss, res_inf_probe)


def sgd_min_res(params: MlpParams, task, cfg: TrainConfig | None = None, rng=None,
                probe: Callable | None = None) -> TrainResult:
    """Stochastic residual minimisation.

    Each iteration draws a fresh batch from ``task.sample(rng)`` and steps on
    ``task.loss``. Stops when the mean loss over the last ``window``
    iterations drops below ``stop_tol`` or after ``max_iters`` iterations.
    ``probe(params)`` (optional) gives the ``res_inf_probe`` log column.
    """
    cfg = TrainConfig() if cfg is None else cfg
    rng = np.random.default_rng(params.seed) if rng is None else rng
    p = params.copy()
    theta = p.theta
    adam = AdamState.zeros(theta.size, lr=cfg.lr) if cfg.optimizer == "adam" else None
    losses = np.empty(cfg.max_iters)
    log = []
    converged = False
    k = 0
    while k < cfg.max_iters:
        L, grad = task.loss(p, theta, task.sample(rng))
        if not np.isfinite(L):
            raise DivergenceError(f"non-finite loss at iteration {k}", k)
        losses[k] = L
        if k % cfg.record_every == 0:
            log.append((k, L, probe(p) if probe is not None else float("nan")))
        lr = cfg.lr * cfg.lr_decay ** (k / cfg.max_iters)
        if adam is not None:
            adam.lr = lr
            theta = adam.step(theta, grad)
        else:
            theta = theta - lr * grad
        p.theta = theta
        k += 1
        if cfg.stop_tol is not None and k >= cfg.window and losses[k - cfg.window:k].mean() < cfg.stop_tol:
            converged = True
            break
    return TrainResult(p, losses[:k].copy(), k, converged, log)


def multilevel_train(params: MlpParams, tasks, cfgs, rng=None, probe=None):
    """Chain :func:`sgd_min_res` over a schedule of tasks, carrying parameters.

    ``cfgs`` is one :class:`TrainConfig` or one per task. Returns the list of
    per-stage results.
    """
    if isinstance(cfgs, TrainConfig):
        cfgs = [cfgs] * len(tasks)
    rng = np.random.default_rng(params.seed) if rng is None else rng
    out = []
    p = params
    for task, cfg in zip(tasks, cfgs):
        res = sgd_min_res(p, task, cfg, rng, probe)
        out.append(res)
        p = res.params
    return out


# -- checkpoints -----------------------------------------------------------------


def save_checkpoint(path, params: MlpParams) -> None:
    """Header ``HJMLP1``, uint32 layer count and sizes, activation id, int64 seed,
    then the float64 parameter vector (little endian)."""
    sizes = params.layer_sizes
    head = MAGIC + struct.pack(f"<I{len(sizes)}IBq", len(sizes), *sizes,
                               ACTIVATIONS[params.activation], int(params.seed))
    Path(path).write_bytes(head + params.theta.astype("<f8").tobytes())


def load_checkpoint(path) -> MlpParams:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError("not a network checkpoint")
    k = len(MAGIC)
    (n,) = struct.unpack_from("<I", raw, k)
    k += 4
    sizes = struct.unpack_from(f"<{n}I", raw, k)
    k += 4 * n
    act_id, seed = struct.unpack_from("<Bq", raw, k)
    k += struct.calcsize("<Bq")
    act = {v: name for name, v in ACTIVATIONS.items()}[act_id]
    theta = np.frombuffer(raw, dtype="<f8", offset=k).astype(np.float64)
    return MlpParams(tuple(sizes), theta, act, seed)
