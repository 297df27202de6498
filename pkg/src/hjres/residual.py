"""
Scaled residual, q-norm loss and its gradient for steady schemes.

Interior rows are ``H(x_j, u_j, grad_G u_j) / M^(1/q)``, boundary rows
``(mu_b / N)^(1/q) (u_j - g_j)``. The loss is ``(1/q) sum |R_j|^q`` and its
gradient is ``J^T w`` with ``w_j = |R_j|^(q-1) sign(R_j)``, assembled from
per-row Jacobian entries without forming the matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_graph import GridError, GridGraph, graph_differences

__all__ = [
    "LossParams",
    "ResidualVector",
    "SteadyProblem",
    "residual_steady",
    "loss",
    "loss_gradient",
    "q_weights",
]


@dataclass(frozen=True)
class LossParams:
    q: float = 2.0
    mu_b: float = 10.0
    mu_i: float = 1.0

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError(f"q must exceed 1, got {self.q}")
        if not (self.mu_b > 0 and self.mu_i > 0):
            raise ValueError("mu_b and mu_i must be positive")


@dataclass
class ResidualVector:
    values: np.ndarray
    M: int
    N: int


def q_weights(R: np.ndarray, q: float) -> np.ndarray:
    """``|R|^(q-1) sign(R)``, the gradient of ``|R|^q / q``."""
    if q == 2:
        return R.copy()
    return np.abs(R) ** (q - 1) * np.sign(R)


def _qsum(R, q):
    if q == 2:
        return 0.5 * float(np.sum(R * R))
    return float(np.sum(np.abs(R) ** q)) / q


class SteadyProblem:
    """A steady scheme ``H = 0`` on the interior, ``u = g`` on the boundary.

    Args:
        g: the graph.
        H: a numerical Hamiltonian (see :mod:`hjres.hamiltonians`).
        bvals: boundary data; scalar, array aligned with ``g.boundary``, or a
            callable on boundary coordinates.
        lp: loss parameters.
    """

    def __init__(self, g: GridGraph, H, bvals=0.0, lp: LossParams | None = None):
        if g.M == 0:
            raise GridError("problem needs at least one interior node")
        self.g = g
        self.H = H
        self.lp = LossParams() if lp is None else lp
        xb = g.coords[g.boundary]
        if callable(bvals):
            b = np.asarray(bvals(xb), dtype=float)
        else:
            b = np.asarray(bvals, dtype=float)
            if b.ndim == 0:
                b = np.full(g.N, float(b))
        if b.shape != (g.N,):
            raise GridError(f"boundary data has shape {b.shape}, expected ({g.N},)")
        self.bvals = b
        q = self.lp.q
        self.s_int = g.M ** (-1.0 / q)
        self.s_bdy = (self.lp.mu_b / g.N) ** (1.0 / q) if g.N else 0.0
        self._xI = g.coords[g.interior]
        self._idx = np.arange(g.M)
        self._nbI = g.neighbors[g.interior]
        self._dxI = g.edge_len[g.interior]

    @property
    def n(self) -> int:
        return self.g.n_nodes

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n,):
            raise GridError(f"u has shape {u.shape}, expected ({self.n},)")
        return u

    def differences(self, u):
        return (u[self.g.interior, None] - u[self._nbI]) / self._dxI

    def hamiltonian(self, u) -> np.ndarray:
        """Unscaled ``H`` on interior nodes."""
        u = self._check(u)
        return self.H.evaluate(self._xI, u[self.g.interior], self.differences(u), self._idx)

    def residual(self, u) -> np.ndarray:
        u = self._check(u)
        R = np.empty(self.n)
        R[self.g.interior] = self.s_int * self.hamiltonian(u)
        R[self.g.boundary] = self.s_bdy * (u[self.g.boundary] - self.bvals)
        return R

    def loss(self, u) -> float:
        return _qsum(self.residual(u), self.lp.q)

    def jacobian_entries(self, u):
        """Row data of the Jacobian.

        Returns ``(diag, off)``: ``diag`` (n,) diagonal entries and ``off``
        (M, K) off-diagonal entries of the interior rows, column
        ``neighbors[interior]``.
        """
        u = self._check(u)
        Hu, Hp = self.H.partials(self._xI, u[self.g.interior], self.differences(u), self._idx)
        scaled = Hp / self._dxI
        diag = np.empty(self.n)
        diag[self.g.interior] = self.s_int * (Hu + scaled.sum(axis=1))
        diag[self.g.boundary] = self.s_bdy
        return diag, -self.s_int * scaled

    def transpose_apply(self, diag, off, w) -> np.ndarray:
        """``J^T w`` from row data."""
        out = diag * w
        contrib = off * w[self.g.interior, None]
        out += np.bincount(self._nbI.ravel(), weights=contrib.ravel(), minlength=self.n)
        return out

    def apply(self, diag, off, v) -> np.ndarray:
        """``J v`` from row data."""
        out = diag * v
        out[self.g.interior] += np.sum(off * v[self._nbI], axis=1)
        return out

    def loss_and_gradient(self, u):
        """Returns ``(loss, gradient, R)`` with a single Hamiltonian pass."""
        u = self._check(u)
        R = self.residual(u)
        diag, off = self.jacobian_entries(u)
        w = q_weights(R, self.lp.q)
        return _qsum(R, self.lp.q), self.transpose_apply(diag, off, w), R

    def gradient(self, u) -> np.ndarray:
        return self.loss_and_gradient(u)[1]


def residual_steady(u, g, Hs, bvals, lp: LossParams | None = None) -> ResidualVector:
    """Scaled residual of the steady scheme at ``u``."""
    prob = SteadyProblem(g, Hs, bvals, lp)
    return ResidualVector(prob.residual(u), g.M, g.N)


def loss(u, g, Hs, bvals, lp: LossParams | None = None) -> float:
    """``(1/q) sum |R_j(u)|^q``."""
    return SteadyProblem(g, Hs, bvals, lp).loss(u)


def loss_gradient(u, g, Hs, bvals, lp: LossParams | None = None) -> np.ndarray:
    """Exact gradient ``J(u)^T w`` of :func:`loss`."""
    return SteadyProblem(g, Hs, bvals, lp).gradient(u)
