"""
Sparse Jacobian of the steady residual and conditioning diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid_graph import GridError
from .residual import LossParams, SteadyProblem

__all__ = [
    "IterationLimitError",
    "assemble_jacobian",
    "jacobian_from_problem",
    "mu_bound",
    "gershgorin_margin",
    "row_margins",
    "extreme_eigenpair",
    "smallest_eigenpairs",
    "ConditionReport",
    "condition_report",
]

DENSE_LIMIT = 5000


class IterationLimitError(RuntimeError):
    """Eigen-iteration did not converge; ``best`` holds the last estimate."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


def jacobian_from_problem(prob: SteadyProblem, u) -> sp.csr_matrix:
    diag, off = prob.jacobian_entries(u)
    g = prob.g
    M, K = off.shape
    rows = np.concatenate([np.arange(g.n_nodes), np.repeat(g.interior, K)])
    cols = np.concatenate([np.arange(g.n_nodes), g.neighbors[g.interior].ravel()])
    vals = np.concatenate([diag, off.ravel()])
    # duplicates cannot occur (no self loops), but sum_duplicates keeps csr canonical
    J = sp.csr_matrix((vals, (rows, cols)), shape=(g.n_nodes, g.n_nodes))
    J.sum_duplicates()
    return J


def assemble_jacobian(u, g, Hs, lp: LossParams | None = None, bvals=0.0) -> sp.csr_matrix:
    """``DR(u)`` as a CSR matrix in graph node ordering.

    Boundary data only shifts the residual, so ``bvals`` does not affect the
    matrix; it is accepted for signature symmetry with the residual helpers.
    """
    return jacobian_from_problem(SteadyProblem(g, Hs, bvals, lp), u)


def mu_bound(lam: float, M: int, N: int, mu_b: float, q: float) -> float:
    """``min(lam / M^(1/q), (mu_b / N)^(1/q))``."""
    if min(lam, M, N, mu_b) <= 0 or q <= 1:
        raise ValueError("mu_bound needs positive arguments and q > 1")
    return min(lam / M ** (1.0 / q), (mu_b / N) ** (1.0 / q))


def row_margins(J) -> np.ndarray:
    """``|a_jj| - sum_{k != j} |a_jk|`` for every row."""
    J = sp.csr_matrix(J)
    d = np.abs(J.diagonal())
    total = np.asarray(abs(J).sum(axis=1)).ravel()
    return d - (total - d)


def gershgorin_margin(J) -> float:
    return float(row_margins(J).min())


def _normalise(v):
    v = np.real(v).astype(float)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        return v
    v = v / nrm
    nz = np.flatnonzero(np.abs(v) > 1e-14)
    if nz.size and v[nz[0]] < 0:
        v = -v
    return v


def _dense_eig(J):
    A = J.toarray() if sp.issparse(J) else np.asarray(J, dtype=float)
    return np.linalg.eig(A)


def smallest_eigenpairs(J, cluster_tol: float = 1e-6):
    """All eigenpairs whose modulus is within ``cluster_tol`` of the smallest.

    Dense only; returns (values, vectors) with vectors as columns.
    """
    w, V = _dense_eig(J)
    mod = np.abs(w)
    sel = np.flatnonzero(mod <= mod.min() + cluster_tol)
    sel = sel[np.argsort(mod[sel])]
    return w[sel], np.column_stack([_normalise(V[:, i]) for i in sel])


def _inverse_iteration(J, tol, max_iter, rng):
    lu = spla.splu(sp.csc_matrix(J))
    v = rng.standard_normal(J.shape[0])
    v /= np.linalg.norm(v)
    lam = np.inf
    for _ in range(max_iter):
        w = lu.solve(v)
        nrm = np.linalg.norm(w)
        w /= nrm
        lam_new = float(w @ (J @ w))
        scale = max(1.0, abs(lam_new))
        settled = abs(lam_new - lam) <= tol * scale
        if settled and np.linalg.norm(J @ w - lam_new * w) < 1e-6 * scale:
            return lam_new, w
        v, lam = w, lam_new
    raise IterationLimitError("inverse iteration did not converge", best=(lam, v))


def _power_iteration(J, tol, max_iter, rng):
    v = rng.standard_normal(J.shape[0])
    v /= np.linalg.norm(v)
    lam = np.inf
    for _ in range(max_iter):
        w = J @ v
        w /= np.linalg.norm(w)
        lam_new = float(w @ (J @ w))
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new, w
        v, lam = w, lam_new
    raise IterationLimitError("power iteration did not converge", best=(lam, v))


def extreme_eigenpair(J, which: str = "smallest", tol: float = 1e-10, max_iter: int = 10_000, seed=0):
    """Eigenvalue of smallest or largest modulus and a unit real eigenvector.

    Dense eigendecomposition up to ``DENSE_LIMIT`` rows; above that inverse
    (or plain) power iteration, which assumes a real dominant eigenvalue.
    The vector has unit 2-norm and its first nonzero entry positive.
    """
    if which not in ("smallest", "largest"):
        raise ValueError(f"which must be 'smallest' or 'largest', got {which!r}")
    n = J.shape[0]
    if n <= DENSE_LIMIT:
        w, V = _dense_eig(J)
        i = int(np.argmin(np.abs(w)) if which == "smallest" else np.argmax(np.abs(w)))
        return w[i], _normalise(V[:, i])
    rng = np.random.default_rng(seed)
    if which == "smallest":
        val, vec = _inverse_iteration(sp.csr_matrix(J), tol, max_iter, rng)
    else:
        val, vec = _power_iteration(sp.csr_matrix(J), tol, max_iter, rng)
    return val, _normalise(vec)


@dataclass
class ConditionReport:
    mu: float
    margin: float
    eig_min: float
    eig_max: float
    kappa: float


def condition_report(u, g, Hs, lp: LossParams | None = None, bvals=0.0) -> ConditionReport:
    """Dominance bound, Gershgorin margin and extreme eigenvalue moduli at ``u``."""
    if g.M == 0:
        raise GridError("condition report needs interior nodes")
    lp = LossParams() if lp is None else lp
    J = assemble_jacobian(u, g, Hs, lp, bvals)
    lo, _ = extreme_eigenpair(J, "smallest")
    hi, _ = extreme_eigenpair(J, "largest")
    lo, hi = abs(lo), abs(hi)
    return ConditionReport(
        mu=mu_bound(Hs.lam, g.M, g.N, lp.mu_b, lp.q),
        margin=gershgorin_margin(J),
        eig_min=float(lo),
        eig_max=float(hi),
        kappa=float(hi / lo),
    )
