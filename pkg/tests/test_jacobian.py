import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from hjres.grid_graph import GridError, build_box_grid, build_interval_grid
from hjres.hamiltonians import LaxFriedrichs, NormBase, UpwindEikonal
from hjres.jacobian import (
    assemble_jacobian,
    condition_report,
    extreme_eigenpair,
    gershgorin_margin,
    mu_bound,
    row_margins,
    smallest_eigenpairs,
)
from hjres.residual import LossParams, SteadyProblem

LF = LaxFriedrichs(NormBase(1.0), alpha=1.0, lam=1.0)


def fd_jacobian(prob, u, eps=1e-7):
    cols = []
    for i in range(u.size):
        e = np.zeros_like(u)
        e[i] = eps
        cols.append((prob.residual(u + e) - prob.residual(u - e)) / (2 * eps))
    return np.column_stack(cols)


@pytest.mark.parametrize("g", [build_interval_grid(9), build_box_grid([0, 0], [1, 1], 0.25)])
def test_jacobian_matches_fd(g):
    prob = SteadyProblem(g, LF, 0.0)
    u = np.random.default_rng(0).uniform(-1, 1, g.n_nodes)
    J = assemble_jacobian(u, g, LF)
    assert sp.issparse(J)
    np.testing.assert_allclose(J.toarray(), fd_jacobian(prob, u), atol=1e-7)


def test_mu_bound_formula():
    assert mu_bound(1.0, 159, 2, 10.0, 2) == pytest.approx(1 / np.sqrt(159))
    assert mu_bound(1.0, 1, 20, 1.0, 2) == pytest.approx(np.sqrt(1 / 20))
    assert mu_bound(2.0, 8, 2, 10.0, 3) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mu_bound(0.0, 10, 2, 10.0, 2)


def test_row_margins_hand():
    J = np.array([[3.0, -1.0, 0.5], [0.0, 1.0, 0.0], [-2.0, -2.0, 5.0]])
    np.testing.assert_allclose(row_margins(J), [1.5, 1.0, 1.0])
    assert gershgorin_margin(J) == 1.0


@given(n=st.sampled_from([5, 10, 20, 40]), seed=st.integers(0, 10_000))
def test_margin_dominates_mu(n, seed):
    g = build_interval_grid(n)
    u = np.random.default_rng(seed).uniform(-2, 2, g.n_nodes)
    J = assemble_jacobian(u, g, LF)
    mu = mu_bound(1.0, g.M, g.N, 10.0, 2.0)
    m = gershgorin_margin(J)
    assert m >= mu - 1e-10
    assert np.min(np.abs(np.linalg.eigvals(J.toarray()))) >= m - 1e-10


def test_extreme_eigenpair_dense_and_iterative():
    g = build_interval_grid(40)
    J = assemble_jacobian(np.zeros(41), g, LF)
    w = np.abs(np.linalg.eigvals(J.toarray()))
    val, vec = extreme_eigenpair(J, "smallest")
    assert abs(val) == pytest.approx(w.min())
    assert np.linalg.norm(J @ vec - val * vec) < 1e-8
    assert np.linalg.norm(vec) == pytest.approx(1.0)
    assert vec[np.flatnonzero(np.abs(vec) > 1e-14)[0]] > 0
    big, _ = extreme_eigenpair(J, "largest")
    assert abs(big) == pytest.approx(w.max())
    with pytest.raises(ValueError):
        extreme_eigenpair(J, "middle")


def test_iterative_branch(monkeypatch):
    import hjres.jacobian as jac

    monkeypatch.setattr(jac, "DENSE_LIMIT", 10)
    g = build_interval_grid(30)
    J = assemble_jacobian(np.zeros(31), g, LF)
    w = np.abs(np.linalg.eigvals(J.toarray()))
    lo, v = jac.extreme_eigenpair(J, "smallest")
    assert abs(lo) == pytest.approx(w.min(), rel=1e-6)
    hi, _ = jac.extreme_eigenpair(J, "largest", max_iter=100_000)
    assert abs(hi) == pytest.approx(w.max(), rel=1e-6)


def test_smallest_eigenpairs_cluster():
    J = np.diag([0.5, 0.5, 2.0, 3.0])
    vals, vecs = smallest_eigenpairs(J)
    np.testing.assert_allclose(np.abs(vals), [0.5, 0.5])
    assert vecs.shape == (4, 2)


def test_condition_report_zero_state():
    g = build_interval_grid(20)
    rep = condition_report(np.zeros(21), g, LF, LossParams())
    assert rep.mu == pytest.approx(1 / np.sqrt(19))
    assert rep.margin >= rep.mu - 1e-12
    assert rep.eig_min >= rep.margin - 1e-12
    assert rep.kappa == pytest.approx(rep.eig_max / rep.eig_min)
    assert isinstance(rep.kappa, float)


def test_kappa_roughly_doubles():
    kap = []
    for n in (20, 40, 80, 160):
        g = build_interval_grid(n)
        kap.append(condition_report(np.zeros(n + 1), g, LF).kappa)
    ratios = np.array(kap[1:]) / np.array(kap[:-1])
    assert np.all((ratios >= 1.5) & (ratios <= 2.5))


def test_condition_report_upwind_no_margin():
    # lam = 0: the dominance bound is not available
    g = build_interval_grid(10)
    with pytest.raises(ValueError):
        condition_report(np.zeros(11), g, UpwindEikonal(1.0, 0.0))
