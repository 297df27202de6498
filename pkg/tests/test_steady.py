import numpy as np
import pytest

from hjres.grid_graph import build_box_grid, build_interval_grid
from hjres.hamiltonians import LaxFriedrichs, NormBase, UpwindEikonal
from hjres.residual import SteadyProblem
from hjres.steady import (
    ConvergenceError,
    DivergenceError,
    ScheduleStage,
    SolveConfig,
    aposteriori_report,
    gradient_descent,
    multilevel_solve,
    newton_solve,
    prolong_constant,
    stability_bound,
)

LF = LaxFriedrichs(NormBase(1.0), alpha=1.0, lam=1.0)


def eik(n, H=LF):
    return SteadyProblem(build_interval_grid(n), H, 0.0)


def test_gradient_descent_converges_small_grid():
    prob = eik(10)
    res = gradient_descent(np.zeros(11), prob, SolveConfig(step=0.02, max_iters=50_000, record_every=10))
    assert res.converged
    assert np.max(np.abs(prob.residual(res.u))) < 1e-3
    assert res.history[-1, 0] == res.iters
    assert np.all(np.diff(res.loss_history) <= 1e-15)
    assert res.resinf_history[-1] < 1e-3


def test_gradient_descent_budget():
    prob = eik(10)
    res = gradient_descent(np.zeros(11), prob, SolveConfig(step=1e-3, max_iters=50))
    assert not res.converged and res.iters == 50


def test_gradient_descent_divergence():
    prob = eik(10)
    with np.errstate(all="ignore"), pytest.raises(DivergenceError) as exc:
        gradient_descent(np.zeros(11), prob, SolveConfig(step=1e6, max_iters=10_000))
    assert np.all(np.isfinite(exc.value.u))


@pytest.mark.parametrize("kw", [dict(step=0.0), dict(tol_inf=-1.0), dict(max_iters=0)])
def test_solve_config_validation(kw):
    with pytest.raises(ValueError):
        SolveConfig(**kw)


def test_newton_converges_and_is_unique():
    prob = eik(40)
    rng = np.random.default_rng(0)
    sols = [newton_solve(rng.uniform(-2, 2, 41), prob) for _ in range(5)]
    for u in sols:
        assert np.max(np.abs(prob.residual(u))) <= 1e-12
        np.testing.assert_allclose(u, sols[0], atol=1e-10)


def test_newton_2d():
    g = build_box_grid([0, 0], [1, 1], 0.1)
    prob = SteadyProblem(g, LF, 0.0)
    u = newton_solve(np.zeros(g.n_nodes), prob)
    assert np.max(np.abs(prob.residual(u))) <= 1e-12


def test_newton_failure_raises():
    prob = eik(10)
    with pytest.raises(ConvergenceError) as exc:
        newton_solve(np.full(11, 5.0), prob, max_iters=1)
    assert exc.value.res_inf > 0


def test_prolong_constant_left_neighbour():
    gc, gf = build_interval_grid(4), build_interval_grid(8)
    uc = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(prolong_constant(uc, gc, gf), [0, 0, 1, 1, 2, 2, 3, 3, 4])


def test_prolong_constant_2d():
    gc = build_box_grid([0, 0], [1, 1], 0.5)
    gf = build_box_grid([0, 0], [1, 1], 0.25)
    uc = np.arange(gc.n_nodes, dtype=float)
    uf = prolong_constant(uc, gc, gf)
    # fine node (0.75, 0.25) sits right of coarse node (0.5, 0)
    j = np.flatnonzero(np.all(np.isclose(gf.coords, [0.75, 0.25]), axis=1))[0]
    k = np.flatnonzero(np.all(np.isclose(gc.coords, [0.5, 0.0]), axis=1))[0]
    assert uf[j] == uc[k]


def test_multilevel_schedule():
    stages = [ScheduleStage(1 / 10, 1.0, 1.0), ScheduleStage(1 / 20, 1.0, 1.0)]
    res = multilevel_solve(stages, lambda st: eik(round(1 / st.h)),
                           SolveConfig(step=0.02, max_iters=50_000))
    assert res.converged
    assert res.total_iters == sum(s.iters for s in res.stages)
    assert res.u.shape == (21,)


def test_multilevel_rejects_non_monotone():
    stages = [ScheduleStage(1 / 20, 1.0, 1.0), ScheduleStage(1 / 10, 1.0, 1.0)]
    with pytest.raises(ValueError):
        multilevel_solve(stages, lambda st: eik(round(1 / st.h)))
    with pytest.raises(ValueError):
        multilevel_solve([], lambda st: None)


def test_stability_bound():
    assert stability_bound(0.3, 0.05, 2.0) == pytest.approx(0.15)
    assert stability_bound(0.1, 0.2, 1.0) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        stability_bound(0.1, 0.0, 0.0)


def test_stability_bound_holds_on_iterates():
    prob = eik(20)
    ustar = newton_solve(np.zeros(21), prob)
    res = gradient_descent(np.zeros(21), prob, SolveConfig(step=1e-2, max_iters=500))
    Rinf = np.max(np.abs(prob.hamiltonian(res.u)))
    bdiff = np.max(np.abs(res.u[prob.g.boundary]))
    assert np.max(np.abs(res.u - ustar)) <= stability_bound(Rinf, bdiff, 1.0) + 1e-10


def test_aposteriori_zero_candidate():
    prob = eik(20)
    rep = aposteriori_report(lambda X: np.zeros(len(X)), prob, n_mc=200)
    # H(0) = -1 everywhere, boundary data matched
    assert rep.sup_residual == pytest.approx(1.0)
    assert rep.sup_boundary == 0.0
    assert rep.bound == pytest.approx(1.0)


def test_aposteriori_bounds_error_of_smooth_candidate():
    prob = eik(40, UpwindEikonal(1.0, 1.0))
    ustar = newton_solve(np.zeros(41), prob)
    cand = lambda X: 1.0 - np.exp(-np.minimum(X[:, 0], 1 - X[:, 0]))
    rep = aposteriori_report(cand, prob, n_mc=4000)
    err = np.max(np.abs(cand(prob.g.coords) - ustar))
    assert err <= rep.bound + 1e-12
