import numpy as np
import pytest

from hjres.grid_graph import GridError, build_box_grid, build_interval_grid
from hjres.hamiltonians import FunctionHamiltonian, LaxFriedrichs, NormBase
from hjres.residual import LossParams, q_weights
from hjres.time_dependent import (
    SpaceTimeField,
    SpaceTimeProblem,
    check_f3,
    cumulative_time_bound,
    explicit_recurrence_step,
    explicit_residual_recurrence,
    forward_substitute,
    loss_spacetime,
    march_implicit,
    march_obstacle,
    obstacle_residual,
    obstacle_transport,
    residual_spacetime_explicit,
    residual_spacetime_implicit,
    stability_time_bound,
)

G = build_interval_grid(8)
F = LaxFriedrichs(NormBase(0.0), alpha=1.0, lam=0.0)  # |u_x|
g0 = lambda x: (x[:, 0] - 0.5) ** 2


def fd_grad(f, U, eps=1e-6):
    G_ = np.zeros_like(U)
    for idx in np.ndindex(U.shape):
        E = np.zeros_like(U)
        E[idx] = eps
        G_[idx] = (f(U + E) - f(U - E)) / (2 * eps)
    return G_


def test_residual_hand_value_implicit():
    g = build_interval_grid(2)
    U = np.array([[0.0, 0.2, 0.0], [0.1, 0.5, 0.3]])
    R = residual_spacetime_implicit(U, g, F, 0.0, 0.0, 0.5, LossParams(q=2, mu_b=10, mu_i=1))
    # interior n=1: (0.5-0.2)/0.5 + |(0.1-0.3)/1| + (0.8+0.4)/2 ... with h = 1/2
    p0, p1 = (0.5 - 0.1) / 0.5, (0.5 - 0.3) / 0.5
    H = abs((p0 - p1) / 2) + (p0 + p1) / 2
    np.testing.assert_allclose(R[1, 1], 0.6 + H)
    np.testing.assert_allclose(R[1, [0, 2]], np.sqrt(10 / 2) * np.array([0.1, 0.3]))
    np.testing.assert_allclose(R[0, 1], 0.2)
    np.testing.assert_allclose(R[0, [0, 2]], 0.0)
    Re = residual_spacetime_explicit(U, g, F, 0.0, 0.0, 0.5, LossParams(q=2, mu_b=10, mu_i=1))
    # explicit: F on the old slab, boundary entries also at n = 0 (zero here)
    p0, p1 = 0.4, 0.4
    np.testing.assert_allclose(Re[1, 1], 0.6 + (p0 + p1) / 2)


@pytest.mark.parametrize("scheme", ["implicit", "explicit"])
@pytest.mark.parametrize("q", [2.0, 3.0])
def test_spacetime_gradient(scheme, q):
    rng = np.random.default_rng(7)
    prob = SpaceTimeProblem(G, LaxFriedrichs(NormBase(1.0), 1.0, 0.5), g0, 0.1, 0.05, 4,
                            LossParams(q=q, mu_b=5, mu_i=2), scheme)
    U = rng.uniform(-1, 1, prob.shape)
    L, grad, _ = prob.loss_and_gradient(U)
    assert L == pytest.approx(loss_spacetime(U, G, prob.F, g0, 0.1, 0.05, prob.lp, scheme))
    ref = fd_grad(prob.loss, U)
    assert np.linalg.norm(grad - ref) <= 1e-6 * np.linalg.norm(ref)


def test_shape_checks():
    prob = SpaceTimeProblem(G, F, 0.0, 0.0, 0.1, 3)
    with pytest.raises(GridError):
        prob.residual(np.zeros((3, 9)))
    with pytest.raises(ValueError):
        SpaceTimeProblem(G, F, 0.0, 0.0, 0.1, 3, scheme="crank")
    with pytest.raises(GridError):
        SpaceTimeProblem(G, F, 0.0, np.zeros((2, 2)), 0.1, 3)


def test_march_implicit_large_step_and_stability():
    n = 40
    g = build_interval_grid(n)
    dt, Nt = 10.0 / n, 4
    exact = lambda x, t: np.maximum(np.abs(x - 0.5) - t, 0.0) ** 2
    U = march_implicit(lambda x: exact(x[:, 0], 0.0), lambda x, t: exact(x[:, 0], t), g, F, dt, Nt)
    assert isinstance(U, SpaceTimeField) and U.Ntime == Nt
    prob = SpaceTimeProblem(g, F, lambda x: exact(x[:, 0], 0.0), lambda x, t: exact(x[:, 0], t), dt, Nt)
    assert np.max(np.abs(prob.residual(U))) <= 1e-10
    # the sampled exact solution as the comparison field
    V = np.stack([exact(g.coords[:, 0], k * dt) for k in range(Nt + 1)])
    I = g.interior
    Rinf = [np.max(np.abs((V[k, I] - V[k - 1, I]) / dt + F.evaluate(g.coords[I], V[k, I],
            (V[k, I, None] - V[k, g.neighbors[I]]) / g.h))) for k in range(1, Nt + 1)]
    bound = cumulative_time_bound(0.0, Rinf, 0.0, dt)
    diff = np.max(np.abs(U.values - V), axis=1)
    assert np.all(diff <= bound + 1e-10)


def test_time_bound_helpers():
    assert stability_time_bound(0.1, 2.0, 0.05, 0.1) == pytest.approx(0.3)
    np.testing.assert_allclose(cumulative_time_bound(0.0, [1.0, 2.0], [0.0, 0.5], 0.1), [0, 0.1, 0.6])


def test_check_f3():
    rep = check_f3(F, 10.0, G)
    assert rep.ok and rep.worst_lambda == 0.0
    decay = FunctionHamiltonian(lambda x, u, p: -2.0 * u)
    rep = check_f3(decay, 0.4, G)
    assert rep.ok and rep.worst_lambda == pytest.approx(0.8)
    assert not check_f3(decay, 0.6, G).ok


def test_forward_substitution_and_recurrence():
    dt, Nt = 0.02, 10
    Fn = LaxFriedrichs(NormBase(1.0), 1.0, 0.3)
    U = forward_substitute(g0, 0.0, G, Fn, dt, Nt)
    prob = SpaceTimeProblem(G, Fn, g0, 0.0, dt, Nt, scheme="explicit")
    R = prob.residual(U)
    assert np.max(np.abs(R)) <= 1e-12
    W = explicit_residual_recurrence(U, prob)
    assert np.all(W == 0.0)
    np.testing.assert_allclose(W[1:, G.interior], q_weights(R, 2.0)[1:, G.interior], atol=1e-12)
    with pytest.raises(ValueError):
        explicit_residual_recurrence(U, SpaceTimeProblem(G, Fn, g0, 0.0, dt, Nt))


def test_recurrence_gradient_identity():
    # dL/du^n_j = (s/dt) (w^n_j - T(w^{n+1})_j) for interior j, 1 <= n <= Nt - 1
    rng = np.random.default_rng(2)
    dt, Nt = 0.02, 6
    prob = SpaceTimeProblem(G, LaxFriedrichs(NormBase(1.0), 1.0, 0.3), g0, 0.0, dt, Nt, scheme="explicit")
    U = rng.uniform(-1, 1, prob.shape)
    _, grad, R = prob.loss_and_gradient(U)
    W = q_weights(R, 2.0)
    W[:, G.boundary] = 0.0
    Fu, Fp = prob.F_partials(U)
    for n in range(1, Nt):
        Tw = explicit_recurrence_step(prob, Fu, Fp, n, W[n + 1])
        lhs = grad[n, G.interior]
        rhs = prob.s_int / dt * (W[n, G.interior] - Tw[G.interior])
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_obstacle_transport_schemes():
    g = build_box_grid([-1, -1], [1, 1], 0.25)
    u = g.coords @ np.array([1.0, 2.0])
    a = np.array([1.0, 1.0])
    # linear data: both schemes give (a_unit . grad u)_+ exactly
    exact = 3.0 / np.sqrt(2)
    np.testing.assert_allclose(obstacle_transport(u, g, a, "laxfriedrichs"), exact)
    np.testing.assert_allclose(obstacle_transport(u, g, a, "one_sided_2nd"), exact)
    np.testing.assert_allclose(obstacle_transport(-u, g, a, "one_sided_2nd"), 0.0)
    with pytest.raises(ValueError):
        obstacle_transport(u, g, a, "weno")


def test_march_obstacle_respects_obstacle():
    g = build_box_grid([-2, -2], [2, 2], 0.2)
    a0 = np.array([1.0, 1.0])
    psi = lambda x: np.linalg.norm(x, axis=1) - 0.5
    init = lambda x: np.maximum(np.linalg.norm(x + a0, axis=1) - 1.0, psi(x))
    U = march_obstacle(g, a0, psi, init, 0.2, 5)
    R = obstacle_residual(U, g, a0, psi, 0.2, g0=init)
    assert np.max(np.abs(R)) <= 1e-9
    P = psi(g.coords)
    assert np.all(U.values[:, g.interior] >= P[g.interior] - 1e-9)
