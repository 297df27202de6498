"""Implicit marching of u_t + |u_x| = 0 with a time step ten times the spacing.

The exact solution from u0 = (x - 1/2)^2 is max(|x - 1/2| - t, 0)^2. Each
backward Euler step is one Newton solve; no CFL restriction applies, and the
error stays below the accumulated one-step stability bound.

Run: python3 demos/implicit_no_cfl.py
"""

import numpy as np

from hjres.grid_graph import build_interval_grid
from hjres.hamiltonians import LaxFriedrichs, NormBase
from hjres.time_dependent import check_f3, cumulative_time_bound, march_implicit

n = 80
g = build_interval_grid(n)
F = LaxFriedrichs(NormBase(0.0), alpha=1.0, lam=0.0)  # |u_x|, no source
dt, Nt = 10.0 / n, 4
exact = lambda x, t: np.maximum(np.abs(x - 0.5) - t, 0.0) ** 2

print("F3 check:", check_f3(F, dt, g))
U = march_implicit(lambda x: exact(x[:, 0], 0.0), lambda x, t: exact(x[:, 0], t), g, F, dt, Nt)

x, I = g.coords[:, 0], g.interior
V = np.stack([exact(x, k * dt) for k in range(Nt + 1)])
nb = g.neighbors[I]
Rinf = [np.max(np.abs((V[k, I] - V[k - 1, I]) / dt
                      + F.evaluate(g.coords[I], V[k, I], (V[k, I, None] - V[k, nb]) / g.h)))
        for k in range(1, Nt + 1)]
bound = cumulative_time_bound(0.0, Rinf, 0.0, dt)
for k in range(Nt + 1):
    print(f"t={k * dt:.3f}  |U - exact|_inf={np.max(np.abs(U.values[k] - V[k])):.4f}  bound={bound[k]:.4f}")
