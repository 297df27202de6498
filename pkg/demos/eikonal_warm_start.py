"""Cold gradient descent on |u'| + u = 1 stalls on fine grids; warm starts do not.

Run: python3 demos/eikonal_warm_start.py  (about two minutes)
"""

import numpy as np

from hjres.experiments import eikonal_problem
from hjres.jacobian import assemble_jacobian, condition_report, smallest_eigenpairs
from hjres.steady import ScheduleStage, SolveConfig, gradient_descent, multilevel_solve

cfg = SolveConfig(step=1e-3, max_iters=100_000)

# Cold starts from zero. The smallest Jacobian eigenvalue scales like 1/sqrt(M),
# so the plain gradient flow slows down as the grid is refined.
for n in (20, 40, 160):
    prob = eikonal_problem(n)
    res = gradient_descent(np.zeros(prob.n), prob, cfg)
    rinf = np.max(np.abs(prob.residual(res.u)))
    print(f"n={n:4d}  converged={res.converged!s:5}  iters={res.iters:6d}  |R|_inf={rinf:.2e}")

# Where the n=160 run got stuck: a nearly flat direction of the loss.
J = assemble_jacobian(res.u, prob.g, prob.H, prob.lp)
vals, vecs = smallest_eigenpairs(J)
print(f"stalled iterate: smallest |eig| {np.abs(vals).min():.4f} (x{len(vals)}), "
      f"1/sqrt(160) = {1 / np.sqrt(160):.4f}")

# Conditioning at u = 0: kappa roughly doubles with n.
for n in (20, 40, 80, 160):
    p = eikonal_problem(n)
    rep = condition_report(np.zeros(p.n), p.g, p.H, p.lp)
    print(f"n={n:4d}  mu={rep.mu:.4f}  margin={rep.margin:.4f}  kappa={rep.kappa:.1f}")

# Coarse-to-fine: solve on h = 1/20, prolong, continue on 1/40, 1/80, 1/160.
stages = [ScheduleStage(1 / n, 1.0, 1.0) for n in (20, 40, 80, 160)]
ml = multilevel_solve(stages, lambda st: eikonal_problem(round(1 / st.h)), cfg)
for st, r in zip(stages, ml.stages):
    print(f"stage h=1/{round(1 / st.h):d}: {r.iters} iterations")
print(f"multilevel total {ml.total_iters} iterations, converged={ml.converged}")
