"""Level set evolution with an obstacle, d = 2, trained by residual minimization.

u_t + (a . grad u)_+ = 0 subject to u >= Psi(x) = |x| - 1/2, written as
min(u_t + ..., u - Psi) = 0. The network is trained with Lax-Friedrichs rounds
and then one-sided second order rounds on shrinking (h, dt).

Run: python3 demos/obstacle_desk.py [iters_per_round]
The default of 500 iterations per round takes about one minute and gives a rough
picture; the acceptance test uses the full configuration.
"""

import sys

import numpy as np

from hjres.experiments import load_config, obstacle_metrics, train_obstacle

iters = int(sys.argv[1]) if len(sys.argv) > 1 else 500
cfg = load_config("obstacle", overrides={"iters": iters})


tasks, res = train_obstacle(cfg)
for task, r in zip(tasks, res):
    print(f"{task.scheme:14s} h={task.h:<5} dt={task.dt:<6} final batch loss {r.losses[-50:].mean():.2e}")

m = obstacle_metrics(res[-1].params, tasks[-1], cfg["h_eval"], cfg["eval_extent"], cfg["times"])
for t, v in m["violation"].items():
    print(f"t={t}: max(Psi - u) = {v:.4f}")
print(f"t=0 zero level set: {len(m['contour'])} crossing points, Hausdorff {m['hausdorff']:.4f}")
