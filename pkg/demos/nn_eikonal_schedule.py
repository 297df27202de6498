"""Train an MLP on the damped 1D eikonal scheme, with and without a schedule.

A fixed fine spacing (h = 1/1000) gives a nearly flat loss and seed-dependent
results; the coarse-to-fine schedule over (h, lam) is more reliable.

Run: python3 demos/nn_eikonal_schedule.py [n_seeds]  (about 20 s per seed)
"""

import sys

import numpy as np

from hjres.experiments import load_config, nn_eikonal_run

cfg = load_config("eikonal1d-nn")
seeds = range(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
kw = dict(hidden=tuple(cfg["hidden"]), lipschitz=cfg["lipschitz"], lr=cfg["lr"],
          max_iters=cfg["max_iters"], stop_tol=cfg["stop_tol"], window=cfg["window"],
          n_colloc=cfg["n_colloc"], mu_b=cfg["mu_b"])

runs = {
    "fixed h=1/1000": ([1 / 1000], [cfg["fixed_lam"]], [cfg["fixed_alpha"]]),
    "schedule": (cfg["schedule_h"], cfg["schedule_lam"], cfg["schedule_alpha"]),
}
for name, (hs, lams, alphas) in runs.items():
    errs = []
    for s in seeds:
        err, iters, conv, _ = nn_eikonal_run(s, hs, lams, alphas, **kw)
        errs.append(err)
        print(f"{name:15s} seed {s}: L_inf error {err:.4f} after {iters} iterations")
    print(f"{name:15s} mean {np.mean(errs):.4f}  var {np.var(errs):.2e}")
