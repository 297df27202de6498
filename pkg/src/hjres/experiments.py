"""
Experiment drivers behind the command line: configuration schema, the five
runs and the helpers they share (problem builders, error measures, contour
extraction).

Each ``run_*`` function takes a validated config dict and an output directory,
writes its CSV and field artifacts there and returns a summary dict. Runs that
must converge raise :class:`SolverNonConvergence` when they do not.
"""

from __future__ import annotations

import configparser
import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from . import kruzhkov
from .grid_graph import build_annulus_grid, build_box_grid, build_interval_grid, write_field
from .hamiltonians import Godunov1D, IsaacsHamiltonian, LaxFriedrichs, NormBase, UpwindEikonal
from .jacobian import assemble_jacobian, condition_report, smallest_eigenpairs
from .mlp import (
    Eikonal1DTask,
    ObstacleTask,
    TrainConfig,
    collocation_loss,
    forward,
    init_params,
    lipschitz_init,
    multilevel_train,
    save_checkpoint,
    sgd_min_res,
)
from .residual import LossParams, SteadyProblem
from .steady import (
    ConvergenceError,
    ScheduleStage,
    SolveConfig,
    gradient_descent,
    multilevel_solve,
    newton_solve,
)

log = logging.getLogger(__name__)

EXPERIMENTS = ("eikonal1d-grid", "eikonal1d-nn", "obstacle", "isaacs2d", "analyze-jacobian")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


class SolverNonConvergence(RuntimeError):
    """A run whose result requires convergence did not converge."""


# -- configuration ---------------------------------------------------------------

_EIK = {
    "hamiltonian": ("str", "laxfriedrichs"),
    "lam": ("float", 1.0),
    "alpha": ("float", 1.0),
    "mu_b": ("float", 10.0),
    "q": ("float", 2.0),
}

SCHEMA = {
    "eikonal1d-grid": {
        **_EIK,
        "grids": ("intlist", [20, 40, 80, 160]),
        "step": ("float", 1e-3),
        "max_iters": ("int", 100_000),
        "tol_inf": ("float", 1e-3),
        "record_every": ("int", 100),
        "multilevel": ("bool", True),
        "seed": ("int", 0),
    },
    "eikonal1d-nn": {
        "seeds": ("int", 20),
        "seed": ("int", 0),
        "fixed_h": ("floatlist", [1 / 20, 1 / 100, 1 / 1000]),
        "fixed_lam": ("float", 0.1),
        "fixed_alpha": ("float", 1.0),
        "schedule_h": ("floatlist", [1 / 20, 1 / 100, 1 / 500, 1 / 1000]),
        "schedule_lam": ("floatlist", [2.0, 1.0, 0.5, 0.1]),
        "schedule_alpha": ("floatlist", [1.0, 1.0, 1.0, 1.0]),
        "hidden": ("intlist", [64, 64, 64]),
        "lipschitz": ("float", 1.0),
        "lr": ("float", 1e-3),
        "max_iters": ("int", 10_000),
        "stop_tol": ("float", 1e-3),
        "window": ("int", 50),
        "n_colloc": ("int", 20),
        "mu_b": ("float", 10.0),
        "n_eval": ("int", 1001),
    },
    "obstacle": {
        "dim": ("int", 2),
        "seed": ("int", 0),
        "hidden": ("intlist", [64, 64, 64]),
        "lf_h": ("floatlist", [0.3, 0.2, 0.1]),
        "lf_dt": ("floatlist", [0.15, 0.1, 0.05]),
        "os_h": ("floatlist", [0.2, 0.1, 0.05]),
        "os_dt": ("floatlist", [0.1, 0.05, 0.025]),
        "iters": ("int", 3000),
        "lr": ("float", 1e-3),
        "lr_decay": ("float", 1.0),
        "n_colloc": ("int", 500),
        "n_init": ("int", 400),
        "init_focus": ("float", 0.5),
        "focus_radius": ("float", 0.6),
        "w0": ("float", 10.0),
        "horizon": ("float", 2.0),
        "box": ("float", 2.5),
        "h_eval": ("float", 0.05),
        "eval_extent": ("float", 2.0),
        "times": ("floatlist", [0.0, 1.0, 2.0]),
        "record_every": ("int", 100),
    },
    "isaacs2d": {
        "grids": ("floatlist", [0.04, 0.02]),
        "sigma_x": ("float", 0.5),
        "sigma_y": ("float", 0.2),
        "vs": ("float", 0.5),
        "kappa": ("float", 0.1),
        "a": ("float", 0.2),
        "r": ("float", 0.5),
        "R": ("float", float(np.sqrt(2.0))),
        "lambda_extra": ("float", 0.0),
        "scheme": ("str", "hybrid"),
        "cut_cells": ("bool", True),
        "newton_tol": ("float", 1e-10),
        "nn_iters": ("int", 0),
        "nn_h": ("float", 0.05),
        "nn_hidden": ("intlist", [64, 64, 64]),
        "nn_colloc": ("int", 500),
        "nn_boundary": ("int", 200),
        "seed": ("int", 0),
    },
    "analyze-jacobian": {
        **_EIK,
        "grids": ("intlist", [20, 40, 80, 160]),
        "state": ("str", "zero"),
        "seed": ("int", 0),
    },
}

_CHOICES = {
    "hamiltonian": ("laxfriedrichs", "upwind", "godunov"),
    "scheme": ("upwind", "hybrid"),
    "state": ("zero", "random"),
}

# keys allowed to be zero; every other numeric key must be positive
_NONNEG = {"seed", "times", "lambda_extra", "kappa", "vs", "a", "nn_iters", "init_focus"}


def _parse(kind, raw: str, path: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw.strip()
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        items = [s for s in raw.replace(",", " ").split() if s]
        if not items:
            raise ValueError("empty list")
        conv = int if kind == "intlist" else float
        return [conv(eval_fraction(s)) if conv is float else conv(s) for s in items]
    except ValueError as exc:
        raise ConfigError(f"{path}: cannot read {raw!r} as {kind} ({exc})") from None


def eval_fraction(s: str) -> float:
    """``"1/160"`` -> 0.00625; plain numbers pass through."""
    if "/" in s:
        num, den = s.split("/", 1)
        return float(num) / float(den)
    return float(s)


def _check(experiment: str, cfg: dict):
    def bad(key, why):
        raise ConfigError(f"{experiment}.{key}: {why}")

    for key, choices in _CHOICES.items():
        if key in cfg and cfg[key] not in choices:
            bad(key, f"must be one of {', '.join(choices)}")
    for key, val in cfg.items():
        kind = SCHEMA[experiment][key][0]
        vals = val if isinstance(val, list) else [val]
        if kind in ("float", "floatlist", "int", "intlist"):
            if key in _NONNEG:
                if any(not v >= 0 for v in vals):
                    bad(key, "must be non-negative")
            elif any(not v > 0 for v in vals):
                bad(key, "must be positive")
    if experiment == "eikonal1d-nn":
        n = len(cfg["schedule_h"])
        if len(cfg["schedule_lam"]) != n or len(cfg["schedule_alpha"]) != n:
            bad("schedule_lam", "schedule lists must have equal length")
        for name in ("schedule_h", "schedule_lam", "schedule_alpha"):
            if any(b > a for a, b in zip(cfg[name], cfg[name][1:])):
                bad(name, "schedule must be non-increasing")
    if experiment == "obstacle":
        if len(cfg["lf_h"]) != len(cfg["lf_dt"]) or len(cfg["os_h"]) != len(cfg["os_dt"]):
            bad("lf_dt", "h and dt lists must have equal length")
        if cfg["dim"] < 1:
            bad("dim", "must be >= 1")
        if cfg["init_focus"] > 1:
            bad("init_focus", "is a fraction in [0, 1]")
    if experiment == "isaacs2d" and not cfg["R"] > cfg["r"]:
        bad("R", "outer radius must exceed inner radius")
    if experiment == "eikonal1d-grid" and cfg["multilevel"]:
        if sorted(cfg["grids"]) != cfg["grids"]:
            bad("grids", "multilevel schedule needs increasing grid sizes")
    if "grids" in cfg and experiment in ("eikonal1d-grid", "analyze-jacobian"):
        if any(n < 2 for n in cfg["grids"]):
            bad("grids", "grid sizes must be >= 2")


def load_config(experiment: str, path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the ``[experiment]`` section of an INI file, then overrides.

    Unknown sections or keys and unparsable values raise :class:`ConfigError`.
    """
    if experiment not in SCHEMA:
        raise ConfigError(f"experiment: unknown experiment {experiment!r}")
    schema = SCHEMA[experiment]
    cfg = {k: (list(v) if isinstance(v, list) else v) for k, (_, v) in schema.items()}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path} ({exc.strerror})") from None
        except configparser.Error as exc:
            raise ConfigError(f"config: {exc}") from None
        for sec in cp.sections():
            if sec not in SCHEMA:
                raise ConfigError(f"{sec}: unknown section")
        if cp.has_section(experiment):
            for key, raw in cp.items(experiment):
                if key not in schema:
                    raise ConfigError(f"{experiment}.{key}: unknown key")
                cfg[key] = _parse(schema[key][0], raw, f"{experiment}.{key}")
    for key, val in (overrides or {}).items():
        if key not in schema:
            raise ConfigError(f"{experiment}.{key}: unknown key")
        cfg[key] = val
    _check(experiment, cfg)
    return cfg


def dump_config(path, experiment: str, cfg: dict):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp[experiment] = {k: ", ".join(map(repr, v)) if isinstance(v, list) else str(v)
                      for k, v in cfg.items()}
    with open(path, "w") as fh:
        cp.write(fh)


# -- small IO helpers ------------------------------------------------------------


_INT_COLUMNS = {"iter", "iters", "n", "M", "seed"}


def _cell(name, v):
    if name in _INT_COLUMNS:
        return int(v)
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, header, rows):
    """Comma separated, one header line, floats at full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(name, v) for name, v in zip(header, row)])


def read_csv(path):
    """Header and rows (as strings) of a CSV written by :func:`write_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _pool_map(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


# -- 1D eikonal ------------------------------------------------------------------


def make_hamiltonian(name: str, lam: float = 0.0, alpha: float = 1.0, f: float = 1.0):
    """Eikonal numerical Hamiltonian ``|u'| + lam u - f`` by name."""
    if name == "laxfriedrichs":
        return LaxFriedrichs(NormBase(f), alpha=alpha, lam=lam)
    if name == "upwind":
        return UpwindEikonal(f, lam)
    if name == "godunov":
        return Godunov1D("abs", f, lam)
    raise ConfigError(f"hamiltonian: unknown Hamiltonian {name!r}")


def eikonal_problem(n: int, lam=1.0, alpha=1.0, mu_b=10.0, q=2.0, hamiltonian="laxfriedrichs"):
    """``|u'| + lam u = 1`` on the grid ``{j/n}`` with zero boundary data."""
    g = build_interval_grid(n)
    return SteadyProblem(g, make_hamiltonian(hamiltonian, lam, alpha), 0.0, LossParams(q=q, mu_b=mu_b))


def distance_solution(x):
    """Viscosity solution ``min(x, 1 - x)`` of ``|u'| = 1``, ``u(0) = u(1) = 0``."""
    x = np.asarray(x, dtype=float)
    return np.minimum(x, 1.0 - x)


def kruzhkov_error(v, x, lam: float) -> float:
    """Sup distance between the inverse transform of ``v`` and ``min(x, 1 - x)``."""
    u = kruzhkov.inverse(v, lam, strict=False)
    return float(np.max(np.abs(u - distance_solution(x))))


def run_eikonal1d_grid(cfg: dict, out: Path) -> dict:
    """Cold gradient descent per grid, the coarse-to-fine schedule, and the
    Jacobian spectrum at the last non-converged iterate."""
    scfg = SolveConfig(step=cfg["step"], max_iters=cfg["max_iters"], tol_inf=cfg["tol_inf"],
                       record_every=cfg["record_every"])
    kw = dict(lam=cfg["lam"], alpha=cfg["alpha"], mu_b=cfg["mu_b"], q=cfg["q"],
              hamiltonian=cfg["hamiltonian"])
    summary = {"runs": []}
    stalled = None
    for n in cfg["grids"]:
        prob = eikonal_problem(n, **kw)
        res = gradient_descent(np.zeros(prob.n), prob, scfg)
        write_csv(out / f"history_n{n}.csv", ["iter", "loss", "res_inf"], res.history)
        write_field(out / f"field_n{n}.txt", prob.g, res.u)
        rinf = float(res.history[-1, 2])
        summary["runs"].append((n, res.iters, res.converged, rinf))
        log.info("n=%d: %d iterations, converged=%s, |R|_inf=%.3e", n, res.iters, res.converged, rinf)
        if not res.converged:
            stalled = (n, prob, res.u)
    write_csv(out / "runs.csv", ["n", "iters", "converged", "res_inf"], summary["runs"])

    if stalled is not None:
        n, prob, u = stalled
        rep = condition_report(u, prob.g, prob.H, prob.lp, prob.bvals)
        write_csv(out / "condition_stalled.csv", ["h", "M", "mu", "margin", "eig_min", "eig_max", "kappa"],
                  [(prob.g.h, prob.g.M, rep.mu, rep.margin, rep.eig_min, rep.eig_max, rep.kappa)])
        vals, vecs = smallest_eigenpairs(assemble_jacobian(u, prob.g, prob.H, prob.lp, prob.bvals))
        header = ["x"] + [f"v{k}" for k in range(len(vals))]
        write_csv(out / f"eigvecs_n{n}.csv", header,
                  np.column_stack([prob.g.coords[:, 0], np.real(vecs)]))
        write_csv(out / f"eigvals_n{n}.csv", ["re", "im"], [(w.real, w.imag) for w in np.atleast_1d(vals)])
        summary["stalled"] = {"n": n, "eig_min": rep.eig_min, "smallest": [abs(w) for w in vals]}

    if cfg["multilevel"]:
        stages = [ScheduleStage(h=1.0 / n, lam=cfg["lam"], alpha=cfg["alpha"]) for n in cfg["grids"]]
        ml = multilevel_solve(stages, lambda st: eikonal_problem(round(1.0 / st.h), **kw), scfg)
        rows, offset = [], 0
        for st in ml.stages:
            h = st.history.copy()
            h[:, 0] += offset
            rows.extend(h)
            offset += st.iters
        write_csv(out / "multilevel_history.csv", ["iter", "loss", "res_inf"], rows)
        write_csv(out / "multilevel_stages.csv", ["n", "iters", "converged", "res_inf"],
                  [(round(1.0 / p.g.h), s.iters, s.converged, s.history[-1, 2])
                   for s, p in zip(ml.stages, ml.problems)])
        write_field(out / "multilevel_field.txt", ml.problems[-1].g, ml.u)
        summary["multilevel"] = {"total_iters": ml.total_iters, "converged": ml.converged}
        if not ml.converged:
            raise SolverNonConvergence("multilevel schedule did not reach the residual tolerance")
    return summary


def run_analyze_jacobian(cfg: dict, out: Path) -> dict:
    """Condition sweep over grid sizes at the zero (or a seeded random) state."""
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    for n in cfg["grids"]:
        prob = eikonal_problem(n, cfg["lam"], cfg["alpha"], cfg["mu_b"], cfg["q"], cfg["hamiltonian"])
        u = np.zeros(prob.n) if cfg["state"] == "zero" else rng.uniform(-1, 1, prob.n)
        rep = condition_report(u, prob.g, prob.H, prob.lp, prob.bvals)
        rows.append((prob.g.h, prob.g.M, rep.mu, rep.margin, rep.eig_min, rep.eig_max, rep.kappa))
    write_csv(out / "condition.csv", ["h", "M", "mu", "margin", "eig_min", "eig_max", "kappa"], rows)
    return {"rows": rows}


# -- 1D eikonal, network ---------------------------------------------------------


def nn_eikonal_run(seed: int, hs, lams, alphas, hidden=(64, 64, 64), lipschitz=1.0, lr=1e-3,
                   max_iters=10_000, stop_tol=1e-3, window=50, n_colloc=20, mu_b=10.0,
                   n_eval=1001):
    """Train one network through the given stages; returns
    ``(final_error, total_iters, converged, params)``.

    The error compares the Kruzhkov inverse of the network (with the last
    stage's ``lam``) to ``min(x, 1 - x)`` on ``n_eval`` uniform points.
    """
    params = lipschitz_init((1, *hidden, 1), lipschitz, seed=seed)
    tasks = [Eikonal1DTask(h=h, lam=lam, alpha=al, n_colloc=n_colloc, mu_b=mu_b)
             for h, lam, al in zip(hs, lams, alphas)]
    tcfg = TrainConfig(lr=lr, max_iters=max_iters, stop_tol=stop_tol, window=window)
    res = multilevel_train(params, tasks, tcfg, np.random.default_rng(seed))
    x = np.linspace(0.0, 1.0, n_eval)
    v = forward(res[-1].params, x[:, None])
    err = kruzhkov_error(v, x, lams[-1])
    return err, sum(r.iters for r in res), res[-1].converged, res[-1].params


def _nn_job(args):
    seed, hs, lams, alphas, kw = args
    err, iters, conv, _ = nn_eikonal_run(seed, hs, lams, alphas, **kw)
    return seed, err, iters, conv


def run_eikonal1d_nn(cfg: dict, out: Path, threads: int = 1) -> dict:
    """Seeded repetitions of fixed-spacing training and of the schedule."""
    kw = dict(hidden=tuple(cfg["hidden"]), lipschitz=cfg["lipschitz"], lr=cfg["lr"],
              max_iters=cfg["max_iters"], stop_tol=cfg["stop_tol"], window=cfg["window"],
              n_colloc=cfg["n_colloc"], mu_b=cfg["mu_b"], n_eval=cfg["n_eval"])
    seeds = [cfg["seed"] + k for k in range(cfg["seeds"])]
    runs = {f"fixed_h{h:g}": ([h], [cfg["fixed_lam"]], [cfg["fixed_alpha"]]) for h in cfg["fixed_h"]}
    runs["schedule"] = (cfg["schedule_h"], cfg["schedule_lam"], cfg["schedule_alpha"])
    summary = {}
    srows = []
    for name, (hs, lams, alphas) in runs.items():
        res = _pool_map(_nn_job, [(s, hs, lams, alphas, kw) for s in seeds], threads)
        write_csv(out / f"runs_{name}.csv", ["seed", "final_error", "iters", "converged"], res)
        errs = np.array([r[1] for r in res])
        iters = np.array([r[2] for r in res])
        summary[name] = {"errors": errs, "iters": iters}
        srows.append((name, errs.mean(), errs.std(), errs.var(), iters.mean()))
        log.info("%s: mean error %.4f, std %.4f", name, errs.mean(), errs.std())
    write_csv(out / "summary.csv", ["run", "mean_error", "std_error", "var_error", "mean_iters"], srows)
    return summary


# -- obstacle --------------------------------------------------------------------


def obstacle_tasks(cfg: dict):
    """Lax-Friedrichs rounds followed by one-sided second order rounds."""
    common = dict(d=cfg["dim"], T=cfg["horizon"], box=cfg["box"], n_colloc=cfg["n_colloc"],
                  n_init=cfg["n_init"], w0=cfg["w0"], init_focus=cfg["init_focus"],
                  focus_radius=cfg["focus_radius"])
    tasks = [ObstacleTask(h=h, dt=dt, scheme="laxfriedrichs", **common)
             for h, dt in zip(cfg["lf_h"], cfg["lf_dt"])]
    tasks += [ObstacleTask(h=h, dt=dt, scheme="one_sided_2nd", **common)
              for h, dt in zip(cfg["os_h"], cfg["os_dt"])]
    return tasks


def slice_grid(extent: float, h: float, dim: int = 2):
    """Square lattice on ``[-extent, extent]^2`` embedded in the ``(x1, x2)`` plane."""
    g = build_box_grid([-extent, -extent], [extent, extent], h)
    X = np.zeros((g.n_nodes, dim))
    X[:, :2] = g.coords
    return g, X


def zero_crossings(values, xs):
    """Points where a lattice field on ``xs x xs`` (row-major, ij indexing)
    changes sign, by linear interpolation along lattice edges."""
    V = np.asarray(values, dtype=float).reshape(len(xs), len(xs))
    pts = []
    for axis in (0, 1):
        a = V[:-1, :] if axis == 0 else V[:, :-1]
        b = V[1:, :] if axis == 0 else V[:, 1:]
        i, j = np.nonzero((a <= 0) != (b <= 0))
        t = a[i, j] / (a[i, j] - b[i, j])
        if axis == 0:
            pts.append(np.column_stack([xs[i] + t * (xs[i + 1] - xs[i]), xs[j]]))
        else:
            pts.append(np.column_stack([xs[i], xs[j] + t * (xs[j + 1] - xs[j])]))
    return np.vstack(pts)


def initial_contour(a0, n: int = 4000):
    """Boundary of ``{max(|x + a0| - 1, |x| - 1/2) <= 0}`` in the plane."""
    a0 = np.asarray(a0, dtype=float)
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    circ = np.column_stack([np.cos(th), np.sin(th)])
    c1 = -a0 + circ
    c2 = 0.5 * circ
    keep1 = np.linalg.norm(c1, axis=1) <= 0.5
    keep2 = np.linalg.norm(c2 + a0, axis=1) <= 1.0
    return np.vstack([c1[keep1], c2[keep2]])


def hausdorff(A, B) -> float:
    if len(A) == 0 or len(B) == 0:
        return float("inf") if len(A) + len(B) else 0.0
    return max(directed_hausdorff(A, B)[0], directed_hausdorff(B, A)[0])


def obstacle_metrics(params, task: ObstacleTask, h_eval: float, extent: float, times):
    """Obstacle violation ``max(Psi - u)`` per time slice and, in the plane,
    the Hausdorff distance of the t=0 zero level set to the exact one."""
    g, X = slice_grid(extent, h_eval, task.d)
    xs = np.unique(g.coords[:, 0])
    psi = task.psi(X)
    slices, viol = {}, {}
    for t in times:
        u = forward(params, np.column_stack([np.full(len(X), t), X]))
        slices[t] = u
        viol[t] = float(np.max(psi - u))
    u0 = forward(params, np.column_stack([np.zeros(len(X)), X]))
    contour = zero_crossings(u0, xs)
    hd = hausdorff(contour, initial_contour(task.a0)) if task.d == 2 else float("nan")
    return {"grid": g, "slices": slices, "violation": viol, "hausdorff": hd, "contour": contour}


def train_obstacle(cfg: dict, probe=None):
    tasks = obstacle_tasks(cfg)
    params = init_params((cfg["dim"] + 1, *cfg["hidden"], 1), seed=cfg["seed"])
    tcfg = TrainConfig(lr=cfg["lr"], max_iters=cfg["iters"], stop_tol=None,
                       record_every=cfg["record_every"], lr_decay=cfg["lr_decay"])
    res = multilevel_train(params, tasks, tcfg, np.random.default_rng(cfg["seed"]), probe)
    return tasks, res


def run_obstacle(cfg: dict, out: Path) -> dict:
    tasks, res = train_obstacle(cfg)
    rows, offset = [], 0
    for r in res:
        rows.extend((it + offset, L, pr) for it, L, pr in r.log)
        offset += r.iters
    write_csv(out / "training.csv", ["iter", "loss_stochastic", "res_inf_probe"], rows)
    params = res[-1].params
    save_checkpoint(out / "network.bin", params)
    m = obstacle_metrics(params, tasks[-1], cfg["h_eval"], cfg["eval_extent"], cfg["times"])
    for k, t in enumerate(cfg["times"]):
        write_field(out / f"field_t{k}.txt", m["grid"], m["slices"][t])
    write_csv(out / "complementarity.csv", ["t", "max_violation"], sorted(m["violation"].items()))
    write_csv(out / "contour_t0.csv", ["x1", "x2"], m["contour"])
    summary = {"violation": max(m["violation"].values()), "hausdorff": m["hausdorff"]}
    write_csv(out / "summary.csv", ["max_violation", "hausdorff_t0", "h_eval"],
              [(summary["violation"], summary["hausdorff"], cfg["h_eval"])])
    return summary


# -- Isaacs ----------------------------------------------------------------------

_ISAACS_KEYS = ("sigma_x", "sigma_y", "vs", "kappa", "a", "r", "R", "lambda_extra")


def isaacs_reference(h: float, scheme="hybrid", cut_cells=True, shift=0.0, tol=1e-10, **params):
    """Newton solve of the Isaacs scheme on the annulus lattice with spacing ``h``.

    Boundary data are the node tags (0 inside, 1 outside) plus ``shift``.
    Returns ``(graph, boundary_values, u)``.
    """
    r = params.get("r", 0.5)
    R = params.get("R", np.sqrt(2.0))
    g, tags = build_annulus_grid(r, R, h, cut_cells=cut_cells)
    dx = g.edge_len[g.interior] if cut_cells else None
    H = IsaacsHamiltonian(h, dx=dx, scheme=scheme, **params)
    bvals = tags.astype(float) + shift
    prob = SteadyProblem(g, H, bvals)
    u0 = np.zeros(g.n_nodes)
    u0[g.boundary] = bvals
    u = newton_solve(u0, prob, tol=tol)
    # the boundary rows are linear; drop the solver round-off there
    u[g.boundary] = bvals
    return g, bvals, u


def shared_difference(g1, u1, g2, u2) -> float:
    """Sup difference over nodes interior to both graphs at the same location."""
    key = lambda c: map(tuple, np.round(c, 9))
    pos = {k: i for i, k in enumerate(key(g2.coords[g2.interior]))}
    pairs = [(i, pos[k]) for i, k in enumerate(key(g1.coords[g1.interior])) if k in pos]
    if not pairs:
        raise ValueError("no shared interior nodes")
    a, b = np.array(pairs).T
    return float(np.max(np.abs(u1[g1.interior][a] - u2[g2.interior][b])))


def _annulus_points(rng, m, r, R):
    rad = np.sqrt(rng.uniform(r * r, R * R, m))
    th = rng.uniform(0, 2 * np.pi, m)
    return np.column_stack([rad * np.cos(th), rad * np.sin(th)])


def train_isaacs_nn(cfg: dict):
    """Collocation network for the Isaacs problem (upwind stencil, uniform ``nn_h``)."""
    params = init_params((2, *cfg["nn_hidden"], 1), seed=cfg["seed"])
    rng = np.random.default_rng(cfg["seed"])
    H = IsaacsHamiltonian(cfg["nn_h"], **{k: cfg[k] for k in _ISAACS_KEYS})
    r, R, h = cfg["r"], cfg["R"], cfg["nn_h"]
    nb = cfg["nn_boundary"]
    th = np.linspace(0, 2 * np.pi, nb, endpoint=False)
    circ = np.column_stack([np.cos(th), np.sin(th)])
    Xb = np.vstack([r * circ, R * circ])
    gb = np.r_[np.zeros(nb), np.ones(nb)]

    class _Task:
        def sample(self, rng):
            # keep the whole stencil inside the annulus
            return _annulus_points(rng, cfg["nn_colloc"], r + h, R - h)

        def loss(self, p, theta, X):
            L, grad, _ = collocation_loss(p, theta, X, Xb, gb, H, h)
            return L, grad

    return sgd_min_res(params, _Task(), TrainConfig(max_iters=cfg["nn_iters"], stop_tol=None), rng)


def run_isaacs2d(cfg: dict, out: Path) -> dict:
    params = {k: cfg[k] for k in _ISAACS_KEYS}
    sols = []
    for h in cfg["grids"]:
        try:
            g, bvals, u = isaacs_reference(h, cfg["scheme"], cfg["cut_cells"], tol=cfg["newton_tol"], **params)
        except ConvergenceError as exc:
            raise SolverNonConvergence(f"Isaacs Newton solve failed at h={h}: {exc}") from exc
        write_field(out / f"reference_h{h:g}.txt", g, u)
        sols.append((h, g, u))
    rows = [(h1, h2, shared_difference(g1, u1, g2, u2))
            for (h1, g1, u1), (h2, g2, u2) in zip(sols, sols[1:])]
    write_csv(out / "self_convergence.csv", ["h_coarse", "h_fine", "linf_difference"], rows)
    summary = {"self_convergence": rows}
    if cfg["nn_iters"] > 0:
        res = train_isaacs_nn(cfg)
        h, g, u = sols[-1]
        unn = forward(res.params, g.coords)
        write_field(out / "network.txt", g, unn)
        diff = float(np.max(np.abs(unn[g.interior] - u[g.interior])))
        write_csv(out / "network_vs_reference.csv", ["h", "linf_difference"], [(h, diff)])
        write_csv(out / "training.csv", ["iter", "loss_stochastic", "res_inf_probe"], res.log)
        summary["network_difference"] = diff
    return summary


RUNNERS = {
    "eikonal1d-grid": run_eikonal1d_grid,
    "eikonal1d-nn": run_eikonal1d_nn,
    "obstacle": run_obstacle,
    "isaacs2d": run_isaacs2d,
    "analyze-jacobian": run_analyze_jacobian,
}


def run(experiment: str, cfg: dict, out: Path, threads: int = 1) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(out / "config.ini", experiment, cfg)
    if experiment == "eikonal1d-nn":
        return run_eikonal1d_nn(cfg, out, threads)
    return RUNNERS[experiment](cfg, out)
