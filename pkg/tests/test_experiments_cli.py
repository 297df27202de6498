import numpy as np
import pytest

from hjres.cli import main, output_dir
from hjres.experiments import (
    ConfigError,
    eval_fraction,
    hausdorff,
    initial_contour,
    isaacs_reference,
    load_config,
    nn_eikonal_run,
    read_csv,
    shared_difference,
    zero_crossings,
)
from hjres.grid_graph import read_field


def write_ini(tmp_path, text):
    p = tmp_path / "cfg.ini"
    p.write_text(text)
    return p


def test_defaults_and_overrides(tmp_path):
    cfg = load_config("eikonal1d-grid")
    assert cfg["grids"] == [20, 40, 80, 160] and cfg["max_iters"] == 100_000
    p = write_ini(tmp_path, "[eikonal1d-grid]\ngrids = 10, 20\nlam = 0.5\n")
    cfg = load_config("eikonal1d-grid", p, {"seed": 3})
    assert cfg["grids"] == [10, 20] and cfg["lam"] == 0.5 and cfg["seed"] == 3


def test_fraction_lists(tmp_path):
    assert eval_fraction("1/160") == pytest.approx(0.00625)
    p = write_ini(tmp_path, "[eikonal1d-nn]\nfixed_h = 1/20 1/40\n")
    assert load_config("eikonal1d-nn", p)["fixed_h"] == [0.05, 0.025]


@pytest.mark.parametrize("text,path", [
    ("[eikonal1d-grid]\nstep = fast\n", "eikonal1d-grid.step"),
    ("[eikonal1d-grid]\nfoo = 1\n", "eikonal1d-grid.foo"),
    ("[nonsense]\na = 1\n", "nonsense"),
    ("[eikonal1d-grid]\nhamiltonian = weno\n", "eikonal1d-grid.hamiltonian"),
    ("[eikonal1d-grid]\ngrids = 40, 20\n", "eikonal1d-grid.grids"),
    ("[eikonal1d-nn]\nschedule_lam = 0.1, 1, 2, 3\n", "eikonal1d-nn.schedule_lam"),
    ("[isaacs2d]\nR = 0.4\n", "isaacs2d.R"),
    ("[obstacle]\ninit_focus = 2\n", "obstacle.init_focus"),
])
def test_config_errors_name_the_field(tmp_path, text, path):
    experiment = path.split(".")[0] if "." in path else "eikonal1d-grid"
    with pytest.raises(ConfigError, match=path.replace(".", r"\.")):
        load_config(experiment, write_ini(tmp_path, text))


def test_cli_dry_run_and_config_error(tmp_path, capsys):
    assert main(["isaacs2d", "--dry-run"]) == 0
    bad = write_ini(tmp_path, "[isaacs2d]\nkappa = -1\n")
    assert main(["isaacs2d", "--config", str(bad)]) == 2
    assert "isaacs2d.kappa" in capsys.readouterr().err
    assert main(["isaacs2d", "--config", str(tmp_path / "missing.ini")]) == 2
    assert main(["isaacs2d", "--threads", "0", "--dry-run"]) == 2


def test_cli_nonconvergence_exit_code(tmp_path):
    cfg = write_ini(tmp_path, "[eikonal1d-grid]\ngrids = 10, 20\nmax_iters = 5\n")
    assert main(["eikonal1d-grid", "--config", str(cfg), "--out", str(tmp_path), "--force"]) == 3


def test_eikonal_grid_artifacts(tmp_path):
    cfg = write_ini(tmp_path, "[eikonal1d-grid]\ngrids = 5, 10\nstep = 0.02\nmax_iters = 20000\n")
    assert main(["eikonal1d-grid", "--config", str(cfg), "--out", str(tmp_path), "--force"]) == 0
    out = tmp_path / "eikonal1d-grid"
    head, rows = read_csv(out / "history_n10.csv")
    assert head == ["iter", "loss", "res_inf"]
    assert float(rows[-1][2]) < 1e-3
    head, rows = read_csv(out / "multilevel_history.csv")
    assert [int(r[0]) for r in rows] == sorted(int(r[0]) for r in rows)
    idx, coords, interior, vals = read_field(out / "field_n10.txt")
    assert len(vals) == 11 and interior.sum() == 9
    assert (out / "config.ini").exists()


def test_analyze_jacobian_csv(tmp_path):
    cfg = write_ini(tmp_path, "[analyze-jacobian]\ngrids = 10, 20, 40\n")
    assert main(["analyze-jacobian", "--config", str(cfg), "--out", str(tmp_path), "--force"]) == 0
    head, rows = read_csv(tmp_path / "analyze-jacobian" / "condition.csv")
    assert head == ["h", "M", "mu", "margin", "eig_min", "eig_max", "kappa"]
    vals = np.array(rows, dtype=float)
    assert np.all(vals[:, 3] >= vals[:, 2] - 1e-12)
    ratios = vals[1:, 6] / vals[:-1, 6]
    assert np.all((ratios > 1.5) & (ratios < 2.5))


def test_output_dirs_never_collide(tmp_path):
    a = output_dir(tmp_path, "obstacle", False)
    a.mkdir()
    b = output_dir(tmp_path, "obstacle", False)
    assert a != b and b.name.startswith("obstacle-")
    assert output_dir(tmp_path, "obstacle", True) == tmp_path / "obstacle"


def test_deterministic_nn_run():
    kw = dict(hidden=(8, 8), max_iters=200, stop_tol=None)
    a = nn_eikonal_run(3, [0.1], [1.0], [1.0], **kw)
    b = nn_eikonal_run(3, [0.1], [1.0], [1.0], **kw)
    assert a[0] == b[0] and a[1] == b[1] == 200
    np.testing.assert_array_equal(a[3].theta, b[3].theta)


def test_zero_crossings_circle():
    xs = np.linspace(-1, 1, 81)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = zero_crossings((np.hypot(X, Y) - 0.5).ravel(), xs)
    assert len(pts) > 0
    np.testing.assert_allclose(np.hypot(pts[:, 0], pts[:, 1]), 0.5, atol=2e-3)


def test_initial_contour_and_hausdorff():
    c = initial_contour(np.array([1.0, 1.0]))
    g = np.maximum(np.linalg.norm(c + 1.0, axis=1) - 1.0, np.linalg.norm(c, axis=1) - 0.5)
    np.testing.assert_allclose(g, 0.0, atol=1e-12)
    A = np.array([[0.0, 0.0], [1.0, 0.0]])
    B = np.array([[0.0, 0.5]])
    assert hausdorff(A, B) == pytest.approx(np.hypot(1, 0.5))
    assert hausdorff(A, np.zeros((0, 2))) == np.inf


def test_isaacs_reference_boundary_and_shift():
    g, b, u = isaacs_reference(0.1)
    np.testing.assert_array_equal(u[g.boundary], b)
    assert set(np.unique(b)) == {0.0, 1.0}
    g2, b2, u2 = isaacs_reference(0.1, shift=0.01)
    d = u2 - u
    assert np.all(d[g.interior] >= -1e-9) and np.all(d[g.interior] <= 0.01 + 1e-9)
    assert shared_difference(g, u, g2, u2) == pytest.approx(0.01, abs=1e-9)
