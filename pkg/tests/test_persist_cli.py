import json
import math

import numpy as np
import pytest
from support import tiny_config

from spectraforge import cli
from spectraforge import geometry as geo
from spectraforge import oracle as orc
from spectraforge import persist
from spectraforge.config import list_presets
from spectraforge.errors import ConfigError
from spectraforge.network import NetworkLayout, init_xavier

SQUARE = geo.Rectangle(0.0, 1.0, 0.0, 1.0)
TINY = ["--set", "training.K=2", "--set", "training.R=2", "--set", "network_u.N=6", "--set", "network_rho.N=6",
        "--set", "sampling.grid=[12,12]", "--set", "sampling.n_boundary=32"]


def _density(domain, n, value):
    pts = geo.grid_points(domain, n)
    inside = domain.contains(pts)
    return pts, inside, np.full(pts.shape[0], float(value))


def test_pgm_endpoints():
    for value, px in ((1.0, 0), (2.0, 255)):
        pts, inside, rho = _density(geo.Disk(1.0), 21, value)
        img = persist.density_to_pgm(pts, inside, rho, 1.0, 2.0)
        flat = inside.reshape(21, 21).T[::-1]
        assert np.all(img[flat] == px) and np.all(img[~flat] == 128)


def test_pgm_annulus_hole_is_grey():
    ann = geo.Annulus(0.4, 1.0)
    pts, inside, rho = _density(ann, 41, 1.5)
    img = persist.density_to_pgm(pts, inside, rho, 1.0, 2.0)
    assert img[20, 20] == 128 and img[0, 0] == 128
    flat = inside.reshape(41, 41).T[::-1]
    assert np.all(img[~flat] == 128) and np.all(img[flat] == 128)  # 1.5 maps to 127.5, rounded up
    rho = np.where(inside, 1.0, 7.0)
    img = persist.density_to_pgm(pts, inside, rho, 1.0, 2.0)
    assert np.all(img[~flat] == 128) and np.all(img[flat] == 0)


def test_pgm_orientation_and_roundtrip(tmp_path):
    pts = geo.grid_points(SQUARE, (3, 4))
    inside = np.ones(len(pts), bool)
    rho = pts[:, 1]  # increases with y
    img = persist.density_to_pgm(pts, inside, rho, 0.0, 1.0)
    assert img.shape == (4, 3)
    assert np.all(img[0] == 255) and np.all(img[-1] == 0)
    persist.write_pgm(tmp_path / "a.pgm", img)
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n3 4\n255\n")
    np.testing.assert_array_equal(persist.read_pgm(tmp_path / "a.pgm"), img)


def test_pgm_3d_needs_slice():
    cube = geo.Box3()
    pts = geo.grid_points(cube, 5)
    inside, rho = cube.contains(pts), np.full(len(pts), 1.5)
    with pytest.raises(ConfigError):
        persist.density_to_pgm(pts, inside, rho, 1.0, 2.0)
    assert persist.density_to_pgm(pts, inside, rho, 1.0, 2.0, slice_axis_value=0.5).shape == (5, 5)


def test_density_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    pts, inside, _ = _density(geo.Disk(1.0), 9, 0)
    rho = rng.uniform(1, 2, len(pts))
    persist.write_density_csv(tmp_path / "d.csv", pts, inside, rho)
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "x,y,inside,rho"
    p2, i2, r2 = persist.read_density_csv(tmp_path / "d.csv")
    assert p2.tobytes() == pts.tobytes() and r2.tobytes() == rho.tobytes()
    np.testing.assert_array_equal(i2, inside)
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        persist.read_density_csv(tmp_path / "bad.csv")


def test_loss_history_format(tmp_path):
    row = dict(epoch=1, L_sum=1.5, L_in=1.0, L_w=0.5, L_b=0.0, mass=1.2, mu=1.0, lambda_mult=0.0, seconds=math.nan)
    row["lambda"] = 1.0
    persist.write_loss_history(tmp_path / "l.csv", [row])
    lines = (tmp_path / "l.csv").read_text().splitlines()
    assert lines[0] == "epoch,L_sum,L_in,L_w,L_b,lambda,mass,mu,lambda_mult,seconds"
    assert lines[1] == "1,1.5,1.0,0.5,0.0,1.0,1.2,1.0,0.0,nan"
    assert persist.fmt(0.1 + 0.2) == "0.30000000000000004"


def test_params_roundtrip(tmp_path):
    lay = NetworkLayout(3, T=2, M=2, N=5, out_act="square")
    theta = init_xavier(lay, 4)
    persist.write_params(tmp_path / "p", theta, {"outer": 3})
    back = persist.read_params(tmp_path / "p")
    assert back.layout == lay and back.values.tobytes() == theta.values.tobytes()
    assert json.loads((tmp_path / "p.json").read_text())["outer"] == 3
    (tmp_path / "p.bin").write_bytes(b"\0" * 8)
    with pytest.raises(ConfigError):
        persist.read_params(tmp_path / "p")


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert cli.main(["train", "--preset", "ex5", "--out", str(out), *TINY]) == 0
    return out


def test_train_outputs(trained):
    for name in ("loss_history.csv", "run_meta.json", "density.csv", "density.pgm", "params_u.json", "params_u.bin",
                 "params_rho.json", "params_rho.bin", "density.png", "loss_history.png"):
        assert (trained / name).is_file(), name
    hist = persist.read_loss_history(trained / "loss_history.csv")
    assert len(hist["epoch"]) == 4
    meta = json.loads((trained / "run_meta.json").read_text())
    assert meta["config"]["training"]["K"] == 2 and meta["epochs"] == 4
    assert meta["final"]["mu"] == 4.0 and np.isfinite(meta["final"]["lambda"])
    assert "version" in meta and meta["wall_time_seconds"] > 0


def test_train_is_byte_deterministic(trained, tmp_path):
    assert cli.main(["train", "--preset", "ex5", "--out", str(tmp_path), "--no-plots", *TINY]) == 0
    for name in ("loss_history.csv", "density.csv", "params_u.bin", "params_rho.bin", "density.pgm"):
        assert (tmp_path / name).read_bytes() == (trained / name).read_bytes(), name


def test_evaluate_matches_train(trained, tmp_path):
    assert cli.main(["evaluate", "--run", str(trained), "--out", str(tmp_path), "--no-plots"]) == 0
    ev = json.loads((tmp_path / "evaluation.json").read_text())
    meta = json.loads((trained / "run_meta.json").read_text())
    assert (tmp_path / "density.csv").read_bytes() == (trained / "density.csv").read_bytes()
    for key in ("lambda", "mass", "L_sum"):
        assert ev[key] == meta["final"][key]


def test_export_image_cli(trained, tmp_path):
    out = tmp_path / "x.pgm"
    assert cli.main(["export-image", "--density", str(trained / "density.csv"), "--out", str(out)]) == 0
    assert out.read_bytes() == (trained / "density.pgm").read_bytes()


def test_oracle_cli_unit_square(tmp_path):
    pts = geo.grid_points(SQUARE, 129)
    inside = SQUARE.contains(pts)
    persist.write_density_csv(tmp_path / "density.csv", pts, inside, np.zeros(len(pts)))
    args = ["oracle", "--density", str(tmp_path / "density.csv"), "--operator", "laplace", "--alpha", "0"]
    assert cli.main(args) == 0
    rep = json.loads((tmp_path / "oracle_report.json").read_text())
    assert rep["lambda"] == pytest.approx(2 * math.pi**2, rel=0.01)
    assert rep["grid"] == [129, 129] and rep["n_inside"] == 127 * 127


def test_oracle_cli_clamped_pinned(tmp_path):
    pts = geo.grid_points(SQUARE, 65)
    persist.write_density_csv(tmp_path / "d.csv", pts, SQUARE.contains(pts), np.ones(len(pts)))
    assert cli.main(["oracle", "--density", str(tmp_path / "d.csv"), "--operator", "clamped", "--out", str(tmp_path / "r.json")]) == 0
    lam = json.loads((tmp_path / "r.json").read_text())["lambda"]
    assert lam == pytest.approx(orc.fd_biharmonic_clamped_eig(SQUARE, 65).eigenvalue, rel=1e-12)
    assert lam == pytest.approx(1294.9314, rel=0.02)


def test_oracle_cli_projection(trained, tmp_path):
    out = tmp_path / "r.json"
    args = ["oracle", "--density", str(trained / "density.csv"), "--operator", "laplace", "--project-bangbang"]
    assert cli.main([*args, "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["projected"] and abs(rep["projected_mean"] - 1.5) < 0.05


def test_oracle_cli_rejects_disk_clamped(trained, capsys):
    rc = cli.main(["oracle", "--density", str(trained / "density.csv"), "--operator", "clamped"])
    assert rc == 1
    assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"


def test_list_presets(capsys):
    assert cli.main(["list-presets"]) == 0
    names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert names == list_presets()
    assert {"ex1a", "ex1b", "ex1c", "ex1d", "ex2", "ex3min", "ex3max", "ex10"} <= set(names)
    assert all(n.startswith("ex") for n in names) and len(names) == 14


def test_errors_are_json(tmp_path, capsys):
    assert cli.main(["train", "--preset", "nope", "--out", str(tmp_path)]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and "nope" in err["message"]
    assert cli.main(["train", "--preset", "ex5", "--out", str(tmp_path), "--set", "training.bogus=1"]) == 1
    assert "bogus" in json.loads(capsys.readouterr().err)["message"]


def test_abort_writes_error_json(tmp_path, monkeypatch, capsys):
    from spectraforge import trainer as tr
    from spectraforge.errors import DegenerateFieldError

    def boom(self, *a, **k):
        raise DegenerateFieldError("u vanished")

    monkeypatch.setattr(tr.Problem, "u_phase", boom)
    assert cli.main(["train", "--preset", "ex5", "--out", str(tmp_path), "--no-plots", *TINY]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "DegenerateFieldError"
    assert json.loads((tmp_path / "error.json").read_text())["error"] == "DegenerateFieldError"


def test_tiny_config_helper():
    cfg = tiny_config("ex3min")
    assert cfg.section("sampling")["grid"] == [12, 12, 12]
