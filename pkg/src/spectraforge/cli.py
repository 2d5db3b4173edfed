"""Command-line entry point: ``spectraforge {train,evaluate,oracle,export-image,list-presets}``."""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import geometry as geo
from . import oracle as orc
from . import persist
from .config import RunConfig, list_presets, load_config, load_preset
from .errors import ConfigError, SpectraForgeError
from .trainer import Problem, TrainingAborted, evaluate, train

log = logging.getLogger("spectraforge")

THREADS_ENV = "SPECTRAFORGE_THREADS"


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _load_run_config(args) -> RunConfig:
    if bool(args.config) == bool(args.preset):
        raise ConfigError("give exactly one of --config or --preset")
    cfg = load_config(args.config) if args.config else load_preset(args.preset)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    for item in args.set or []:
        key, _, value = item.partition("=")
        sec, _, name = key.partition(".")
        if not name:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        cfg = cfg.override(**{sec: {name: parsed}})
    return cfg


def _write_density(out: Path, ev, rho_lo, rho_hi, plots: bool, title: str) -> list[str]:
    written = []
    persist.write_density_csv(out / "density.csv", ev.grid_points, ev.inside, ev.rho)
    written.append("density.csv")
    if ev.grid_points.shape[1] == 2:
        img = persist.density_to_pgm(ev.grid_points, ev.inside, ev.rho, rho_lo, rho_hi)
        persist.write_pgm(out / "density.pgm", img)
        written.append("density.pgm")
    else:
        idx = np.stack(np.unravel_index(np.arange(ev.grid_points.shape[0]), ev.grid_shape), axis=1)
        with open(out / "density_voxels.csv", "w") as fh:
            fh.write("i,j,k,inside,rho\n")
            for (i, j, k), m, r in zip(idx, ev.inside, ev.rho):
                fh.write(f"{i},{j},{k},{int(m)},{persist.fmt(r)}\n")
        written.append("density_voxels.csv")
    if plots:
        from .plotting import plot_density

        plot_density(ev.grid_points, ev.inside, ev.rho, out / "density.png", rho_lo=rho_lo, rho_hi=rho_hi, title=title)
        written.append("density.png")
    return written


def _summary_line(pairs: dict) -> str:
    return " ".join(f"{k}={persist.fmt(v) if isinstance(v, (float, int, np.floating)) else v}" for k, v in pairs.items())


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prob = Problem(cfg)
    p = cfg.section("problem")

    def checkpoint(state):
        extra = {"outer": state["outer"], "epoch": state["epoch"], "mu": state["mu"], "lam": state["lam"]}
        if "aborted" in state:
            extra["aborted"] = state["aborted"]
        persist.write_params(out / "params_u", state["theta_u"], extra)
        persist.write_params(out / "params_rho", state["theta_rho"], extra)

    def progress(row):
        if args.verbose:
            log.info("epoch %d  L_sum=%.6g  lambda=%.6g  mass=%.5f", row["epoch"], row["L_sum"], row["lambda"], row["mass"])

    try:
        res = train(cfg, checkpoint=checkpoint, timing=args.timing, progress=progress, problem=prob)
    except TrainingAborted as exc:
        persist.write_json(out / "error.json", {"error": type(exc.cause).__name__, "message": str(exc.cause), **{k: exc.checkpoint[k] for k in ("outer", "epoch")}})
        raise
    persist.write_loss_history(out / "loss_history.csv", res.log.rows)
    with open(out / "timing.csv", "w") as fh:
        fh.write("epoch,seconds\n")
        for i, t in enumerate(res.timing, 1):
            fh.write(f"{i},{t:.6f}\n")
    ev = evaluate(cfg, res.theta_u, res.theta_rho, res.schedule, problem=prob)
    files = ["loss_history.csv", "timing.csv", "params_u.json", "params_u.bin", "params_rho.json", "params_rho.bin"]
    files += _write_density(out, ev, p["rho_lo"], p["rho_hi"], not args.no_plots, cfg.name)
    if not args.no_plots:
        from .plotting import plot_loss_history

        plot_loss_history(persist.read_loss_history(out / "loss_history.csv"), out / "loss_history.png", cfg.name)
        files.append("loss_history.png")
    fb = res.final
    meta = {
        "config": cfg.to_dict(),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_time_seconds": res.wall_time,
        "epochs": len(res.log),
        "n_interior": int(prob.x.shape[0]),
        "n_boundary": int(prob.boundary.n) if prob.boundary is not None else 0,
        "final": {**fb.row(), "mu": res.schedule.mu, "lambda_mult": res.schedule.lam},
        "notes": list(prob.notes),
        "files": files + ["run_meta.json"],
    }
    persist.write_json(out / "run_meta.json", meta)
    print(_summary_line({"preset": cfg.name, "epochs": len(res.log), "lambda": fb.lambda_estimate, "mass": fb.mass_mean, "L_b": fb.L_b, "out": str(out)}))
    return 0


def cmd_evaluate(args) -> int:
    run = Path(args.run)
    meta = json.loads((run / "run_meta.json").read_text())
    cfg = RunConfig.from_dict(meta["config"])
    tu = persist.read_params(run / "params_u")
    tr = persist.read_params(run / "params_rho")
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)
    prob = Problem(cfg)
    from .trainer import ConstraintSchedule

    c = cfg.section("constraint")
    final = meta.get("final", {})
    sched = ConstraintSchedule(c["mu0"], c["beta"], c["S"], c["method"], mu=final.get("mu"), lam=final.get("lambda_mult", 0.0))
    ev = evaluate(cfg, tu, tr, sched, problem=prob)
    p = cfg.section("problem")
    files = _write_density(out, ev, p["rho_lo"], p["rho_hi"], not args.no_plots, cfg.name)
    report = {**ev.breakdown.row(), "grid": list(ev.grid_shape), "files": files}
    persist.write_json(out / "evaluation.json", report)
    print(_summary_line({"lambda": ev.breakdown.lambda_estimate, "mass": ev.breakdown.mass_mean, "L_b": ev.breakdown.L_b}))
    return 0


def _bounds_from_meta(density: Path, rho_lo, rho_hi):
    meta = density.parent / "run_meta.json"
    prob = {}
    if meta.is_file():
        prob = json.loads(meta.read_text())["config"]["problem"]
    lo = rho_lo if rho_lo is not None else prob.get("rho_lo")
    hi = rho_hi if rho_hi is not None else prob.get("rho_hi")
    if lo is None or hi is None:
        raise ConfigError("density bounds unknown: pass --rho-lo/--rho-hi or keep run_meta.json next to the density")
    return float(lo), float(hi), prob


def cmd_oracle(args) -> int:
    density = Path(args.density)
    pts, inside, rho = persist.read_density_csv(density)
    grid = orc.MaskedGrid.from_samples(pts, inside, rho)
    values = grid.rho
    report: dict = {"operator": args.operator, "grid": list(grid.shape), "n_inside": grid.n_inside}
    if args.project_bangbang:
        lo, hi, prob = _bounds_from_meta(density, args.rho_lo, args.rho_hi)
        c_mean = args.c_mean if args.c_mean is not None else prob.get("c_mean")
        if c_mean is None:
            raise ConfigError("--project-bangbang needs --c-mean (or run_meta.json)")
        values = orc.threshold_density(values, float(c_mean), lo, hi)
        report.update({"projected": True, "c_mean": float(c_mean), "projected_mean": float(values.mean())})
    if args.operator == "laplace":
        alpha = args.alpha
        if alpha is None:
            _, _, prob = _bounds_from_meta(density, 0.0, 1.0)
            alpha = prob.get("alpha", 0.0)
        res = orc.fd_laplace_eig(grid, float(alpha), values)
        report["alpha"] = float(alpha)
    else:
        full_box = np.zeros(grid.shape, dtype=bool)
        full_box[(slice(1, -1),) * grid.dim] = True
        if grid.dim != 2 or not np.array_equal(grid.mask, full_box):
            raise ConfigError("the clamped oracle needs a 2D rectangle density (all strictly interior nodes inside)")
        dom = geo.Rectangle(grid.lo[0], grid.hi[0], grid.lo[1], grid.hi[1])
        res = orc.fd_biharmonic_clamped_eig(dom, grid.shape, values)
    report.update({"lambda": res.eigenvalue, "iterations": res.iterations, "residual": res.residual})
    out = Path(args.out) if args.out else density.parent / "oracle_report.json"
    persist.write_json(out, report)
    print(_summary_line({"operator": args.operator, "lambda": res.eigenvalue, "iterations": res.iterations}))
    return 0


def cmd_export_image(args) -> int:
    density = Path(args.density)
    pts, inside, rho = persist.read_density_csv(density)
    lo, hi, _ = _bounds_from_meta(density, args.rho_lo, args.rho_hi)
    z = None
    if args.slice:
        axis, _, value = args.slice.partition("=")
        if axis != "z" or not value:
            raise ConfigError("--slice must look like z=0.5")
        z = float(value)
    img = persist.density_to_pgm(pts, inside, rho, lo, hi, slice_axis_value=z)
    persist.write_pgm(args.out, img)
    print(_summary_line({"out": args.out, "width": img.shape[1], "height": img.shape[0]}))
    return 0


def cmd_list_presets(args) -> int:
    for name in list_presets():
        cfg = load_preset(name)
        print(f"{name}\t{cfg.doc.get('description', '')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spectraforge", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a preset or config file")
    t.add_argument("--config", help="run config JSON")
    t.add_argument("--preset", help="named preset, see list-presets")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--seed", type=int, help="override training.seed")
    t.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value (JSON literal)")
    t.add_argument("--timing", action="store_true", help="record wall-clock seconds in loss_history.csv")
    t.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="re-evaluate a finished run directory")
    e.add_argument("--run", required=True, help="directory written by train")
    e.add_argument("--out", help="output directory (default: the run directory)")
    e.add_argument("--no-plots", action="store_true")
    e.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("oracle", help="finite-difference eigenvalue of a density file")
    o.add_argument("--density", required=True)
    o.add_argument("--operator", choices=["laplace", "clamped"], required=True)
    o.add_argument("--alpha", type=float, help="potential weight (laplace); default from run_meta.json")
    o.add_argument("--project-bangbang", action="store_true", help="threshold to two values at the target mean first")
    o.add_argument("--c-mean", type=float)
    o.add_argument("--rho-lo", type=float)
    o.add_argument("--rho-hi", type=float)
    o.add_argument("--out", help="report path (default: oracle_report.json next to the density)")
    o.set_defaults(func=cmd_oracle)

    x = sub.add_parser("export-image", help="write a density file as an 8-bit PGM")
    x.add_argument("--density", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--slice", help="plane for 3D data, e.g. z=0.5")
    x.add_argument("--rho-lo", type=float)
    x.add_argument("--rho-hi", type=float)
    x.set_defaults(func=cmd_export_image)

    ls_ = sub.add_parser("list-presets", help="list bundled example presets")
    ls_.set_defaults(func=cmd_list_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except TrainingAborted as exc:
        print(json.dumps({"error": type(exc.cause).__name__, "message": str(exc.cause)}), file=sys.stderr)
        return 2
    except (SpectraForgeError, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
