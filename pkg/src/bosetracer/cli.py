"""Command-line entry point: ``bosetracer {simulate,reduced,kernel,analyze,sweep}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import analysis_report, extrapolate_limits, traveling_wave_distance, write_report
from .btf import read_btf
from .config import ConfigError, RunConfig, load_config, serialize_config
from .integrator import Trajectory, run_simulation
from .model import sound_speed

log = logging.getLogger("bosetracer")

COMMANDS = ("simulate", "reduced", "kernel", "analyze", "sweep")


def _prepare_out(out_dir: Path, cfg: RunConfig) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.ini").write_text(serialize_config(cfg))
    return out_dir


def _write_json(path: Path, obj) -> Path:
    from .analysis import _clean
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True))
    return path


def _run_direct(cfg: RunConfig, out: Path) -> Trajectory:
    traj = run_simulation(cfg.P0, cfg.X0, cfg.initial_field, cfg.params, cfg.grid,
                          cfg.dt, cfg.T_max, snapshot_every=cfg.snapshot_every or None,
                          snapshot_dir=out / "snapshots" if cfg.snapshot_every else None)
    traj.to_csv(out / "trajectory_direct.csv")
    return traj


def _run_reduced(cfg: RunConfig, out: Path) -> Trajectory:
    from .memory.reduced import solve_reduced
    traj = solve_reduced(cfg.P0, cfg.X0, cfg.initial_field, cfg.T_max, cfg.params,
                         dt=cfg.reduced_dt, record_parts=True)
    traj.to_csv(out / "trajectory_reduced.csv")
    parts = traj.meta["parts"]
    with open(out / "kernel_table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "D1_1", "D1_2", "D1_3", "D2_1", "D2_2", "D2_3",
                    "D3_1", "D3_2", "D3_3"])
        for t, row in zip(traj.t[1:], parts):
            w.writerow(["%.17g" % x for x in (t, *np.ravel(row))])
    return traj


def _compare(direct: Trajectory, reduced: Trajectory) -> dict:
    horizon = min(direct.T_wrap, direct.t[-1], reduced.t[-1])
    ts = reduced.t[reduced.t <= horizon + 1e-12]
    Pd = direct.momentum(ts)
    dP = np.linalg.norm(Pd - reduced.P[: ts.size], axis=1)
    scale = float(np.max(np.linalg.norm(Pd, axis=1)))
    return {"horizon": float(horizon), "max_abs_dP": float(dP.max()),
            "max_rel_dP": float(dP.max() / scale) if scale > 0 else 0.0,
            "n_points": int(ts.size)}


def cmd_simulate(cfg: RunConfig, out: Path, solver=None) -> dict:
    solver = solver or cfg.solver
    summary = {"solver": solver, "speed_margin": cfg.speed_margin}
    trajs = {}
    if solver in ("direct", "both"):
        trajs["direct"] = _run_direct(cfg, out)
        summary["energy_drift"] = trajs["direct"].energy_drift()
        summary["T_wrap"] = trajs["direct"].T_wrap
        summary["v_max"] = trajs["direct"].meta["v_max"]
    if solver in ("reduced", "both"):
        trajs["reduced"] = _run_reduced(cfg, out)
        summary["fixed_point_contraction"] = trajs["reduced"].meta["contraction_estimate"]
    if solver == "both":
        summary["comparison"] = _compare(trajs["direct"], trajs["reduced"])
        _write_json(out / "comparison.json", summary["comparison"])
    summary["max_speed_over_cs"] = {k: float(v.speed_over_cs.max()) for k, v in trajs.items()}
    _write_json(out / "summary.json", summary)
    return summary


def _kernel_path(cfg: RunConfig, out: Path):
    """Trajectory for kernel tables: a CSV if given, else uniform motion."""
    if cfg.trajectory:
        return Trajectory.from_csv(cfg.trajectory, cfg.M, sound_speed(cfg.params))
    T = max(cfg.times)
    t = np.linspace(0.0, T, 2)
    P = np.tile(np.asarray(cfg.P0, float), (2, 1))
    X = np.asarray(cfg.X0, float) + t[:, None] * P / cfg.M
    return Trajectory(t, X, P, np.zeros((2, 3)), np.zeros(2), cfg.M, sound_speed(cfg.params))


def cmd_kernel(cfg: RunConfig, out: Path) -> dict:
    from .memory.kernels import kernel_D1, kernel_D2, kernel_K
    params = cfg.params
    traj = _kernel_path(cfg, out)
    beta0 = cfg.initial_field
    oracle = None
    if cfg.oracle:
        from .memory.oracles import ExtrapolatedOracle
        oracle = ExtrapolatedOracle(params)
    header = ["t", "s"] + [f"D1_{i}" for i in (1, 2, 3)] + [f"D2_{i}" for i in (1, 2, 3)]
    header += [f"K_{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)]
    if oracle:
        header += ["rel_err_D1", "rel_err_D2", "rel_err_K"]
    rows = []
    for t in cfg.times:
        D1 = kernel_D1(t, traj, beta0, params)
        D2 = kernel_D2(t, traj, params)
        for frac in cfg.s_fractions:
            s = frac * t
            K = kernel_K(t, s, traj, params)
            row = [t, s, *D1, *D2, *K.ravel()]
            if oracle:
                dX0 = traj.position(t) - traj.position(0.0)
                errs = []
                for val, ref in ((D1, oracle.d1(t, dX0, beta0) if not beta0.is_zero else D1),
                                 (D2, oracle.d2(t, dX0, traj.momentum(0.0) / cfg.M)),
                                 (K, oracle.k(t - s, traj.position(t) - traj.position(s),
                                              traj.momentum(s) / cfg.M) if t > s else K)):
                    nrm = np.linalg.norm(ref)
                    errs.append(float(np.linalg.norm(val - ref) / nrm) if nrm > 0 else 0.0)
                row += errs
            rows.append(row)
    with open(out / "kernels.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["%.17g" % x for x in row])
    return {"rows": len(rows), "file": str(out / "kernels.csv")}


def cmd_analyze(cfg: RunConfig, out: Path) -> dict:
    if not cfg.trajectory:
        raise ConfigError("analyze needs a trajectory CSV", "trajectory")
    params = cfg.params
    traj = Trajectory.from_csv(cfg.trajectory, cfg.M, sound_speed(params))
    tw = None
    if cfg.snapshots:
        lim = extrapolate_limits(traj, params)
        v_inf = lim.P_inf / cfg.M
        tw = []
        for path in sorted(Path(cfg.snapshots).glob("*.btf")):
            h, _, meta = read_btf(path)
            if meta["t"] <= traj.T_wrap:
                tw.append((meta["t"], traveling_wave_distance(h, v_inf, params)))
    report = analysis_report(traj, params, tw_series=tw)
    write_report(report, out / "report.json")
    return report


def _sweep_one(args):
    cfg, run_dir = args
    run_dir = Path(run_dir)
    _prepare_out(run_dir, cfg)
    try:
        return {"dir": str(run_dir), "status": "ok", "summary": cmd_simulate(cfg, run_dir)}
    except Exception as exc:
        err = _error_payload(exc, "simulate", run_dir.name)
        _write_json(run_dir / "error.json", err)
        return {"dir": str(run_dir), "status": "error", "error": err}


def cmd_sweep(cfg: RunConfig, out: Path, workers: int = 1) -> dict:
    if not cfg.values:
        raise ConfigError("sweep needs a non-empty value list", "values")
    jobs = []
    for i, val in enumerate(cfg.values):
        if cfg.parameter == "speed_over_cs":
            sub = cfg.with_speed(val)
        else:
            sub = replace(cfg, **{cfg.parameter: val})
        jobs.append((sub, out / f"run_{i:03d}"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    manifest = {"parameter": cfg.parameter,
                "runs": [{"value": v, **r} for v, r in zip(cfg.values, results)]}
    _write_json(out / "manifest.json", manifest)
    if any(r["status"] != "ok" for r in results):
        raise RuntimeError(f"{sum(r['status'] != 'ok' for r in results)} sweep runs failed")
    return manifest


def _error_payload(exc, command, run_id) -> dict:
    payload = {"error": type(exc).__name__, "message": str(exc), "command": command,
               "run_id": run_id}
    for attr in ("key", "line", "state", "contraction"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    if not isinstance(exc, (ConfigError, OSError)):
        payload["traceback"] = traceback.format_exception_only(type(exc), exc)[-1].strip()
    return payload


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bosetracer",
                                description="Tracer particle in a Bose gas: simulation and analysis.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="INI configuration file")
    p.add_argument("--out", help="output directory (default $BT_OUT_DIR/<run id>)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for sweep")
    p.add_argument("--quiet", action="store_true", help="suppress progress logging")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    run_id = f"{args.command}-{time.strftime('%Y%m%d-%H%M%S')}"
    out = None
    try:
        cfg = load_config(args.config)
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1", "workers")
        out_root = args.out or cfg.output or None
        if out_root is None:
            out = Path(os.environ.get("BT_OUT_DIR", ".")) / run_id
        else:
            out = Path(out_root)
        run_id = out.name
        _prepare_out(out, cfg)
        for w in cfg.warnings:
            log.warning(w)
        log.info("speed margin c_s - |P0|/M = %.6g", cfg.speed_margin)
        if args.command == "simulate":
            result = cmd_simulate(cfg, out)
        elif args.command == "reduced":
            result = cmd_simulate(cfg, out, solver="reduced")
        elif args.command == "kernel":
            result = cmd_kernel(cfg, out)
        elif args.command == "analyze":
            result = cmd_analyze(cfg, out)
        else:
            result = cmd_sweep(cfg, out, args.workers)
    except Exception as exc:
        err = _error_payload(exc, args.command, run_id)
        from .analysis import _clean
        text = json.dumps(_clean(err), sort_keys=True)
        print(text, file=sys.stderr)
        if out is not None and out.exists():
            (out / "error.json").write_text(text)
        return 2 if isinstance(exc, ConfigError) else 1
    if not args.quiet:
        print(json.dumps({"status": "ok", "command": args.command, "out": str(out)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
