"""Command-line entry point: run orchestration and artifact emission.

Subcommands: solve, continue-eps, continue-delta, sweep-kappa, diagnose.
Every artifact is written atomically (temp file + rename); summaries are
deterministic for a fixed config and seed.  Exit status: 0 converged,
2 flagged non-convergence, 1 hard error.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import continuation, diagnostics, fixedpoint
from .config import parse_config
from .errors import ConfigError, SolverError

__all__ = ["main"]


def _atomic_write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path, payload):
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows):
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_fields(out_dir, state):
    grid = state.grid
    xz = grid.node_xz()
    rows = np.column_stack([xz[:, 0], xz[:, 1], state.rho, state.u])
    _write_csv(os.path.join(out_dir, "fields.csv"), "x,z,rho,ux,uz", rows)


def _write_beam(out_dir, w):
    from .geometry import correct_displacement

    w_cor = correct_displacement(w)
    rows = np.column_stack([w.x, w.values, w_cor.values])
    _write_csv(os.path.join(out_dir, "beam.csv"), "x,w,w_cor", rows)


def _write_run_log(out_dir, records):
    lines = []
    for r in records:
        lines.append(
            f"iter={r['iter']:4d} residual={r['residual']:.6e} "
            f"max_w={r['max_w']:.6e} lip_w={r['lip_w']:.6e} "
            f"f_cor={r['f_cor']:.6e} mass_balance={r['mass_balance']:.3e}")
    _atomic_write(os.path.join(out_dir, "run.log"), "\n".join(lines) + "\n")


def _solve_artifacts(cfg, report, out_dir):
    state = report.state
    summary = {
        "config": cfg.to_dict(),
        "converged": report.converged,
        "iterations": report.iterations,
        "final_residual": report.residual_history[-1]
        if report.residual_history else state.residual,
        "message": report.message,
        "on_correction_kink": report.on_correction_kink,
        "records": report.records,
    }
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    _write_fields(out_dir, state.fluid)
    _write_beam(out_dir, state.w)
    _write_run_log(out_dir, report.records)
    return summary


def _cmd_solve(cfg, out_dir):
    report = fixedpoint.solve_fixed_point(cfg)
    _solve_artifacts(cfg, report, out_dir)
    return 0 if report.converged else 2


def _cmd_diagnose(cfg, out_dir):
    report = fixedpoint.solve_fixed_point(cfg)
    _solve_artifacts(cfg, report, out_dir)
    rep = diagnostics.diagnose(report.state.fluid, report.state.w, cfg)
    _write_json(os.path.join(out_dir, "diagnostics.json"), rep.to_dict())
    return 0 if report.converged else 2


def _cmd_continue(cfg, out_dir, param):
    start = cfg.reg_eps if param == "eps" else cfg.reg_delta
    floor = continuation.DELTA_FLOOR if param == "delta" else None
    schedule = continuation.default_schedule(param, start, floor=floor)
    states, rows = continuation.run_continuation(cfg, schedule)
    _write_json(os.path.join(out_dir, "continuation.json"), {
        "config": cfg.to_dict(),
        "param": param,
        "values": list(schedule.values),
        "rows": rows,
    })
    if states:
        last = states[-1]
        _write_fields(out_dir, last.fluid)
        _write_beam(out_dir, last.w)
    all_ok = len(states) == len(schedule.values)
    return 0 if all_ok else 2


def _cmd_sweep_kappa(cfg, out_dir, kappa_lo, kappa_hi):
    kappa0, rows = continuation.find_kappa0(cfg, kappa_lo, kappa_hi)
    header = "kappa,lip_norm,kappa_times_lip,converged,beta_margin"
    table = [(r["kappa"], r["lip_norm"], r["kappa_times_lip"],
              r["converged"], r["beta_margin"]) for r in rows]
    _write_csv(os.path.join(out_dir, "sweep_kappa.csv"), header, table)
    _write_json(os.path.join(out_dir, "kappa0.json"), {
        "config": cfg.to_dict(),
        "kappa0": kappa0,
        "rows": rows,
    })
    return 0 if all(r["converged"] for r in rows) else 2


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="steadyfsi",
        description="Steady flow/beam interaction laboratory")
    parser.add_argument("command", choices=[
        "solve", "continue-eps", "continue-delta", "sweep-kappa", "diagnose"])
    parser.add_argument("--config", default=None, help="path to an INI config")
    parser.add_argument("--out-dir", default=None, help="artifact directory")
    parser.add_argument("--seed", type=int, default=None, help="run seed")
    parser.add_argument("--kappa-lo", type=float, default=1e-4)
    parser.add_argument("--kappa-hi", type=float, default=10.0)
    args = parser.parse_args(argv)

    overrides = {}
    if args.out_dir is not None:
        overrides["run_out_dir"] = args.out_dir
    if args.seed is not None:
        overrides["run_seed"] = args.seed

    try:
        cfg = parse_config(args.config, overrides=overrides)
        out_dir = cfg.run_out_dir
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "solve":
            return _cmd_solve(cfg, out_dir)
        if args.command == "diagnose":
            return _cmd_diagnose(cfg, out_dir)
        if args.command == "continue-eps":
            return _cmd_continue(cfg, out_dir, "eps")
        if args.command == "continue-delta":
            return _cmd_continue(cfg, out_dir, "delta")
        if args.command == "sweep-kappa":
            return _cmd_sweep_kappa(cfg, out_dir, args.kappa_lo, args.kappa_hi)
        raise ConfigError(f"unknown command {args.command}")
    except (ConfigError, SolverError, ValueError) as exc:
        print(f"steadyfsi: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
