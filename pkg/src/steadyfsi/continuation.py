"""Parameter drivers: regularization continuation (eps, delta schedules)
and the stiffness sweep locating the threshold where the domain
correction deactivates.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics, eos, fem
from .errors import SolverError
from .fixedpoint import solve_fixed_point
from .geometry import l2_distance_ambient, lipschitz_norm

__all__ = [
    "ContinuationSchedule",
    "run_continuation",
    "find_kappa0",
    "default_schedule",
]

_PARAM_RANGES = {
    "eps": lambda v: 0.0 < v < 1.0,
    "delta": lambda v: 0.0 < v <= 1.0,
    "kappa": lambda v: v > 0.0,
}

DELTA_FLOOR = 1e-3


@dataclass(frozen=True)
class ContinuationSchedule:
    """Ordered parameter values with optional per-stage solver overrides."""

    param: str
    values: tuple
    overrides: tuple = ()

    def __post_init__(self):
        if self.param not in _PARAM_RANGES:
            raise ValueError(f"unknown continuation parameter {self.param!r}")
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        diffs = np.diff(vals)
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("schedule values must be strictly monotone")
        ok = _PARAM_RANGES[self.param]
        if not all(ok(v) for v in vals):
            raise ValueError(f"schedule leaves the legal range of {self.param}")
        if self.overrides and len(self.overrides) != len(vals):
            raise ValueError("per-stage overrides must match the schedule length")


def default_schedule(param, start, n_stages=4, floor=None):
    """Geometric halving schedule from ``start``, clipped at ``floor``."""
    vals = [start * 0.5**k for k in range(n_stages)]
    if floor is not None:
        vals = [max(v, floor) for v in vals]
        vals = sorted(set(vals), reverse=True)
    return ContinuationSchedule(param=param, values=tuple(vals))


def _stage_config(cfg, param, value, overrides):
    kw = {f"reg_{param}": value} if param in ("eps", "delta") else {
        "phys_kappa": value}
    kw.update(overrides or {})
    return cfg.with_overrides(**kw)


def _stage_row(cfg, report):
    state = report.state
    law, reg = cfg.law(), cfg.reg()
    bd = cfg.boundary_data()
    renorm = eos.build_renorm_pair(law, reg)
    en = diagnostics.energy_report(state.fluid, bd, renorm, reg, cfg=cfg)
    pr = diagnostics.pressure_report(state.fluid, law, reg)
    mb_abs, mb_rel = diagnostics.mass_balance(state.fluid, reg, bd, law)
    grad_rho_l2 = fem.h1_norm(state.grid, state.fluid.rho, seminorm=True)
    return {
        "param": cfg_param_value(cfg),
        "converged": report.converged,
        "h1_norm_u": en["h1_norm_u"],
        "energy_ratio": en["energy_ratio"],
        "pressure_l2": pr["pressure_l2"],
        "pressure_l32": pr["pressure_l32"],
        "rho_max": pr["rho_max"],
        "beta_margin": pr["beta_margin"],
        "lip_w": lipschitz_norm(state.w),
        "mass_balance_rel": mb_rel,
        "grad_rho_l2": grad_rho_l2,
        "delta34_grad_rho": reg.delta**0.75 * grad_rho_l2,
    }


def cfg_param_value(cfg):
    return {"eps": cfg.reg_eps, "delta": cfg.reg_delta,
            "kappa": cfg.phys_kappa}


def run_continuation(cfg, schedule, max_retries=2):
    """Warm-started solves along the schedule with a per-stage trend table.

    A stage whose damped iteration stalls is retried with the relaxation
    halved (the loop gain grows as the dissipation shrinks); a stage that
    still fails truncates the run.  Consecutive converged stages also
    carry the Cauchy distance of their zero-extended fields on the
    ambient lattice.
    """
    states = []
    rows = []
    prev = None
    for k, value in enumerate(schedule.values):
        overrides = schedule.overrides[k] if schedule.overrides else None
        cfg_k = _stage_config(cfg, schedule.param, value, overrides)
        init = prev.state if prev is not None and prev.converged else None
        try:
            report = solve_fixed_point(cfg_k, init=init)
            retries = 0
            while not report.converged and retries < max_retries:
                retries += 1
                cfg_k = cfg_k.with_overrides(
                    solver_relax=cfg_k.solver_relax / 2.0)
                report = solve_fixed_point(cfg_k, init=init)
        except SolverError as exc:
            rows.append({"param": {schedule.param: value}, "converged": False,
                         "error": str(exc)})
            break
        row = _stage_row(cfg_k, report)
        if retries:
            row["relax_used"] = cfg_k.solver_relax
        if prev is not None and prev.converged and report.converged:
            sa, sb = prev.state, report.state
            row["cauchy_rho"] = l2_distance_ambient(
                (sa.grid, sa.fluid.rho), (sb.grid, sb.fluid.rho))
            row["cauchy_u"] = l2_distance_ambient(
                (sa.grid, sa.fluid.u), (sb.grid, sb.fluid.u))
        rows.append(row)
        if not report.converged:
            break
        states.append(report.state)
        prev = report
    return states, rows


def _max_workers():
    raw = os.environ.get("STEADYFSI_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _solve_at_kappas(cfg, kappas):
    """Independent solves at several stiffness values, merged by order."""
    configs = [cfg.with_overrides(phys_kappa=float(k)) for k in kappas]
    workers = min(_max_workers(), len(configs))
    if workers == 1:
        return [solve_fixed_point(c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(solve_fixed_point, configs))


def find_kappa0(cfg, kappa_lo, kappa_hi, rel_width=0.05):
    """Bisection for the smallest stiffness at which the converged
    deflection's Lipschitz norm drops below the 1/4 barrier.

    The predicate is "converged and lipschitz_norm(w) <= 1/4"; it must
    hold at kappa_hi.  Returns (kappa0, sweep rows); rows carry kappa,
    the norm, kappa times the norm, the convergence flag and the mean
    density margin.
    """
    if not 0.0 < kappa_lo < kappa_hi:
        raise ValueError("need 0 < kappa_lo < kappa_hi")
    rows = []

    def probe(kappa, report=None):
        if report is None:
            report = _solve_at_kappas(cfg, [kappa])[0]
        lip = lipschitz_norm(report.state.w)
        pr = diagnostics.pressure_report(
            report.state.fluid, cfg.law(), cfg.reg())
        rows.append({
            "kappa": float(kappa),
            "lip_norm": lip,
            "kappa_times_lip": float(kappa) * lip,
            "converged": report.converged,
            "beta_margin": pr["beta_margin"],
        })
        return report.converged and lip <= 0.25

    rep_lo, rep_hi = _solve_at_kappas(cfg, [kappa_lo, kappa_hi])
    ok_hi = probe(kappa_hi, rep_hi)
    if not ok_hi:
        raise ValueError(
            f"predicate fails at kappa_hi={kappa_hi}; widen the bracket")
    ok_lo = probe(kappa_lo, rep_lo)
    if ok_lo:
        rows.sort(key=lambda r: r["kappa"])
        return kappa_lo, rows

    lo, hi = kappa_lo, kappa_hi
    while (hi - lo) / hi > rel_width:
        mid = float(np.sqrt(lo * hi))
        if probe(mid):
            hi = mid
        else:
            lo = mid
    rows.sort(key=lambda r: r["kappa"])
    return hi, rows
