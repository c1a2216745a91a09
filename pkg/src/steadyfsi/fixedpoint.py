"""Coupled fixed-point operator (continuity -> momentum -> beam, each on
the corrected domain of the previous beam iterate) and its solution by
damped Picard iteration with an optional homotopy in the load factor.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics, discrete, fem
from .errors import SolverError
from .geometry import BeamDisplacement, build_grid, correct_displacement, lipschitz_norm, f_cor
from .operators import velocity_extension

__all__ = [
    "IterateState",
    "FixedPointReport",
    "initial_state",
    "apply_T",
    "solve_fixed_point",
    "theta_homotopy",
    "mixed_distance",
]

BLOWOUT_LIMIT = 10.0  # abort when max |w| runs this far past the barrier


@dataclass(frozen=True, eq=False)
class IterateState:
    """One iterate of the coupled map: fluid state, beam deflection, the
    step residual against the previous iterate and the load scale."""

    fluid: discrete.FluidState
    w: BeamDisplacement
    residual: float
    iteration: int = 0
    bc_scale: float = 1.0

    def __post_init__(self):
        if not (self.residual >= 0.0 and math.isfinite(self.residual)):
            raise ValueError(f"residual must be finite and >= 0, got {self.residual}")

    @property
    def w_cor(self):
        """Corrected deflection, recomputed on access (never cached)."""
        return correct_displacement(self.w)

    @property
    def grid(self):
        return self.fluid.grid


def _resample_column_fields(grid_old, values, grid_new):
    """Transfer nodal fields between two shear-mapped grids of the same
    resolution by per-column linear interpolation in the physical height."""
    if (grid_old.nx, grid_old.nz) != (grid_new.nx, grid_new.nz):
        raise SolverError("field transfer requires matching grid resolution",
                          stage="transfer")
    values = np.asarray(values, dtype=float)
    ncomp = 1 if values.ndim == 1 else values.shape[1]
    nzp = grid_old.nz + 1
    src = values.reshape(grid_old.nx + 1, nzp, ncomp)
    out = np.empty_like(src)
    for i in range(grid_old.nx + 1):
        zo = grid_old.z[i]
        zn = grid_new.z[i]
        for c in range(ncomp):
            out[i, :, c] = np.interp(zn, zo, src[i, :, c])
    out = out.reshape(-1, ncomp)
    return out[:, 0] if ncomp == 1 else out


def _grid_from_config(cfg, w_cor):
    return build_grid(w_cor, cfg.grid_nx, cfg.grid_nz, gamma=cfg.geom_gamma,
                      sigma_in=cfg.geom_sigma_in, sigma_out=cfg.geom_sigma_out)


def initial_state(cfg, theta=1.0):
    """Zero deflection, extension velocity, and the matching density."""
    bd = cfg.boundary_data()
    gamma = cfg.geom_gamma
    nx = cfg.grid_nx
    m = int(round(gamma[1] * nx)) - int(round(gamma[0] * nx)) + 1
    w0 = BeamDisplacement.zero(m, gamma)
    grid = _grid_from_config(cfg, w0)
    ext = velocity_extension(bd, grid)
    u0 = theta * ext.nodal(grid)
    rho0, _ = solve_rho(cfg, u0, grid)
    fluid = discrete.FluidState(grid=grid, rho=rho0, u=u0)
    res0 = fem.h1_norm(grid, u0) + discrete.beam_h2_norm(w0)
    return IterateState(fluid=fluid, w=w0, residual=res0, iteration=0,
                        bc_scale=theta)


def solve_rho(cfg, u_tilde, grid):
    return discrete.solve_continuity(
        u_tilde, grid, cfg.reg(), cfg.boundary_data(), cfg.law(),
        picard_tol=cfg.solver_picard_tol, picard_max=cfg.solver_picard_max)


def apply_T(prev, cfg, theta=1.0):
    """One application of the coupled map, scaled by the homotopy factor.

    Builds the grid from the corrected previous deflection, transfers the
    previous fields onto it, then solves continuity, momentum, and the
    beam load problem in that order.  The returned iterate carries the
    step residual in the mixed velocity/deflection norm.
    """
    law = cfg.law()
    reg = cfg.reg()
    params = cfg.params()
    bd = cfg.boundary_data()

    w_cor = correct_displacement(prev.w)
    try:
        grid = _grid_from_config(cfg, w_cor)
    except ValueError as exc:
        raise SolverError(str(exc), stage="grid")

    u_tilde = _resample_column_fields(prev.grid, prev.fluid.u, grid)
    u_tilde = discrete.impose_velocity_bc(u_tilde, grid, bd, prev.bc_scale)

    rho, cont_info = discrete.solve_continuity(
        u_tilde, grid, reg, bd, law,
        picard_tol=cfg.solver_picard_tol, picard_max=cfg.solver_picard_max)
    if not cont_info["converged"]:
        raise SolverError(
            f"continuity Picard stalled at change {cont_info['change']:.3e}",
            stage="continuity", residual=cont_info["change"])

    u, _mom_info = discrete.solve_momentum(rho, u_tilde, grid, params, reg,
                                           bd, law, bc_scale=1.0)

    system = discrete._momentum_system(rho, u_tilde, grid, params, reg, law)
    ell = discrete.assemble_plate_load(rho, u, u_tilde, grid, params, reg,
                                       law, system=system)
    h_beam = (grid.gamma[1] - grid.gamma[0]) / (ell.size - 1)
    w_new = discrete.solve_beam(ell / h_beam, params.kappa, grid.gamma)

    u_theta = theta * u
    w_theta = w_new.with_values(theta * w_new.values)
    residual = (fem.h1_norm(grid, u_theta - u_tilde)
                + discrete.beam_h2_norm(w_theta.with_values(
                    w_theta.values - _beam_on(prev.w, w_theta))))
    fluid = discrete.FluidState(grid=grid, rho=rho, u=u_theta)
    return IterateState(fluid=fluid, w=w_theta, residual=float(residual),
                        iteration=prev.iteration + 1, bc_scale=theta)


def _beam_on(w_src, w_like):
    """Values of one beam deflection sampled at another's nodes."""
    if w_src.n_nodes == w_like.n_nodes and w_src.gamma_lo == w_like.gamma_lo \
            and w_src.gamma_hi == w_like.gamma_hi:
        return w_src.values
    return w_src.eval(w_like.x)


@dataclass
class FixedPointReport:
    state: IterateState
    converged: bool
    iterations: int
    residual_history: list = field(default_factory=list)
    records: list = field(default_factory=list)
    message: str = ""
    on_correction_kink: bool = False


def _iteration_record(s, cfg):
    lip = lipschitz_norm(s.w)
    mb_abs, mb_rel = diagnostics.mass_balance(s.fluid, cfg.reg(),
                                              cfg.boundary_data())
    return {
        "iter": s.iteration,
        "residual": s.residual,
        "max_w": float(np.abs(s.w.values).max()),
        "lip_w": lip,
        "f_cor": f_cor(lip),
        "mass_balance": mb_abs,
    }


def solve_fixed_point(cfg, init=None, theta=1.0):
    """Damped iteration s <- (1 - omega) s + omega T(s).

    Damping applies to the velocity and the deflection; the density is
    recomputed by every application of the map.  Non-convergence returns
    the best iterate with the flag cleared, never raises.
    """
    omega = cfg.solver_relax
    tol = cfg.solver_tol
    s = initial_state(cfg, theta) if init is None else init
    report = FixedPointReport(state=s, converged=False, iterations=0)
    bd = cfg.boundary_data()

    best = None
    for _ in range(cfg.solver_max_outer):
        s_raw = apply_T(s, cfg, theta)
        report.iterations = s_raw.iteration
        report.residual_history.append(s_raw.residual)
        report.records.append(_iteration_record(s_raw, cfg))
        if best is None or s_raw.residual <= best.residual:
            best = s_raw
        if s_raw.residual <= tol:
            report.state = s_raw
            report.converged = True
            lip = lipschitz_norm(s_raw.w)
            report.on_correction_kink = abs(lip - 0.25) <= 0.01
            report.message = "converged"
            return report
        if float(np.abs(s_raw.w.values).max()) > BLOWOUT_LIMIT:
            report.state = best
            report.message = "blow-out guard tripped"
            return report
        s = _blend(s, s_raw, omega, cfg, bd, theta)

    report.state = best
    report.message = "max_outer reached"
    return report


def _blend(prev, raw, omega, cfg, bd, theta):
    """Damped update on the raw map output's grid."""
    w_vals = (1.0 - omega) * _beam_on(prev.w, raw.w) + omega * raw.w.values
    w_b = raw.w.with_values(w_vals)
    u_prev = _resample_column_fields(prev.grid, prev.fluid.u, raw.grid)
    u_b = (1.0 - omega) * u_prev + omega * raw.fluid.u
    u_b = discrete.impose_velocity_bc(u_b, raw.grid, bd, theta)
    fluid = discrete.FluidState(grid=raw.grid, rho=raw.fluid.rho, u=u_b)
    return IterateState(fluid=fluid, w=w_b, residual=raw.residual,
                        iteration=raw.iteration, bc_scale=theta)


def theta_homotopy(cfg, theta_schedule):
    """Solve (u, w) = theta T(u, w) along an increasing schedule from 0 to
    1, warm-starting every stage from the (rescaled) previous one."""
    sched = [float(t) for t in theta_schedule]
    if sched != sorted(set(sched)) or sched[0] != 0.0 or sched[-1] != 1.0:
        raise ValueError("theta schedule must increase strictly from 0 to 1")

    stage_reports = []
    s = None
    theta_prev = None
    for theta in sched:
        if s is None:
            init = initial_state(cfg, theta)
        else:
            init = _rescale_state(s, theta_prev, theta, cfg)
        rep = solve_fixed_point(cfg, init=init, theta=theta)
        stage_reports.append(rep)
        if not rep.converged:
            rep.message = f"theta={theta}: {rep.message}"
            return rep.state, stage_reports
        s = rep.state
        theta_prev = theta
    return s, stage_reports


def _rescale_state(s, theta_old, theta_new, cfg):
    factor = theta_new / theta_old if theta_old and theta_old > 0.0 else 1.0
    bd = cfg.boundary_data()
    u = discrete.impose_velocity_bc(factor * s.fluid.u, s.grid, bd, theta_new)
    fluid = discrete.FluidState(grid=s.grid, rho=s.fluid.rho, u=u)
    w = s.w.with_values(factor * s.w.values)
    return IterateState(fluid=fluid, w=w, residual=s.residual,
                        iteration=0, bc_scale=theta_new)


def mixed_distance(sa, sb):
    """H1 velocity distance plus H2 deflection distance between states."""
    grid = sa.grid
    ub = _resample_column_fields(sb.grid, sb.fluid.u, grid)
    du = sa.fluid.u - ub
    dw = sa.w.with_values(sa.w.values - _beam_on(sb.w, sa.w))
    return fem.h1_norm(grid, du) + discrete.beam_h2_norm(dw)
