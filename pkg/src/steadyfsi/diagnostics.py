"""Numerical verification of the identities and a-priori estimates behind
the construction: mass balance, energy and dissipation functionals,
pressure bounds, the inverse-divergence pairing ledger, and weak-form
residuals against banks of smooth test functions.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from . import discrete, eos, fem
from .geometry import build_grid, build_wmax, correct_displacement, lipschitz_norm
from .operators import bogovskii, velocity_extension

__all__ = [
    "DiagnosticsReport",
    "mass_balance",
    "energy_report",
    "pressure_report",
    "bogovskii_pressure_test",
    "weak_residuals",
    "theta_pairing_ratio",
    "interface_traction_load",
    "diagnose",
]


def mass_balance(state, reg, bd, law=None):
    """Tested-with-one identity of the damped continuity equation.

    Returns (absolute, relative) values of
    delta*int(rho) + int_out T(rho) u.n + int_in rho_B u.n,
    the relative one scaled by the inflow flux magnitude.
    """
    grid = state.grid
    rho_bar = law.rho_bar if law is not None else 1.0
    b_in, w_out = discrete.boundary_flux_weights(grid, bd)
    flux_in = -float(b_in.sum())
    flux_out = float(w_out @ eos.cutoff_T(state.rho, rho_bar))
    absolute = reg.delta * fem.integrate(grid, state.rho) + flux_out + flux_in
    scale = abs(flux_in)
    relative = absolute / scale if scale > 0.0 else 0.0
    return float(absolute), float(relative)


def widest_domain_grid(cfg):
    """Grid of the widest bounding domain (floor lowered by the bump that
    dominates every corrected deflection)."""
    wmax = build_wmax(cfg.geom_margin, gamma=cfg.geom_gamma)
    wide = wmax.with_values(-wmax.values)
    return build_grid(wide, cfg.grid_nx, cfg.grid_nz,
                      gamma=(wide.gamma_lo, wide.gamma_hi),
                      sigma_in=cfg.geom_sigma_in, sigma_out=cfg.geom_sigma_out,
                      max_deflection=0.5)


def energy_report(state, bd, renorm, reg, ub_h1=None, cfg=None):
    """Velocity norm, its ratio to the extension norm over the widest
    domain, and the density dissipation functional."""
    grid = state.grid
    h1_u = fem.h1_norm(grid, state.u)
    if ub_h1 is None:
        ext = velocity_extension(bd, grid)
        ref_grid = widest_domain_grid(cfg) if cfg is not None else grid
        ub_h1 = ext.h1_norm(ref_grid)
    ratio = h1_u / ub_h1 if ub_h1 > 0.0 else 0.0

    q = fem.quad_cache(grid)
    rho_q = q.interp(state.rho)
    grad_rho = q.grad_interp(state.rho)
    gpp = renorm.gpp_at(np.maximum(rho_q, renorm.rho[0]))
    gp = renorm.gp_at(np.maximum(rho_q, renorm.rho[0]))
    gpp_term = reg.delta * float((q.detw * gpp * (grad_rho**2).sum(-1)).sum())
    rho_gp_term = reg.delta * float((q.detw * rho_q * gp).sum())
    return {
        "h1_norm_u": float(h1_u),
        "ub_h1_norm": float(ub_h1),
        "energy_ratio": float(ratio),
        "dissipation_gpp_term": gpp_term,
        "dissipation_rho_gp_term": rho_gp_term,
    }


def _clip_to_law(rho, law):
    return np.clip(rho, 0.0, law.rho_bar * (1.0 - 1e-12))


def pressure_report(state, law, reg):
    """Pressure norms, density bounds and the mean-density margin
    beta = rho_bar * |domain| / int(rho)."""
    grid = state.grid
    q = fem.quad_cache(grid)
    rho_q = _clip_to_law(q.interp(state.rho), law)
    p_q = eos.eval_p(law, rho_q)
    w = q.detw
    p_l2 = float(np.sqrt((w * p_q**2).sum()))
    p_l32 = float(((w * p_q**1.5).sum()) ** (2.0 / 3.0))
    press_est = float((w * (p_q + np.sqrt(reg.delta) * rho_q) * p_q**0.5).sum())
    total_rho = fem.integrate(grid, state.rho)
    beta = law.rho_bar * q.volume / total_rho if total_rho > 0.0 else np.inf
    return {
        "pressure_l2": p_l2,
        "pressure_l32": p_l32,
        "press_est_functional": press_est,
        "rho_max": float(state.rho.max()),
        "rho_min": float(state.rho.min()),
        "beta_margin": float(beta),
    }


def _momentum_pairings(state, u_tilde, law, reg, params, v):
    """Every pairing of the momentum weak form against the test field v,
    with the assembly quadrature so the ledger closes algebraically."""
    grid = state.grid
    q = fem.quad_cache(grid)
    w = q.detw
    rho_q = np.maximum(q.interp(state.rho), 0.0)
    grad_rho = q.grad_interp(state.rho)
    u_q = q.interp(state.u)
    ut_q = q.interp(u_tilde)
    gu = q.grad_interp(state.u)
    v_q = q.interp(v)
    gv = q.grad_interp(v)

    t_rho = eos.cutoff_T(rho_q, law.rho_bar)
    p_q = eos.eval_p_eps_delta(law, reg, rho_q)

    conv = float((w * t_rho * np.einsum("eqc,eql,eqcl->eq", ut_q, ut_q, gv)).sum())
    press = float((w * p_q * np.trace(gv, axis1=2, axis2=3)).sum())
    sym = gu + np.swapaxes(gu, 2, 3)
    visc = float((w * (params.mu * np.einsum("eqcl,eqcl->eq", sym, gv)
                       + params.lam * np.trace(gu, axis1=2, axis2=3)
                       * np.trace(gv, axis1=2, axis2=3))).sum())
    grad_ru = rho_q[:, :, None, None] * gu + ut_q[:, :, :, None] * grad_rho[:, :, None, :]
    dgrad = reg.delta * float((w * np.einsum("eqcl,eqcl->eq", grad_ru, gv)).sum())
    dzero = reg.delta * float((w * rho_q * np.einsum("eqc,eqc->eq", u_q, v_q)).sum())
    return {
        "convective": conv,
        "pressure_pairing": press,
        "viscous": visc,
        "delta_gradient": dgrad,
        "delta_zero_order": dzero,
    }


def bogovskii_pressure_test(state, law, reg, params, bd, alpha=0.5):
    """Pair the momentum equation with the inverse divergence of
    p(rho)^alpha minus its mean and ledger every term.

    The closure entry is the weak momentum identity tested with that
    field; it vanishes within the momentum solver's own residual.
    """
    grid = state.grid
    q = fem.quad_cache(grid)
    rho_cl = _clip_to_law(state.rho, law)
    f = eos.eval_p(law, rho_cl) ** alpha
    v, constraint_res = bogovskii(f, grid)

    terms = _momentum_pairings(state, state.u, law, reg, params, v)
    closure = (terms["pressure_pairing"] + terms["convective"]
               - terms["viscous"] - terms["delta_gradient"]
               - terms["delta_zero_order"])
    gross = sum(abs(t) for t in terms.values())
    terms["closure_residual"] = float(closure)
    terms["closure_residual_rel"] = float(abs(closure) / max(gross, 1e-30))
    terms["constraint_residual"] = float(constraint_res)

    rho_q = _clip_to_law(q.interp(state.rho), law)
    p_true = eos.eval_p(law, rho_q)
    p_reg = eos.eval_p_eps_delta(law, reg, np.maximum(q.interp(state.rho), 0.0))
    f_q = p_true**alpha
    w = q.detw
    mean_f = (w * f_q).sum() / q.volume
    terms["press_est_lhs"] = float(
        (w * (p_true + np.sqrt(reg.delta) * rho_q) * f_q).sum())
    terms["mean_term"] = float(mean_f * (w * p_reg).sum())
    terms["absorbed_bound"] = float(0.5 * (w * p_true ** (3.0 * alpha)).sum())
    zero_mean_pairing = float((w * p_reg * (f_q - mean_f)).sum())
    terms["projection_gap"] = float(
        abs(terms["pressure_pairing"] - zero_mean_pairing))
    terms["alpha"] = float(alpha)
    return terms


def _bump(xy, center, radius):
    """C1 compactly supported polynomial bump (1 - s^2)^2, with gradient."""
    d = xy - center
    s2 = (d**2).sum(-1) / radius**2
    inside = s2 < 1.0
    val = np.where(inside, (1.0 - s2) ** 2, 0.0)
    coef = np.where(inside, -4.0 * (1.0 - s2) / radius**2, 0.0)
    grad = coef[..., None] * d
    return val, grad


def _sample_bumps(grid, rng, n, avoid_sigma_out=False, interior=False):
    """Deterministic bank of bump centers/radii inside the deformed domain."""
    out = []
    attempts = 0
    while len(out) < n and attempts < 100 * n:
        attempts += 1
        r = rng.uniform(0.1, 0.3)
        xc = rng.uniform(0.05, 0.95)
        ec = rng.uniform(0.05, 0.95)
        wx = np.interp(xc, grid.x, grid.w_hat)
        zc = wx + ec * (1.0 - wx)
        if interior:
            if min(xc, 1.0 - xc, zc - wx, 1.0 - zc) <= r:
                continue
        if avoid_sigma_out:
            zlo, zhi = grid.sigma_out
            dz = max(zlo - zc, zc - zhi, 0.0)
            if np.hypot(1.0 - xc, dz) <= r:
                continue
        out.append((np.array([xc, zc]), r))
    if len(out) < n:
        raise RuntimeError("bump sampling failed to fill the bank")
    return out


def weak_residuals(state, params, law, reg, bd, bank_seed=0, n_bumps=64,
                   uncorrected_w=None):
    """Worst normalized weak-form residuals over seeded banks of smooth
    bumps: the damped continuity form, the regularized momentum form with
    interior test fields, and the coupled beam pairing.

    With ``uncorrected_w`` the fields are transferred onto the domain of
    the raw (uncorrected) deflection before testing.
    """
    grid = state.grid
    rho, u = state.rho, state.u
    if uncorrected_w is not None:
        from .fixedpoint import _resample_column_fields

        grid_u = build_grid(uncorrected_w, grid.nx, grid.nz,
                            gamma=grid.gamma, sigma_in=grid.sigma_in,
                            sigma_out=grid.sigma_out)
        rho = _resample_column_fields(grid, rho, grid_u)
        u = _resample_column_fields(grid, u, grid_u)
        grid = grid_u

    q = fem.quad_cache(grid, order=3)
    xy = np.stack([q.xq, q.zq], axis=-1)
    w = q.detw
    rho_q = q.interp(rho)
    grad_rho = q.grad_interp(rho)
    u_q = q.interp(u)
    gu = q.grad_interp(u)
    t_rho = eos.cutoff_T(rho_q, law.rho_bar)
    p_q = eos.eval_p_eps_delta(law, reg, np.maximum(rho_q, 0.0))

    rng = np.random.default_rng(bank_seed)
    cont_bank = _sample_bumps(grid, rng, n_bumps, avoid_sigma_out=True)
    mom_bank = _sample_bumps(grid, rng, n_bumps, interior=True)

    pair_in, zq_in, wq_in, hat_in = fem.edge_quadrature(
        grid, "left", (min(grid.sigma_in[0], bd.z_lo),
                       max(grid.sigma_in[1], bd.z_hi)))
    pair_out, zq_out, wq_out, hat_out = fem.edge_quadrature(
        grid, "right", (min(grid.sigma_out[0], bd.z_lo),
                        max(grid.sigma_out[1], bd.z_hi)))
    rho_nodal = rho.reshape(grid.nx + 1, grid.nz + 1)
    local_out = pair_out - grid.nx * (grid.nz + 1)
    rho_edge_out = np.einsum("sqa,sa->sq", hat_out, rho_nodal[-1][local_out])

    cont_max = 0.0
    for center, radius in cont_bank:
        val, grad = _bump(xy, center, radius)
        diff = reg.delta * float((w * (grad_rho * grad).sum(-1)).sum())
        mass = reg.delta * float((w * rho_q * val).sum())
        conv = -float((w * t_rho * (u_q * grad).sum(-1)).sum())
        phi_in = _bump(np.stack([np.zeros_like(zq_in), zq_in], -1),
                       center, radius)[0]
        bc_in = float((wq_in * (-bd.phi(zq_in)) * bd.rho_in * phi_in).sum())
        phi_out = _bump(np.stack([np.ones_like(zq_out), zq_out], -1),
                        center, radius)[0]
        t_edge = eos.cutoff_T(rho_edge_out, law.rho_bar)
        bc_out = float((wq_out * bd.phi(zq_out) * t_edge * phi_out).sum())
        resid = diff + mass + conv + bc_in + bc_out
        gross = sum(map(abs, (diff, mass, conv, bc_in, bc_out)))
        cont_max = max(cont_max, abs(resid) / max(gross, 1e-30))

    mom_max = 0.0
    for center, radius in mom_bank:
        for comp in (0, 1):
            val, grad = _bump(xy, center, radius)
            gv = np.zeros(grad.shape[:-1] + (2, 2))
            gv[..., comp, :] = grad
            v_q = np.zeros(val.shape + (2,))
            v_q[..., comp] = val
            conv = float((w * t_rho * np.einsum("eqc,eql,eqcl->eq",
                                                u_q, u_q, gv)).sum())
            press = float((w * p_q * np.trace(gv, axis1=2, axis2=3)).sum())
            sym = gu + np.swapaxes(gu, 2, 3)
            visc = float((w * (params.mu * np.einsum("eqcl,eqcl->eq", sym, gv)
                               + params.lam * np.trace(gu, axis1=2, axis2=3)
                               * np.trace(gv, axis1=2, axis2=3))).sum())
            grad_ru = (rho_q[:, :, None, None] * gu
                       + u_q[:, :, :, None] * grad_rho[:, :, None, :])
            dgrad = reg.delta * float(
                (w * np.einsum("eqcl,eqcl->eq", grad_ru, gv)).sum())
            dzero = reg.delta * float(
                (w * rho_q * np.einsum("eqc,eqc->eq", u_q, v_q)).sum())
            resid = conv + press - visc - dgrad - dzero
            gross = sum(map(abs, (conv, press, visc, dgrad, dzero)))
            mom_max = max(mom_max, abs(resid) / max(gross, 1e-30))

    return {"continuity": cont_max, "momentum": mom_max}


def coupled_beam_residual(state, w, params, law, reg):
    """Relative defect of the beam equation against the variational load
    evaluated at the converged state."""
    ell = discrete.assemble_plate_load(state.rho, state.u, state.u,
                                       state.grid, params, reg, law)
    h = w.h
    plate = params.kappa * _beam_bilinear_apply(w) * h
    resid = float(np.abs(ell[1:-1] - plate[1:-1]).max())
    scale = max(float(np.abs(ell).max()), 1e-30)
    return resid / scale


def _beam_bilinear_apply(w):
    """h^0-scaled clamped fourth-difference (reflected ghosts) of w."""
    v = w.values
    h = w.h
    ext = np.concatenate([[v[1]], v, [v[-2]]])
    d4 = (ext[4:] - 4.0 * ext[3:-1] + 6.0 * ext[2:-2]
          - 4.0 * ext[1:-3] + ext[:-4]) / h**4
    out = np.zeros_like(v)
    out[1:-1] = d4
    return out


def theta_pairing_ratio(grid, bd, seed=0, n_samples=8):
    """Measured ratio int |v . grad v . u_B| / |grad v|^2 over a seeded
    bank of interior fields v; the extension keeps it moderate."""
    q = fem.quad_cache(grid, order=3)
    xy = np.stack([q.xq, q.zq], axis=-1)
    w = q.detw
    ub = bd.phi(q.zq)
    rng = np.random.default_rng(seed)
    bank = _sample_bumps(grid, rng, n_samples, interior=True)
    worst = 0.0
    for (c1, r1), (c2, r2) in zip(bank[::2], bank[1::2]):
        v1, g1 = _bump(xy, c1, r1)
        v2, g2 = _bump(xy, c2, r2)
        v = np.stack([v1, v2], axis=-1)
        gv = np.stack([g1, g2], axis=-2)  # gv[..., c, l]
        conv = np.einsum("eql,eqcl->eqc", v, gv)
        num = float((w * np.abs(conv[..., 0] * ub)).sum())
        den = float((w * (gv**2).sum((-1, -2))).sum())
        if den > 0.0:
            worst = max(worst, num / den)
    return worst


def interface_traction_load(state, w, params, law, reg):
    """Pointwise stress-trace load on the beam nodes, the cross-check for
    the variational assembly: S^w [(-p I + S(grad u)) n(w)] . e_z."""
    from .geometry import interface_geometry

    grid = state.grid
    geom = interface_geometry(correct_displacement(w))
    cols = grid.beam_columns()
    nzp = grid.nz + 1
    ids0 = cols * nzp
    ids1 = cols * nzp + 1
    dz = grid.z[cols, 1] - grid.z[cols, 0]

    rho_b = _clip_to_law(state.rho[ids0], law)
    p_b = eos.eval_p_eps_delta(law, reg, np.maximum(state.rho[ids0], 0.0))
    du_dz = (state.u[ids1] - state.u[ids0]) / dz[:, None]
    dx = grid.dx
    u_b = state.u[ids0]
    du_dx = np.gradient(u_b, dx, axis=0)

    grad = np.stack([du_dx, du_dz], axis=-1)  # [node, comp, deriv]
    sym = grad + np.swapaxes(grad, 1, 2)
    div = grad[:, 0, 0] + grad[:, 1, 1]
    stress = params.mu * sym + params.lam * div[:, None, None] * np.eye(2)
    stress[:, 0, 0] -= p_b
    stress[:, 1, 1] -= p_b
    normal = geom.normal if geom.normal.shape[0] == cols.size else None
    if normal is None:
        slope = np.gradient(grid.w_hat[cols], dx)
        s_w = np.sqrt(1.0 + slope**2)
        normal = np.column_stack([-slope, np.ones_like(slope)]) / s_w[:, None]
    else:
        s_w = geom.s_w
    traction_z = np.einsum("ncl,nl->nc", stress, normal)[:, 1]
    return s_w * traction_z


@dataclass
class DiagnosticsReport:
    mass_balance_abs: float
    mass_balance_rel: float
    h1_norm_u: float
    energy_ratio: float
    dissipation_gpp_term: float
    dissipation_rho_gp_term: float
    pressure_l2: float
    pressure_l32: float
    press_est_functional: float
    rho_max: float
    rho_min: float
    beta_margin: float
    weak_residual_cont: float
    weak_residual_mom: float
    theta_pairing_ratio: float
    lip_w: float
    bogovskii_ledger: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def diagnose(state, w, cfg, bank_seed=None):
    """Full report over a converged state."""
    law, reg, params = cfg.law(), cfg.reg(), cfg.params()
    bd = cfg.boundary_data()
    seed = cfg.run_seed if bank_seed is None else bank_seed
    renorm = eos.build_renorm_pair(law, reg)
    mb_abs, mb_rel = mass_balance(state, reg, bd, law)
    en = energy_report(state, bd, renorm, reg, cfg=cfg)
    pr = pressure_report(state, law, reg)
    wr = weak_residuals(state, params, law, reg, bd, bank_seed=seed)
    ledger = bogovskii_pressure_test(state, law, reg, params, bd)
    theta = theta_pairing_ratio(state.grid, bd, seed=seed)
    return DiagnosticsReport(
        mass_balance_abs=mb_abs,
        mass_balance_rel=mb_rel,
        h1_norm_u=en["h1_norm_u"],
        energy_ratio=en["energy_ratio"],
        dissipation_gpp_term=en["dissipation_gpp_term"],
        dissipation_rho_gp_term=en["dissipation_rho_gp_term"],
        pressure_l2=pr["pressure_l2"],
        pressure_l32=pr["pressure_l32"],
        press_est_functional=pr["press_est_functional"],
        rho_max=pr["rho_max"],
        rho_min=pr["rho_min"],
        beta_margin=pr["beta_margin"],
        weak_residual_cont=wr["continuity"],
        weak_residual_mom=wr["momentum"],
        theta_pairing_ratio=theta,
        lip_w=lipschitz_norm(w),
        bogovskii_ledger=ledger,
    )
