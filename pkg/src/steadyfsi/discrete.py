"""The three subproblem solvers whose cascade drives the coupled fixed
point: damped continuity, regularized momentum, and the clamped beam with
its variationally assembled interface load.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import eos, fem
from .errors import SolverError
from .geometry import BeamDisplacement

__all__ = [
    "FluidState",
    "PhysicalParams",
    "solve_continuity",
    "solve_momentum",
    "assemble_plate_load",
    "solve_beam",
    "beam_h2_norm",
    "impose_velocity_bc",
    "boundary_flux_weights",
]


@dataclass(frozen=True)
class PhysicalParams:
    """Viscosity coefficients and beam stiffness."""

    mu: float = 1.0
    lam: float = 1.0
    kappa: float = 10.0

    def __post_init__(self):
        for name in ("mu", "lam", "kappa"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True, eq=False)
class FluidState:
    """Density and velocity nodal fields on a mapped grid."""

    grid: object
    rho: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if rho.shape != (self.grid.n_nodes,) or u.shape != (self.grid.n_nodes, 2):
            raise ValueError("field shapes do not match the grid")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "u", u)

    def check_nonnegative(self, tol=1e-12):
        low = float(self.rho.min())
        if low < -tol:
            raise AssertionError(f"density undershoot {low:.3e}")
        return low

    def boundary_trace_error(self, bd, bc_scale=1.0):
        """Max deviation of the velocity trace from the prescribed data."""
        target = _bc_values(self.grid, bd, bc_scale)
        mask = self.grid.boundary_mask()
        return float(np.abs(self.u[mask] - target[mask]).max())


def _bc_values(grid, bd, bc_scale=1.0):
    """Prescribed velocity at every node: the profile trace on the inflow
    and outflow edges, zero on every other boundary portion."""
    vals = np.zeros((grid.n_nodes, 2))
    nzp = grid.nz + 1
    for i in (0, grid.nx):
        ids = i * nzp + np.arange(nzp)
        vals[ids, 0] = bc_scale * bd.phi(grid.z[i])
    return vals


def impose_velocity_bc(u, grid, bd, bc_scale=1.0):
    """Overwrite boundary nodes with the prescribed trace."""
    out = np.array(u, dtype=float)
    mask = grid.boundary_mask()
    out[mask] = _bc_values(grid, bd, bc_scale)[mask]
    return out


def boundary_flux_weights(grid, bd):
    """Nodal flux weights used by both the continuity assembly and the
    mass-balance diagnostic.

    Returns (b_in, w_out): b_in[i] = -int_{inflow} rho_B u.n N_i >= 0 and
    w_out[j] = int_{outflow} N_j u.n >= 0, so that the tested-with-one
    identity reads delta*int(rho) + w_out.T(rho) - sum(b_in) = 0.
    """
    strip_in = (min(grid.sigma_in[0], bd.z_lo), max(grid.sigma_in[1], bd.z_hi))
    strip_out = (min(grid.sigma_out[0], bd.z_lo), max(grid.sigma_out[1], bd.z_hi))
    b_in = fem.edge_functional(
        grid, "left", lambda z: bd.rho_in * bd.phi(z), strip=strip_in)
    w_out = fem.edge_functional(grid, "right", bd.phi, strip=strip_out)
    return b_in, w_out


def _cutoff_slope(rho, rho_bar):
    """Coefficients lam with lam * rho = T(rho) nodewise."""
    lam = np.ones_like(rho)
    lam[rho < 0.0] = 0.0
    above = rho > rho_bar
    lam[above] = rho_bar / rho[above]
    return lam


def solve_continuity(u_tilde, grid, reg, bd, law,
                     picard_tol=1e-10, picard_max=500, picard_relax=0.7):
    """Damped continuity solve for the density.

    Discretizes delta<grad rho, grad phi> + delta<rho, phi>
    - <T(rho) u~, grad phi> with the weak inflow/outflow boundary terms,
    by Picard iteration on the frozen cutoff coefficient.  The convection
    block carries a symmetric flux-correction (upwind) matrix with zero
    column sums, so summing the equations reproduces the mass-balance
    identity to round-off.
    """
    delta = reg.delta
    rho_bar = law.rho_bar
    K = fem.scalar_stiffness(grid)
    M = sp.diags(fem.lumped_mass_diag(grid)).tocsr()
    C = fem.convection_matrix(grid, u_tilde)
    b_in, w_out = boundary_flux_weights(grid, bd)

    rho = np.zeros(grid.n_nodes)
    rho_prev_solve = None
    converged = False
    sweeps = 0
    change = np.inf
    for sweeps in range(1, picard_max + 1):
        lam = _cutoff_slope(rho, rho_bar)
        C_lam = (C @ sp.diags(lam)).tocsr()
        D = fem.upwind_diffusion(C_lam)
        A = (delta * K + delta * M + C_lam + D
             + sp.diags(w_out * lam)).tocsr()
        rho_new = fem.direct_solve(A, b_in, stage="continuity")
        if rho_prev_solve is not None:
            num = np.linalg.norm(rho_new - rho_prev_solve)
            change = num / max(np.linalg.norm(rho_new), 1e-30)
            if change <= picard_tol:
                rho = rho_new
                converged = True
                break
        else:
            change = 1.0 if np.linalg.norm(rho_new) > 0 else 0.0
            if change == 0.0:
                rho = rho_new
                converged = True
                break
        rho_prev_solve = rho_new
        rho = (1.0 - picard_relax) * rho + picard_relax * rho_new

    info = {"converged": converged, "sweeps": sweeps, "change": change}
    return rho, info


def _momentum_system(rho, u_tilde, grid, params, reg, law):
    """Full (unconstrained) momentum matrix and load over all nodes."""
    q = fem.quad_cache(grid)
    A = fem.momentum_bilinear(grid, rho, params.mu, params.lam, reg.delta)
    rho_q = np.maximum(q.interp(rho), 0.0)
    t_rho = eos.cutoff_T(rho_q, law.rho_bar)
    p_q = eos.eval_p_eps_delta(law, reg, rho_q)
    u_q = q.interp(u_tilde)
    grad_rho = q.grad_interp(rho)
    outer = reg.delta * u_q[:, :, :, None] * grad_rho[:, :, None, :]
    F = fem.momentum_load(grid, t_rho, u_q, p_q, outer)
    return A, F


def solve_momentum(rho, u_tilde, grid, params, reg, bd, law, bc_scale=1.0):
    """Linear coercive momentum solve with exact Dirichlet traces.

    The unknown is the deviation from the boundary trace; the returned
    velocity matches the trace nodewise.
    """
    A, F = _momentum_system(rho, u_tilde, grid, params, reg, law)
    u_bc = _bc_values(grid, bd, bc_scale)
    bmask = grid.boundary_mask()
    free_nodes = np.flatnonzero(~bmask)
    free = np.sort(np.concatenate([2 * free_nodes, 2 * free_nodes + 1]))

    rhs = F - A @ u_bc.ravel()
    A_ff = A[free][:, free]
    sol = fem.direct_solve(A_ff.tocsc(), rhs[free], stage="momentum")
    u = u_bc.ravel().copy()
    u[free] = u[free] + sol
    res = np.linalg.norm(A_ff @ sol - rhs[free]) / max(
        np.linalg.norm(rhs[free]), 1e-30)
    info = {"residual": float(res)}
    return u.reshape(-1, 2), info


def assemble_plate_load(rho, u, u_tilde, grid, params, reg, law, system=None):
    """Variational interface load on the beam nodes.

    Pairs the momentum residual functional with the harmonic lift of each
    interior beam hat function; rows of the momentum system solved in the
    interior contribute only round-off, so this evaluates the weak
    interface traction.  Returned as a functional (integrated against the
    hats), zero at the clamped ends.
    """
    from .operators import lift_basis

    if system is None:
        system = _momentum_system(rho, u_tilde, grid, params, reg, law)
    A, F = system
    res = (F - A @ np.asarray(u, dtype=float).ravel()).reshape(-1, 2)
    interface, basis = lift_basis(grid)
    ell = np.zeros(grid.icol_hi - grid.icol_lo + 1)
    ell[1:-1] = basis @ res[:, 1]
    return ell


def solve_beam(load, kappa, gamma, closure="quartic"):
    """Clamped beam solve: kappa * w'''' = load on gamma with w = w' = 0 at
    both ends, via the pentadiagonal stencil with ghost-node closure.

    ``load`` holds pointwise load values at the beam nodes.  The default
    ghost extrapolates a quartic through the clamped end and the first
    three interior nodes, which keeps the boundary closure from polluting
    the interior stencil's second-order accuracy; the cheaper "reflect"
    variant (w_{-1} = w_1) carries a visibly larger constant.
    """
    if not kappa > 0.0:
        raise ValueError("kappa must be positive")
    load = np.asarray(load, dtype=float)
    m = load.size
    if m < 5:
        raise ValueError("beam needs at least 5 nodes")
    glo, ghi = gamma
    h = (ghi - glo) / (m - 1)

    ni = m - 2
    main = np.full(ni, 6.0)
    off1 = np.full(ni - 1, -4.0)
    off2 = np.full(ni - 2, 1.0)
    A = sp.diags([off2, off1, main, off1, off2], [-2, -1, 0, 1, 2],
                 format="lil")
    if closure == "reflect":
        A[0, 0] += 1.0
        A[ni - 1, ni - 1] += 1.0
    elif closure == "quartic":
        A[0, 0] += 6.0
        A[0, 1] += -2.0
        A[0, 2] += 1.0 / 3.0
        A[ni - 1, ni - 1] += 6.0
        A[ni - 1, ni - 2] += -2.0
        A[ni - 1, ni - 3] += 1.0 / 3.0
    else:
        raise ValueError(f"unknown closure {closure!r}")

    rhs = load[1:-1] * h**4 / kappa
    w_int = fem.direct_solve(A.tocsc(), rhs, stage="plate")
    w = np.zeros(m)
    w[1:-1] = w_int
    return BeamDisplacement(glo, ghi, w)


def beam_h2_norm(w):
    """Discrete H2 norm: L2 part plus second differences on the interior."""
    v = w.values
    h = w.h
    d2 = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
    return float(np.sqrt(h * np.sum(v**2) + h * np.sum(d2**2)))
