"""Auxiliary operators: the divergence-free velocity extension of the
inflow/outflow data, the harmonic lift of beam test functions into the
flow domain, and a discrete inverse-divergence (Bogovskii) operator.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .errors import SolverError

__all__ = [
    "BoundaryData",
    "StripField",
    "velocity_extension",
    "harmonic_lift",
    "lift_basis",
    "bogovskii",
    "cell_flux_divergence",
]

INTERFACE_CLEARANCE = 0.25  # deformed floor never rises above this height


@dataclass(frozen=True)
class BoundaryData:
    """Inflow/outflow profile and inflow density.

    The scalar profile phi(z) is supported in (z_lo, z_hi), strictly
    positive inside, and drives the flow in through the left edge and out
    through the right edge.  The support must clear the deformed interface
    by ``margin``: z_lo >= 1/4 + margin.
    """

    z_lo: float = 0.4
    z_hi: float = 0.6
    peak: float = 0.5
    kind: str = "parabolic"
    points: tuple = ()     # (z, value) pairs for the piecewise profile
    rho_in: float = 0.5
    margin: float = 0.05

    def __post_init__(self):
        if not (0.0 < self.z_lo < self.z_hi < 1.0):
            raise ValueError(f"strip ({self.z_lo}, {self.z_hi}) must sit inside (0, 1)")
        if self.z_lo < INTERFACE_CLEARANCE + self.margin:
            raise ValueError(
                f"strip bottom {self.z_lo} intersects the band swept by the "
                f"interface (needs z_lo >= {INTERFACE_CLEARANCE + self.margin})"
            )
        if self.kind == "parabolic":
            if self.peak < 0.0:
                raise ValueError("parabolic profile needs peak >= 0")
        elif self.kind == "piecewise":
            pts = tuple((float(z), float(v)) for z, v in self.points)
            zs = [z for z, _ in pts]
            if sorted(zs) != zs or len(pts) < 2:
                raise ValueError("piecewise profile needs sorted (z, value) pairs")
            if any(z <= self.z_lo or z >= self.z_hi for z, _ in pts):
                raise ValueError("piecewise nodes must lie strictly inside the strip")
            if any(v <= 0.0 for _, v in pts):
                raise ValueError("profile must be strictly positive inside its support")
            object.__setattr__(self, "points", pts)
        else:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if not self.rho_in > 0.0:
            raise ValueError("inflow density must be positive")

    def phi(self, z):
        """Profile value, zero outside the support strip."""
        z = np.asarray(z, dtype=float)
        if self.kind == "parabolic":
            span = self.z_hi - self.z_lo
            val = self.peak * 4.0 * (z - self.z_lo) * (self.z_hi - z) / span**2
        else:
            zs = [self.z_lo] + [p[0] for p in self.points] + [self.z_hi]
            vs = [0.0] + [p[1] for p in self.points] + [0.0]
            val = np.interp(z, zs, vs)
        out = np.where((z > self.z_lo) & (z < self.z_hi), val, 0.0)
        return float(out) if out.ndim == 0 else out

    def dphi(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "parabolic":
            span = self.z_hi - self.z_lo
            val = self.peak * 4.0 * (self.z_lo + self.z_hi - 2.0 * z) / span**2
        else:
            zs = np.array([self.z_lo] + [p[0] for p in self.points] + [self.z_hi])
            vs = np.array([0.0] + [p[1] for p in self.points] + [0.0])
            slopes = np.diff(vs) / np.diff(zs)
            idx = np.clip(np.searchsorted(zs, z, side="right") - 1, 0, len(slopes) - 1)
            val = slopes[idx]
        out = np.where((z > self.z_lo) & (z < self.z_hi), val, 0.0)
        return float(out) if out.ndim == 0 else out

    def phi_antiderivative(self, z):
        """Exact running integral of the profile from below its support."""
        z = np.asarray(z, dtype=float)
        span = self.z_hi - self.z_lo
        u = np.clip(z - self.z_lo, 0.0, span)
        if self.kind == "parabolic":
            c = self.peak * 4.0 / span**2
            out = c * (span * u**2 / 2.0 - u**3 / 3.0)
        else:
            zs = np.array([self.z_lo] + [p[0] for p in self.points] + [self.z_hi])
            vs = np.array([0.0] + [p[1] for p in self.points] + [0.0])
            cum = np.concatenate([[0.0], np.cumsum(
                0.5 * (vs[1:] + vs[:-1]) * np.diff(zs))])
            zc = self.z_lo + u
            idx = np.clip(np.searchsorted(zs, zc, side="right") - 1,
                          0, len(zs) - 2)
            frac = zc - zs[idx]
            v_at = vs[idx] + (vs[idx + 1] - vs[idx]) * frac / (zs[idx + 1] - zs[idx])
            out = cum[idx] + 0.5 * (vs[idx] + v_at) * frac
        return float(out) if out.ndim == 0 else out

    def is_zero(self):
        if self.kind == "parabolic":
            return self.peak == 0.0
        return all(v == 0.0 for _, v in self.points)


@dataclass(frozen=True, eq=False)
class StripField:
    """Horizontal channel field u(x, z) = (phi(z), 0).

    Defined by the boundary data alone, so it is identical for every
    deformed domain; the support stays clear of the moving interface.
    Carries its own exact evaluation, which keeps its per-cell flux
    divergence at round-off on any grid.
    """

    data: BoundaryData

    def eval(self, x, z):
        z = np.asarray(z, dtype=float)
        ux = self.data.phi(z)
        return np.stack([ux, np.zeros_like(ux)], axis=-1)

    def nodal(self, grid):
        """Q1 interpolant samples at the grid nodes, shape (n_nodes, 2)."""
        zz = grid.z.ravel()
        return np.column_stack([self.data.phi(zz), np.zeros_like(zz)])

    def h1_norm(self, grid):
        """Exact-profile H1 norm over the given domain."""
        q = fem.quad_cache(grid, order=3)
        ux = self.data.phi(q.zq)
        dz = self.data.dphi(q.zq)
        return float(np.sqrt((q.detw * (ux**2 + dz**2)).sum()))


def velocity_extension(bd, grid):
    """Extension of the boundary data into the domain.

    The field (phi(z), 0) matches the inflow/outflow traces, vanishes on
    every other boundary portion and below the interface clearance band,
    has zero divergence and zero net boundary flux.
    """
    if bd.z_lo < INTERFACE_CLEARANCE + bd.margin:
        raise ValueError("profile support intersects the interface band")
    return StripField(data=bd)


def cell_flux_divergence(strip, grid):
    """Net outward flux of the strip field through each cell boundary,
    divided by the cell volume.

    The flux of (phi(z), 0) through any straight face is the exact
    increment of the profile antiderivative, so the loop around every
    cell telescopes to zero up to round-off."""
    z = grid.z  # (nx+1, nz+1)
    F = strip.data.phi_antiderivative(z)

    # face flux = F(z_end) - F(z_start) along each straight face
    vert = F[:, 1:] - F[:, :-1]   # faces at x = x_i spanning rows j..j+1
    horz = F[1:, :] - F[:-1, :]   # sloped faces between columns at row j

    net = (vert[1:, :] - vert[:-1, :]) + (horz[:, :-1] - horz[:, 1:])
    return net / grid.cell_volumes()


def _strip_node_grid(grid):
    """Node and element index sets of the lift strip: the beam columns up
    to the grid midline."""
    j_top = grid.nz // 2
    cols = np.arange(grid.icol_lo, grid.icol_hi + 1)
    rows = np.arange(0, j_top + 1)
    ids = (cols[:, None] * (grid.nz + 1) + rows[None, :]).ravel()
    interface = cols[1:-1] * (grid.nz + 1)
    wall = np.concatenate([
        grid.icol_lo * (grid.nz + 1) + rows,
        grid.icol_hi * (grid.nz + 1) + rows,
        cols * (grid.nz + 1) + j_top,
    ])
    elems = []
    for i in range(grid.icol_lo, grid.icol_hi):
        for j in range(0, j_top):
            elems.append(i * grid.nz + j)
    return ids, interface, np.unique(wall), np.array(elems)


def _strip_stiffness(grid):
    q = fem.quad_cache(grid)
    _, _, _, elems = _strip_node_grid(grid)
    local = np.einsum("eq,eqal,eqbl->eab", q.detw[elems], q.grad[elems],
                      q.grad[elems], optimize=True)
    conn = q.conn[elems]
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    n = grid.n_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def lift_basis(grid):
    """Harmonic lifts of all interior beam hat functions at once.

    Returns (beam node ids, lift matrix L of shape (n_interior_beam,
    n_nodes)): row k is the scalar lift of the hat at interior beam node k,
    supported on the strip and extended by zero.
    """
    ids, interface, wall, elems = _strip_node_grid(grid)
    K = _strip_stiffness(grid)
    dirichlet = np.concatenate([interface, wall])
    free = np.setdiff1d(ids, dirichlet)

    n_int = len(interface)
    bc = np.zeros((grid.n_nodes, n_int))
    bc[interface, np.arange(n_int)] = 1.0

    rhs = -K[free][:, interface].toarray()  # (nfree, n_int)
    K_ff = K[free][:, free].tocsc()
    try:
        lu = spla.splu(K_ff)
    except RuntimeError as exc:
        raise SolverError(str(exc), stage="lift")
    sol = lu.solve(rhs)
    res = np.linalg.norm(K_ff @ sol - rhs) / max(np.linalg.norm(rhs), 1e-30)
    if not np.isfinite(res) or res > 1e-8:
        raise SolverError(f"lift solve residual {res:.3e}", stage="lift",
                          residual=res)
    out = bc
    out[free, :] = sol
    return interface, out.T


def harmonic_lift(psi, grid):
    """Lift of interface data psi into the strip, returned as the vertical
    vector field r * e_z on the whole grid (zero outside the strip).

    psi holds the values at the beam nodes (including the clamped ends,
    which must vanish); the maximum principle of the interior Laplace
    solve keeps |r| <= max |psi|.
    """
    psi = np.asarray(psi, dtype=float)
    cols = grid.beam_columns()
    if psi.size != cols.size:
        raise ValueError(f"psi needs {cols.size} beam-node values")
    if psi[0] != 0.0 or psi[-1] != 0.0:
        raise ValueError("interface data must vanish at the beam endpoints")
    interface, basis = lift_basis(grid)
    r = psi[1:-1] @ basis
    out = np.zeros((grid.n_nodes, 2))
    out[:, 1] = r
    return out


def _macro_cells(grid):
    """Group elements into 2x2 macro cells (remainders merged into the
    last group along each direction)."""
    def groups(n):
        edges = list(range(0, n, 2))
        if n % 2 == 1:
            edges = edges[:-1]
        return [(a, min(a + 2, n)) for a in edges[:-1]] + [(edges[-1], n)]

    gx = groups(grid.nx)
    gz = groups(grid.nz)
    macros = []
    for alo, ahi in gx:
        for blo, bhi in gz:
            ids = [i * grid.nz + j for i in range(alo, ahi) for j in range(blo, bhi)]
            macros.append(np.array(ids))
    return macros


def bogovskii(g, grid, tol=1e-6):
    """Velocity field v with v = 0 on the boundary and div v = g - mean(g)
    in the macro-cell-averaged sense, minimizing the H1 seminorm.

    Returns (v, residual) where the residual is the relative L2 norm of
    the constraint defect; raises if it exceeds ``tol``.
    """
    g = np.asarray(g, dtype=float)
    q = fem.quad_cache(grid)
    mean = fem.integrate(grid, g) / q.volume
    g0 = g - mean
    if abs(fem.integrate(grid, g0)) > 1e-12 * max(1.0, float(np.abs(g).max())):
        raise SolverError("mean subtraction failed", stage="bogovskii")

    free_nodes = np.flatnonzero(fem.interior_mask(grid))
    free = np.sort(np.concatenate([2 * free_nodes, 2 * free_nodes + 1]))
    K2 = _vector_laplacian(grid)

    # per-element divergence integrals dive[e, a, c] = int_e dN_a/dx_c
    dive = np.einsum("eq,eqac->eac", q.detw, q.grad)
    macros = _macro_cells(grid)
    nM = len(macros)
    rows, cols, vals = [], [], []
    bM = np.zeros(nM)
    g_q = q.interp(g0)
    elem_int = (q.detw * g_q)  # per-qp contributions of int_e g0
    for m, elems in enumerate(macros):
        conn = q.conn[elems]
        contrib = dive[elems]
        for c in (0, 1):
            rows.append(np.full(conn.size, m))
            cols.append((2 * conn + c).ravel())
            vals.append(contrib[:, :, c].ravel())
        bM[m] = elem_int[elems].sum()
    C = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nM, 2 * grid.n_nodes),
    ).tocsr()

    C_f = C[:, free]
    # pin one multiplier: the pinned row is implied by the zero-sum identity
    C_red = C_f[:-1]
    b_red = bM[:-1]
    K_ff = K2[free][:, free]
    n_f = K_ff.shape[0]
    saddle = sp.bmat([[K_ff, C_red.T], [C_red, None]], format="csc")
    rhs = np.concatenate([np.zeros(n_f), b_red])
    sol = fem.direct_solve(saddle, rhs, stage="bogovskii")
    v_f = sol[:n_f]

    v = np.zeros(2 * grid.n_nodes)
    v[free] = v_f
    defect = C_f @ v_f - bM
    areas = np.array([q.detw[els].sum() for els in macros])
    res_norm = float(np.sqrt(np.sum(defect**2 / areas)))
    g_norm = fem.l2_norm(grid, g0)
    residual = res_norm / max(g_norm, 1e-30)
    if residual > tol:
        raise SolverError(f"divergence constraint residual {residual:.3e}",
                          stage="bogovskii", residual=residual)
    return v.reshape(-1, 2), residual


def _vector_laplacian(grid):
    q = fem.quad_cache(grid)
    gg = np.einsum("eq,eqal,eqbl->eab", q.detw, q.grad, q.grad, optimize=True)
    eye = np.eye(2)
    local = np.einsum("eab,cd->eacbd", gg, eye)
    conn2 = np.stack([2 * q.conn, 2 * q.conn + 1], axis=-1).reshape(q.ne, 8)
    rows = np.repeat(conn2, 8, axis=1).ravel()
    cols = np.tile(conn2, (1, 8)).ravel()
    n2 = 2 * grid.n_nodes
    return sp.coo_matrix((local.reshape(q.ne, 8, 8).ravel(), (rows, cols)),
                         shape=(n2, n2)).tocsr()
