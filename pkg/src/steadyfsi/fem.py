"""Bilinear (Q1) finite-element machinery on the shear-mapped grid.

Internal plumbing shared by the operators, solvers and diagnostics: element
quadrature caches, sparse assembly of mass/stiffness/convection blocks,
boundary-edge quadrature and norms.  Scalar nodal fields are flat arrays of
length (nx+1)*(nz+1) ordered column-major in z (node (i, j) -> i*(nz+1)+j);
vector fields carry a trailing component axis of size 2.
"""

import weakref

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError

_GAUSS = {
    1: (np.array([0.0]), np.array([2.0])),
    2: (np.array([-1.0, 1.0]) / np.sqrt(3.0), np.array([1.0, 1.0])),
    3: (
        np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)]),
        np.array([5.0, 8.0, 5.0]) / 9.0,
    ),
}


class QuadCache:
    """Per-grid element connectivity and quadrature data."""

    def __init__(self, grid, order=2):
        nx, nz = grid.nx, grid.nz
        self.order = order
        pts, wts = _GAUSS[order]

        # tensor quadrature on the reference square [-1, 1]^2
        gx, ge = np.meshgrid(pts, pts, indexing="ij")
        self.nq = order * order
        xi = gx.ravel()
        etaq = ge.ravel()
        self.wq_ref = np.outer(wts, wts).ravel()

        # Q1 shape functions, node order (0,0), (1,0), (1,1), (0,1)
        sx = np.stack([(1 - xi) / 2, (1 + xi) / 2, (1 + xi) / 2, (1 - xi) / 2])
        se = np.stack([(1 - etaq) / 2, (1 - etaq) / 2, (1 + etaq) / 2, (1 + etaq) / 2])
        self.N = (sx * se).T  # (nq, 4)
        dx_xi = np.stack([-0.5 * np.ones_like(xi), 0.5 * np.ones_like(xi),
                          0.5 * np.ones_like(xi), -0.5 * np.ones_like(xi)])
        de_eta = np.stack([-0.5 * np.ones_like(etaq), -0.5 * np.ones_like(etaq),
                           0.5 * np.ones_like(etaq), 0.5 * np.ones_like(etaq)])
        self.dN_xi = (dx_xi * se).T   # (nq, 4)
        self.dN_eta = (sx * de_eta).T

        ii, jj = np.meshgrid(np.arange(nx), np.arange(nz), indexing="ij")
        ii = ii.ravel()
        jj = jj.ravel()
        self.ne = nx * nz
        nzp = nz + 1
        n00 = ii * nzp + jj
        self.conn = np.column_stack([n00, n00 + nzp, n00 + nzp + 1, n00 + 1])

        nodes = grid.node_xz()
        ex = nodes[self.conn, 0]  # (ne, 4)
        ez = nodes[self.conn, 1]

        # isoparametric Jacobian at each quadrature point
        x_xi = ex @ self.dN_xi.T      # (ne, nq)
        x_eta = ex @ self.dN_eta.T
        z_xi = ez @ self.dN_xi.T
        z_eta = ez @ self.dN_eta.T
        det = x_xi * z_eta - x_eta * z_xi
        if np.any(det <= 0.0):
            raise SolverError("degenerate cell in mapped grid", stage="grid")
        self.detw = det * self.wq_ref[None, :]  # (ne, nq)

        # physical shape-function gradients, (ne, nq, 4, 2)
        inv = 1.0 / det
        gx_phys = (z_eta[:, :, None] * self.dN_xi[None, :, :]
                   - z_xi[:, :, None] * self.dN_eta[None, :, :]) * inv[:, :, None]
        gz_phys = (-x_eta[:, :, None] * self.dN_xi[None, :, :]
                   + x_xi[:, :, None] * self.dN_eta[None, :, :]) * inv[:, :, None]
        self.grad = np.stack([gx_phys, gz_phys], axis=-1)

        self.xq = ex @ self.N.T  # physical quadrature coordinates (ne, nq)
        self.zq = ez @ self.N.T
        self.volume = float(self.detw.sum())

    def interp(self, nodal):
        """Values of a nodal field at the quadrature points."""
        nodal = np.asarray(nodal)
        if nodal.ndim == 1:
            return nodal[self.conn] @ self.N.T
        return np.einsum("eac,qa->eqc", nodal[self.conn], self.N)

    def grad_interp(self, nodal):
        """Physical gradients of a nodal field at the quadrature points."""
        nodal = np.asarray(nodal)
        if nodal.ndim == 1:
            return np.einsum("ea,eqal->eql", nodal[self.conn], self.grad)
        return np.einsum("eac,eqal->eqcl", nodal[self.conn], self.grad)


_CACHES = weakref.WeakKeyDictionary()


def quad_cache(grid, order=2):
    per_grid = _CACHES.setdefault(grid, {})
    if order not in per_grid:
        per_grid[order] = QuadCache(grid, order)
    return per_grid[order]


def _scatter(grid, conn, local):
    """Assemble (ne, 4, 4) element blocks into a CSR matrix."""
    n = grid.n_nodes
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    return mat.tocsr()


def scalar_stiffness(grid):
    q = quad_cache(grid)
    local = np.einsum("eq,eqal,eqbl->eab", q.detw, q.grad, q.grad, optimize=True)
    return _scatter(grid, q.conn, local.reshape(q.ne, 16))


def scalar_mass(grid, lumped=False, coeff=None):
    q = quad_cache(grid)
    w = q.detw if coeff is None else q.detw * q.interp(coeff)
    local = np.einsum("eq,qa,qb->eab", w, q.N, q.N, optimize=True)
    if lumped:
        diag = np.zeros(grid.n_nodes)
        np.add.at(diag, q.conn.ravel(), local.sum(axis=2).ravel())
        return sp.diags(diag).tocsr()
    return _scatter(grid, q.conn, local.reshape(q.ne, 16))


def lumped_mass_diag(grid):
    """Nodal integration weights m_j = integral of the j-th basis function."""
    q = quad_cache(grid)
    diag = np.zeros(grid.n_nodes)
    np.add.at(diag, q.conn.ravel(), (q.detw[:, :, None] * q.N[None, :, :])
              .sum(axis=1).ravel())
    return diag


def integrate(grid, nodal):
    """Integral of the Q1 interpolant over the deformed domain."""
    nodal = np.asarray(nodal)
    if nodal.ndim == 1:
        return float(lumped_mass_diag(grid) @ nodal)
    return lumped_mass_diag(grid) @ nodal


def convection_matrix(grid, velocity):
    """C[i, j] = -int N_j (velocity . grad N_i); columns multiply the
    transported density."""
    q = quad_cache(grid)
    uq = q.interp(velocity)  # (ne, nq, 2)
    local = -np.einsum("eq,eqal,eql,qb->eab", q.detw, q.grad, uq, q.N,
                       optimize=True)
    return _scatter(grid, q.conn, local.reshape(q.ne, 16))


def upwind_diffusion(conv):
    """Symmetric flux-correction matrix D making conv + D have nonpositive
    off-diagonal entries; zero row and column sums, so summed identities
    survive untouched."""
    off = conv.copy().tolil()
    off.setdiag(0.0)
    off = off.tocsr()
    pos = off.maximum(off.T).maximum(0.0)
    d = sp.diags(np.asarray(pos.sum(axis=1)).ravel()) - pos
    return d.tocsr()


def edge_quadrature(grid, side, strip=None):
    """Gauss-2 quadrature on the vertical edge segments intersecting
    ``strip``.  Returns (node pair ids (ns,2), z at qps (ns,2),
    weights (ns,2), hat values (ns,2,2))."""
    segs = grid.edge_segments(side, strip)
    i = 0 if side == "left" else grid.nx
    jlo = segs
    n0 = i * (grid.nz + 1) + jlo
    pair = np.column_stack([n0, n0 + 1])
    z0 = grid.eta[jlo]
    z1 = grid.eta[jlo + 1]
    pts, wts = _GAUSS[2]
    t = 0.5 * (pts + 1.0)
    zq = z0[:, None] + (z1 - z0)[:, None] * t[None, :]
    wq = 0.5 * (z1 - z0)[:, None] * wts[None, :]
    hat = np.stack([1.0 - t, t], axis=-1)[None, :, :] * np.ones((len(segs), 1, 1))
    return pair, zq, wq, hat


def edge_functional(grid, side, func, strip=None):
    """Nodal weights b_j = int_edge func(z) N_j dz over the selected strip."""
    pair, zq, wq, hat = edge_quadrature(grid, side, strip)
    vals = func(zq) * wq
    b = np.zeros(grid.n_nodes)
    np.add.at(b, pair.ravel(), np.einsum("sq,sqa->sa", vals, hat).ravel())
    return b


def h1_norm(grid, nodal, seminorm=False):
    """Metric-weighted H1 (or seminorm) of a scalar or vector nodal field."""
    q = quad_cache(grid)
    g = q.grad_interp(nodal)
    gsq = (g**2).sum(axis=tuple(range(2, g.ndim)))
    acc = float((q.detw * gsq).sum())
    if not seminorm:
        v = q.interp(nodal)
        vsq = (v**2).sum(axis=-1) if v.ndim == 3 else v**2
        acc += float((q.detw * vsq).sum())
    return float(np.sqrt(acc))


def l2_norm(grid, nodal):
    q = quad_cache(grid)
    v = q.interp(nodal)
    vsq = (v**2).sum(axis=-1) if v.ndim == 3 else v**2
    return float(np.sqrt((q.detw * vsq).sum()))


def interior_mask(grid):
    return ~grid.boundary_mask()


def direct_solve(A, b, stage):
    """Deterministic sparse direct solve with a residual check."""
    A = A.tocsc()
    try:
        lu = spla.splu(A)
        x = lu.solve(b)
    except RuntimeError as exc:  # singular factorization
        raise SolverError(str(exc), stage=stage)
    if b.ndim == 1:
        res = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-30)
        if not np.isfinite(res) or res > 1e-6:
            raise SolverError(f"linear solve residual {res:.3e}", stage=stage,
                              residual=res)
    return x


def vector_ids(grid, nodes=None, comp=None):
    """Flat dof ids in the stacked (node, component) layout of size 2n."""
    n = grid.n_nodes
    if nodes is None:
        nodes = np.arange(n)
    if comp is None:
        return np.concatenate([2 * nodes, 2 * nodes + 1])
    return 2 * nodes + comp


def momentum_bilinear(grid, rho, mu, lam, delta):
    """Viscous stress block plus the delta-weighted gradient and zero-order
    density terms, assembled over both velocity components (size 2n)."""
    q = quad_cache(grid)
    rq = q.interp(rho)
    w = q.detw
    gg = np.einsum("eq,eqal,eqbl->eab", w, q.grad, q.grad, optimize=True)
    gg_rho = np.einsum("eq,eq,eqal,eqbl->eab", w, rq, q.grad, q.grad,
                       optimize=True)
    mm_rho = np.einsum("eq,eq,qa,qb->eab", w, rq, q.N, q.N, optimize=True)
    # gcd[e,a,c,b,d] = int dN_a/dx_c dN_b/dx_d
    gcd = np.einsum("eq,eqac,eqbd->eacbd", w, q.grad, q.grad, optimize=True)

    ne = q.ne
    local = np.zeros((ne, 4, 2, 4, 2))
    eye = np.eye(2)
    # mu (grad u + grad u^T) : grad phi
    local += mu * np.einsum("eab,cd->eacbd", gg, eye)
    local += mu * np.transpose(gcd, (0, 3, 2, 1, 4))  # int dN_b/dx_c dN_a/dx_d
    # lam div u div phi
    local += lam * gcd
    local += delta * np.einsum("eab,cd->eacbd", gg_rho, eye)
    local += delta * np.einsum("eab,cd->eacbd", mm_rho, eye)

    conn2 = np.stack([2 * q.conn, 2 * q.conn + 1], axis=-1).reshape(ne, 8)
    blk = local.reshape(ne, 8, 8)
    rows = np.repeat(conn2, 8, axis=1).ravel()
    cols = np.tile(conn2, (1, 8)).ravel()
    n2 = 2 * grid.n_nodes
    return sp.coo_matrix((blk.ravel(), (rows, cols)), shape=(n2, n2)).tocsr()


def momentum_load(grid, t_rho, u_tilde, p_vals, grad_rho_u_tilde_delta):
    """Load functional of the linearized momentum problem.

    t_rho, p_vals: quadrature-point arrays (ne, nq) of the cutoff density and
    regularized pressure; u_tilde quadrature values (ne, nq, 2);
    grad_rho_u_tilde_delta: delta * (u_tilde outer grad rho) at qps, or None.
    Returns the stacked load vector of size 2n with entries
    int [ T u~ (u~ . grad N_a) + p dN_a/dx_c - delta u~_c (grad rho . grad N_a) ].
    """
    q = quad_cache(grid)
    w = q.detw
    f = np.zeros((q.ne, 4, 2))
    ug = np.einsum("eql,eqal->eqa", u_tilde, q.grad)
    f += np.einsum("eq,eq,eqc,eqa->eac", w, t_rho, u_tilde, ug, optimize=True)
    f += np.einsum("eq,eq,eqac->eac", w, p_vals, q.grad, optimize=True)
    if grad_rho_u_tilde_delta is not None:
        f -= np.einsum("eq,eqcl,eqal->eac", w, grad_rho_u_tilde_delta, q.grad,
                       optimize=True)
    out = np.zeros(2 * grid.n_nodes)
    conn2 = np.stack([2 * q.conn, 2 * q.conn + 1], axis=-1)
    np.add.at(out, conn2.ravel(), f.ravel())
    return out
