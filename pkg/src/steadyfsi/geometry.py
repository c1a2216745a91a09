"""Beam displacement state, the Lipschitz domain-correction barrier, the
shear-mapped grid for the deformed flow domain, interface geometry and
zero-extension utilities for comparing fields across different domains.

Geometry convention (2D flow / 1D beam): the flow fills the unit square,
the elastic beam occupies an interval gamma = (gamma_lo, gamma_hi) strictly
inside the bottom edge, and a deflection w lifts the floor so the flow
domain becomes { (x, z) : w_hat(x) < z < 1 } with w_hat the zero-extension
of the deflection.  Inflow and outflow strips sit on the left and right
edges, away from the corners.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BeamDisplacement",
    "MappedGrid",
    "InterfaceGeometry",
    "AmbientField",
    "lipschitz_norm",
    "f_cor",
    "correct_displacement",
    "build_grid",
    "build_wmax",
    "interface_geometry",
    "extend_by_zero",
    "l2_distance_ambient",
]

DEFAULT_GAMMA = (0.25, 0.75)
DEFAULT_SIGMA_IN = (0.4, 0.6)
DEFAULT_SIGMA_OUT = (0.4, 0.6)


@dataclass(frozen=True, eq=False)
class BeamDisplacement:
    """Deflection samples on a uniform grid over gamma, clamped at the ends."""

    gamma_lo: float
    gamma_hi: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if not (0.0 < self.gamma_lo < self.gamma_hi < 1.0):
            raise ValueError(
                f"gamma=({self.gamma_lo}, {self.gamma_hi}) must be strictly "
                "inside (0, 1)"
            )
        if vals.ndim != 1 or vals.size < 5:
            raise ValueError("beam needs at least 5 nodes")
        if vals[0] != 0.0 or vals[-1] != 0.0:
            raise ValueError("clamped beam must vanish at both endpoints")

    @property
    def n_nodes(self):
        return self.values.size

    @property
    def x(self):
        return np.linspace(self.gamma_lo, self.gamma_hi, self.n_nodes)

    @property
    def h(self):
        return (self.gamma_hi - self.gamma_lo) / (self.n_nodes - 1)

    def eval(self, x):
        """Zero-extended evaluation on [0, 1]."""
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.x, self.values, left=0.0, right=0.0)
        inside = (x >= self.gamma_lo) & (x <= self.gamma_hi)
        out = np.where(inside, out, 0.0)
        return float(out) if out.ndim == 0 else out

    def with_values(self, values):
        return BeamDisplacement(self.gamma_lo, self.gamma_hi, values)

    @staticmethod
    def zero(n_nodes, gamma=DEFAULT_GAMMA):
        return BeamDisplacement(gamma[0], gamma[1], np.zeros(n_nodes))


def lipschitz_norm(w):
    """Sup norm plus sup of the interior central-difference slope.

    Dominates the sup norm, so dividing by f_cor of this value keeps the
    corrected deflection within the 1/4 barrier.
    """
    v = w.values
    if v.size < 5:
        raise ValueError("lipschitz_norm needs at least 5 nodes")
    slope = (v[2:] - v[:-2]) / (2.0 * w.h)
    return float(np.max(np.abs(v)) + np.max(np.abs(slope)))


def f_cor(x):
    """Correction barrier: 1 on [0, 1/4], 4x above; continuous, nondecreasing."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("f_cor requires x >= 0")
    out = np.where(x <= 0.25, 1.0, 4.0 * x)
    return float(out) if out.ndim == 0 else out


def correct_displacement(w):
    """Divide the deflection by f_cor of its Lipschitz norm.

    Identity whenever the norm is at most 1/4; the result always satisfies
    max |w| <= 1/4.
    """
    factor = f_cor(lipschitz_norm(w))
    if factor == 1.0:
        return w
    return w.with_values(w.values / factor)


@dataclass(frozen=True, eq=False)
class MappedGrid:
    """Logically rectangular grid for the deformed flow domain.

    The vertical shear map (x, eta) -> (x, w_hat(x) + eta * (1 - w_hat(x)))
    sends the unit square onto the deformed domain; jac = 1 - w_hat is the
    per-column Jacobian of the map.
    """

    nx: int
    nz: int
    gamma: tuple
    sigma_in: tuple
    sigma_out: tuple
    x: np.ndarray = field(repr=False)
    eta: np.ndarray = field(repr=False)
    w_hat: np.ndarray = field(repr=False)
    jac: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    icol_lo: int = 0
    icol_hi: int = 0

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.nz + 1)

    def node_id(self, i, j):
        return i * (self.nz + 1) + j

    @property
    def dx(self):
        return 1.0 / self.nx

    @property
    def deta(self):
        return 1.0 / self.nz

    def node_xz(self):
        """Physical coordinates of every node, shaped (n_nodes, 2)."""
        xx = np.repeat(self.x, self.nz + 1)
        return np.column_stack([xx, self.z.ravel()])

    def boundary_mask(self):
        m = np.zeros(self.n_nodes, dtype=bool)
        ids = np.arange(self.n_nodes).reshape(self.nx + 1, self.nz + 1)
        m[ids[0, :]] = True
        m[ids[-1, :]] = True
        m[ids[:, 0]] = True
        m[ids[:, -1]] = True
        return m

    def edge_segments(self, side, strip=None):
        """Row indices j of edge segments [eta_j, eta_j+1] on a vertical edge
        that intersect the open interval ``strip`` (all segments if None)."""
        if strip is None:
            return np.arange(self.nz)
        zlo, zhi = strip
        j = np.arange(self.nz)
        return j[(self.eta[j + 1] > zlo) & (self.eta[j] < zhi)]

    def cell_volumes(self):
        """Exact areas of the mapped cells, shaped (nx, nz)."""
        col = 0.5 * (self.jac[:-1] + self.jac[1:]) * self.dx * self.deta
        return np.repeat(col[:, None], self.nz, axis=1)

    def beam_columns(self):
        return np.arange(self.icol_lo, self.icol_hi + 1)


def build_grid(w_cor, nx, nz, gamma=None, sigma_in=DEFAULT_SIGMA_IN,
               sigma_out=DEFAULT_SIGMA_OUT, max_deflection=0.25):
    """Shear-mapped tensor grid over the domain deformed by ``w_cor``.

    The beam interval is snapped to grid columns; the deflection is
    resampled onto those columns and zero-extended elsewhere.  Rejects
    deflections exceeding ``max_deflection`` (the corrected barrier by
    default), which keeps 3/4 <= jac <= 5/4.
    """
    if gamma is None:
        gamma = (w_cor.gamma_lo, w_cor.gamma_hi)
    icol_lo = int(round(gamma[0] * nx))
    icol_hi = int(round(gamma[1] * nx))
    if not (0 < icol_lo < icol_hi < nx):
        raise ValueError(f"beam interval {gamma} does not fit inside the grid")

    x = np.linspace(0.0, 1.0, nx + 1)
    eta = np.linspace(0.0, 1.0, nz + 1)
    w_hat = np.zeros(nx + 1)
    cols = np.arange(icol_lo, icol_hi + 1)
    w_hat[cols] = np.interp(x[cols], w_cor.x, w_cor.values)
    w_hat[icol_lo] = 0.0
    w_hat[icol_hi] = 0.0

    amp = float(np.max(np.abs(w_hat)))
    if amp > max_deflection + 1e-12:
        raise ValueError(
            f"deflection amplitude {amp:.6g} exceeds the {max_deflection} barrier"
        )

    jac = 1.0 - w_hat
    z = w_hat[:, None] + eta[None, :] * jac[:, None]
    for name in ("x", "eta", "w_hat", "jac", "z"):
        arr = {"x": x, "eta": eta, "w_hat": w_hat, "jac": jac, "z": z}[name]
        arr.setflags(write=False)
    return MappedGrid(
        nx=nx, nz=nz, gamma=(x[icol_lo], x[icol_hi]),
        sigma_in=tuple(sigma_in), sigma_out=tuple(sigma_out),
        x=x, eta=eta, w_hat=w_hat, jac=jac, z=z,
        icol_lo=icol_lo, icol_hi=icol_hi,
    )


def _smoothstep(s):
    """C-infinity step: 0 at s<=0, 1 at s>=1 via the classic exp bump."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(s > 0.0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
        g = np.where(s < 1.0, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
    return f / (f + g)


def build_wmax(margin, gamma=DEFAULT_GAMMA, n_nodes=257):
    """Smooth bump equal to 1/2 on gamma, supported in the enlarged interval
    gamma' = (gamma_lo - margin, gamma_hi + margin).

    Used to build the widest/narrowest bounding domains and the extension
    strip; the returned displacement lives on gamma'.
    """
    lo, hi = gamma
    if not 0.0 < margin < min(lo, 1.0 - hi):
        raise ValueError(
            f"margin {margin} must be positive and smaller than "
            f"dist(gamma, boundary) = {min(lo, 1.0 - hi)}"
        )
    glo, ghi = lo - margin, hi + margin
    x = np.linspace(glo, ghi, n_nodes)
    rise = _smoothstep((x - glo) / margin)
    fall = _smoothstep((ghi - x) / margin)
    vals = 0.5 * np.minimum(rise, fall)
    vals[0] = 0.0
    vals[-1] = 0.0
    return BeamDisplacement(glo, ghi, vals)


@dataclass(frozen=True, eq=False)
class InterfaceGeometry:
    """Arc-length factor and unit normal of the deformed interface."""

    s_w: np.ndarray = field(repr=False)
    normal: np.ndarray = field(repr=False)


def interface_geometry(w):
    """S^w = sqrt(1 + (w')^2) and n(w) = (-w', 1)/S^w per beam node."""
    v = w.values
    slope = np.gradient(v, w.h)
    s_w = np.sqrt(1.0 + slope**2)
    normal = np.column_stack([-slope, np.ones_like(slope)]) / s_w[:, None]
    return InterfaceGeometry(s_w=s_w, normal=normal)


@dataclass(frozen=True, eq=False)
class AmbientField:
    """Cell-centered samples on a lattice over the unit square, zero
    outside the field's own domain."""

    nxa: int
    nza: int
    values: np.ndarray = field(repr=False)

    @property
    def cell_area(self):
        return 1.0 / (self.nxa * self.nza)


def _sample_on_ambient(grid, values, nxa, nza):
    xc = (np.arange(nxa) + 0.5) / nxa
    zc = (np.arange(nza) + 0.5) / nza
    w_at = np.interp(xc, grid.x, grid.w_hat)
    jac_at = 1.0 - w_at
    eta_c = (zc[None, :] - w_at[:, None]) / jac_at[:, None]
    inside = (eta_c > 0.0) & (eta_c < 1.0)

    values = np.asarray(values, dtype=float)
    ncomp = 1 if values.ndim == 1 else values.shape[1]
    nodal = values.reshape(grid.nx + 1, grid.nz + 1, ncomp)

    ix = np.minimum((xc * grid.nx).astype(int), grid.nx - 1)
    tx = xc * grid.nx - ix
    eta_cl = np.clip(eta_c, 0.0, 1.0)
    je = np.minimum((eta_cl * grid.nz).astype(int), grid.nz - 1)
    te = eta_cl * grid.nz - je

    out = np.zeros((nxa, nza, ncomp))
    for c in range(ncomp):
        f = nodal[:, :, c]
        f00 = f[ix[:, None], je]
        f10 = f[ix[:, None] + 1, je]
        f01 = f[ix[:, None], je + 1]
        f11 = f[ix[:, None] + 1, je + 1]
        txc = tx[:, None]
        out[:, :, c] = ((1 - txc) * (1 - te) * f00 + txc * (1 - te) * f10
                        + (1 - txc) * te * f01 + txc * te * f11)
    out[~inside] = 0.0
    return out if ncomp > 1 else out[:, :, 0]


def extend_by_zero(grid, values=None, n_ambient=None):
    """Resample a nodal field onto an ambient lattice over the unit square,
    zero outside the field's own deformed domain.

    Accepts either (grid, nodal values) or a fluid state carrying its
    grid, in which case the density field is extended."""
    if values is None and hasattr(grid, "grid"):
        grid, values = grid.grid, grid.rho
    if n_ambient is None:
        n_ambient = 2 * max(grid.nx, grid.nz)
    sampled = _sample_on_ambient(grid, values, n_ambient, n_ambient)
    return AmbientField(nxa=n_ambient, nza=n_ambient, values=sampled)


def l2_distance_ambient(a, b):
    """Discrete L2 distance between two ambient extensions.

    Accepts either two AmbientField objects of equal resolution or two
    (grid, values) pairs, which are resampled to a common refined lattice.
    Resolutions are rejected when the coarser does not divide the finer.
    """
    if isinstance(a, AmbientField) and isinstance(b, AmbientField):
        fa, fb = a, b
        if (fa.nxa, fa.nza) != (fb.nxa, fb.nza):
            raise ValueError("ambient resolutions differ")
    else:
        grid_a, vals_a = a
        grid_b, vals_b = b
        na = max(grid_a.nx, grid_a.nz)
        nb = max(grid_b.nx, grid_b.nz)
        if max(na, nb) % min(na, nb) != 0:
            raise ValueError(
                f"grids of size {na} and {nb} share no common refinement"
            )
        n_amb = 2 * max(na, nb)
        fa = extend_by_zero(grid_a, vals_a, n_amb)
        fb = extend_by_zero(grid_b, vals_b, n_amb)
    diff = fa.values - fb.values
    return float(np.sqrt(np.sum(diff**2) * fa.cell_area))
