"""Hard-sphere pressure laws, their cutoff/regularized variants and the
renormalization tables used by the density dissipation functional.

The default law is p(rho) = a * rho / (rho_bar - rho): pressure vanishes at
zero density, increases monotonically and blows up at the critical density
rho_bar.  Alternative families with the same qualitative shape can be
registered under a new ``form`` tag.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PressureLaw",
    "Regularization",
    "RenormPair",
    "register_law",
    "eval_p",
    "eval_dp",
    "cutoff_T",
    "eval_p_eps",
    "eval_dp_eps",
    "eval_p_eps_delta",
    "build_renorm_pair",
]


# form tag -> (p(law, rho), dp(law, rho)); both vectorized over rho
_LAW_REGISTRY = {}


def register_law(form, p_func, dp_func):
    """Register a pressure law family under a ``form`` tag."""
    if form in _LAW_REGISTRY:
        raise ValueError(f"law form {form!r} already registered")
    _LAW_REGISTRY[form] = (p_func, dp_func)


def _hard_sphere_p(law, rho):
    return law.a * rho / (law.rho_bar - rho)


def _hard_sphere_dp(law, rho):
    return law.a * law.rho_bar / (law.rho_bar - rho) ** 2


register_law("hard-sphere", _hard_sphere_p, _hard_sphere_dp)


@dataclass(frozen=True)
class PressureLaw:
    """Barotropic pressure with a critical density.

    rho_bar : critical density at which the pressure blows up
    a       : amplitude coefficient
    form    : registered law family tag
    """

    rho_bar: float = 1.0
    a: float = 1.0
    form: str = "hard-sphere"

    def __post_init__(self):
        if not self.rho_bar > 0.0:
            raise ValueError(f"rho_bar must be positive, got {self.rho_bar}")
        if not self.a > 0.0:
            raise ValueError(f"a must be positive, got {self.a}")
        if self.form not in _LAW_REGISTRY:
            raise ValueError(
                f"unknown law form {self.form!r}; registered: {sorted(_LAW_REGISTRY)}"
            )


def eval_p(law, rho):
    """Pressure p(rho) on the physical branch 0 <= rho < rho_bar."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0.0) or np.any(rho >= law.rho_bar):
        raise ValueError("eval_p requires 0 <= rho < rho_bar")
    p_func, _ = _LAW_REGISTRY[law.form]
    out = p_func(law, rho)
    return float(out) if out.ndim == 0 else out


def eval_dp(law, rho):
    """Derivative p'(rho) on 0 <= rho < rho_bar."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0.0) or np.any(rho >= law.rho_bar):
        raise ValueError("eval_dp requires 0 <= rho < rho_bar")
    _, dp_func = _LAW_REGISTRY[law.form]
    out = dp_func(law, rho)
    return float(out) if out.ndim == 0 else out


def cutoff_T(rho, rho_bar):
    """Density cutoff: 0 below 0, identity on [0, rho_bar], rho_bar above."""
    rho = np.asarray(rho, dtype=float)
    out = np.clip(rho, 0.0, rho_bar)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Regularization:
    """Two-level regularization parameters.

    eps   : pressure is linearized above rho_bar - eps
    delta : artificial dissipation strength, also adds sqrt(delta)*rho
            to the pressure
    """

    eps: float = 0.1
    delta: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")


def _check_knot(law, reg):
    if reg.eps >= law.rho_bar:
        raise ValueError(
            f"eps={reg.eps} must be smaller than rho_bar={law.rho_bar}"
        )


def eval_p_eps(law, reg, rho):
    """Linearized pressure: equals p below rho_bar - eps, affine above.

    The affine branch continues with slope p'(rho_bar - eps), so the
    result is C^1 and defined for every rho >= 0.
    """
    _check_knot(law, reg)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0.0):
        raise ValueError("eval_p_eps requires rho >= 0")
    knot = law.rho_bar - reg.eps
    p_knot = eval_p(law, knot)
    dp_knot = eval_dp(law, knot)
    below = rho <= knot
    out = np.where(
        below,
        _LAW_REGISTRY[law.form][0](law, np.minimum(rho, knot)),
        p_knot + dp_knot * (rho - knot),
    )
    return float(out) if out.ndim == 0 else out


def eval_dp_eps(law, reg, rho):
    """Derivative of the linearized pressure (constant above the knot)."""
    _check_knot(law, reg)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0.0):
        raise ValueError("eval_dp_eps requires rho >= 0")
    knot = law.rho_bar - reg.eps
    dp_knot = eval_dp(law, knot)
    _, dp_func = _LAW_REGISTRY[law.form]
    out = np.where(rho <= knot, dp_func(law, np.minimum(rho, knot)), dp_knot)
    return float(out) if out.ndim == 0 else out


def eval_p_eps_delta(law, reg, rho):
    """Fully regularized pressure: p_eps(rho) + sqrt(delta) * rho."""
    rho = np.asarray(rho, dtype=float)
    out = eval_p_eps(law, reg, rho) + np.sqrt(reg.delta) * rho
    return float(out) if out.ndim == 0 else out


def eval_dp_eps_delta(law, reg, rho):
    rho = np.asarray(rho, dtype=float)
    out = eval_dp_eps(law, reg, rho) + np.sqrt(reg.delta)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RenormPair:
    """Tabulated renormalization functions for the dissipation estimate.

    Holds G, G', G'' and H on a density grid, anchored at rho_star where
    G(rho_star) = G'(rho_star) = 0 and H(rho_star) = -p_reg(rho_star).
    The defining relation G'(rho) T(rho) - H(rho) = p_reg(rho) then holds
    with zero additive constant at every node.
    """

    rho: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    gp: np.ndarray = field(repr=False)
    gpp: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)
    rho_star: float = 0.5

    def g_at(self, r):
        return np.interp(r, self.rho, self.g)

    def gp_at(self, r):
        return np.interp(r, self.rho, self.gp)

    def gpp_at(self, r):
        return np.interp(r, self.rho, self.gpp)

    def h_at(self, r):
        return np.interp(r, self.rho, self.h)


def build_renorm_pair(law, reg, table_size=4096):
    """Integrate G'' = p_reg' / T from the anchor rho_star = rho_bar / 2.

    H is fixed by the defining relation H = G' T - p_reg, which pins the
    anchor value H(rho_star) = -p_reg(rho_star) and makes the relation
    exact at every node; H' = G' T' then holds to quadrature accuracy.
    """
    if table_size < 16:
        raise ValueError(f"table_size must be at least 16, got {table_size}")
    _check_knot(law, reg)
    rho_bar = law.rho_bar
    rho_star = 0.5 * rho_bar
    lo = rho_bar / (4.0 * table_size)
    hi = 1.25 * rho_bar
    nodes = np.union1d(np.linspace(lo, hi, table_size), [rho_star])
    if nodes[0] <= 0.0:
        raise ValueError("renormalization table must not span rho <= 0")

    gpp = eval_dp_eps_delta(law, reg, nodes) / cutoff_T(nodes, rho_bar)

    k_star = int(np.searchsorted(nodes, rho_star))
    assert nodes[k_star] == rho_star

    gp = _cumtrapz_from(nodes, gpp, k_star)
    g = _cumtrapz_from(nodes, gp, k_star)
    h = gp * cutoff_T(nodes, rho_bar) - eval_p_eps_delta(law, reg, nodes)

    pair = RenormPair(rho=nodes, g=g, gp=gp, gpp=gpp, h=h, rho_star=rho_star)
    lower = np.sqrt(reg.delta) / rho_bar
    if gpp.min() < lower - 1e-12:
        raise AssertionError("G'' dropped below sqrt(delta)/rho_bar")
    return pair


def _cumtrapz_from(x, y, k0):
    """Cumulative trapezoid integral of samples y(x) vanishing at x[k0]."""
    inc = np.zeros_like(x)
    inc[1:] = 0.5 * (y[1:] + y[:-1]) * np.diff(x)
    csum = np.cumsum(inc)
    return csum - csum[k0]
