"""Run configuration: parsing, validation and typed access to the physical
and numerical parameters.

The on-disk format is INI-style sections mirroring the module layout
(eos, reg, grid, geom, bc, phys, solver, run).  Unknown sections or keys
are rejected; every range constraint is enforced at parse time.
"""

import configparser
import dataclasses
import os
from dataclasses import dataclass

from .discrete import PhysicalParams
from .eos import PressureLaw, Regularization
from .errors import ConfigError
from .operators import BoundaryData

__all__ = ["RunConfig", "parse_config", "config_to_ini"]


@dataclass(frozen=True)
class RunConfig:
    eos_form: str = "hard-sphere"
    eos_a: float = 1.0
    eos_rho_bar: float = 1.0
    reg_eps: float = 0.1
    reg_delta: float = 0.1
    grid_nx: int = 32
    grid_nz: int = 32
    geom_gamma: tuple = (0.25, 0.75)
    geom_sigma_in: tuple = (0.4, 0.6)
    geom_sigma_out: tuple = (0.4, 0.6)
    geom_margin: float = 0.1
    bc_profile: str = "parabolic:0.5"
    bc_strip: tuple = (0.4, 0.6)
    bc_rho_in: float = 0.5
    phys_mu: float = 1.0
    phys_lambda: float = 1.0
    phys_kappa: float = 10.0
    solver_tol: float = 1e-8
    solver_max_outer: int = 200
    solver_relax: float = 0.5
    solver_picard_tol: float = 1e-10
    solver_picard_max: int = 500
    run_seed: int = 0
    run_out_dir: str = "out"

    def __post_init__(self):
        self._check()

    def _check(self):
        try:
            self.law()
            reg = self.reg()
            self.params()
            bd = self.boundary_data()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if reg.eps >= self.eos_rho_bar:
            raise ConfigError(
                f"reg.eps={self.reg_eps} must be below eos.rho_bar={self.eos_rho_bar}")
        if not (self.grid_nx >= 8 and self.grid_nz >= 8):
            raise ConfigError("grid.nx and grid.nz must be at least 8")
        glo, ghi = self.geom_gamma
        if not 0.0 < glo < ghi < 1.0:
            raise ConfigError(f"geom.gamma={self.geom_gamma} must sit inside (0, 1)")
        for key, (zlo, zhi) in (("geom.sigma_in", self.geom_sigma_in),
                                ("geom.sigma_out", self.geom_sigma_out)):
            if not 0.0 < zlo < zhi < 1.0:
                raise ConfigError(f"{key}=({zlo}, {zhi}) must sit inside (0, 1)")
        if not 0.0 < self.geom_margin < min(glo, 1.0 - ghi):
            raise ConfigError(
                f"geom.margin={self.geom_margin} must be below "
                f"dist(gamma, boundary)")
        if not bd.rho_in < self.eos_rho_bar:
            raise ConfigError(
                f"bc.rho_in={self.bc_rho_in} must be below eos.rho_bar")
        if not self.solver_tol > 0.0:
            raise ConfigError("solver.tol must be positive")
        if not 0.0 < self.solver_relax <= 1.0:
            raise ConfigError("solver.relax must lie in (0, 1]")
        if self.solver_max_outer < 1:
            raise ConfigError("solver.max_outer must be at least 1")
        if self.run_seed < 0:
            raise ConfigError("run.seed must be a nonnegative integer")

    def law(self):
        return PressureLaw(rho_bar=self.eos_rho_bar, a=self.eos_a,
                           form=self.eos_form)

    def reg(self):
        return Regularization(eps=self.reg_eps, delta=self.reg_delta)

    def params(self):
        return PhysicalParams(mu=self.phys_mu, lam=self.phys_lambda,
                              kappa=self.phys_kappa)

    def boundary_data(self):
        kind, _, tail = self.bc_profile.partition(":")
        kind = kind.strip()
        zlo, zhi = self.bc_strip
        if kind == "parabolic":
            peak = float(tail) if tail else 0.5
            return BoundaryData(z_lo=zlo, z_hi=zhi, peak=peak,
                                kind="parabolic", rho_in=self.bc_rho_in)
        if kind == "piecewise":
            pts = []
            for item in tail.split(";"):
                z, v = item.split(",")
                pts.append((float(z), float(v)))
            return BoundaryData(z_lo=zlo, z_hi=zhi, kind="piecewise",
                                points=tuple(pts), rho_in=self.bc_rho_in)
        raise ConfigError(f"unknown bc.profile kind {kind!r}")

    def with_overrides(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        return dataclasses.asdict(self)


_SCHEMA = {
    "eos": {"form": str, "a": float, "rho_bar": float},
    "reg": {"eps": float, "delta": float},
    "grid": {"nx": int, "nz": int},
    "geom": {"gamma": "interval", "sigma_in": "interval",
             "sigma_out": "interval", "margin": float},
    "bc": {"profile": str, "strip": "interval", "rho_in": float},
    "phys": {"mu": float, "lambda": float, "kappa": float},
    "solver": {"tol": float, "max_outer": int, "relax": float,
               "picard_tol": float, "picard_max": int},
    "run": {"seed": int, "out_dir": str},
}

_FIELD_NAMES = {
    ("phys", "lambda"): "phys_lambda",
}


def _convert(section, key, raw, kind):
    try:
        if kind == "interval":
            parts = [float(p) for p in raw.replace(",", " ").split()]
            if len(parts) != 2:
                raise ValueError("expected two numbers")
            return tuple(parts)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} ({exc})")


def parse_config(path, overrides=None, echo=True):
    """Read, validate and echo a configuration file.

    Missing keys take their defaults; unknown sections or keys raise with
    the offending name; range violations raise with the key.  The
    effective configuration is echoed to the run's output directory.
    """
    parser = configparser.ConfigParser()
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                parser.read_file(fh, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"parse error: {exc}") from exc

    kw = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            name = _FIELD_NAMES.get((section, key), f"{section}_{key}")
            kw[name] = _convert(section, key, raw, _SCHEMA[section][key])
    if overrides:
        kw.update(overrides)
    cfg = RunConfig(**kw)
    if echo:
        os.makedirs(cfg.run_out_dir, exist_ok=True)
        echo_path = os.path.join(cfg.run_out_dir, "effective_config.ini")
        tmp = echo_path + ".tmp"
        with open(tmp, "w") as fh:
            fh.write(config_to_ini(cfg))
        os.replace(tmp, echo_path)
    return cfg


def config_to_ini(cfg):
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key in keys:
            name = _FIELD_NAMES.get((section, key), f"{section}_{key}")
            value = getattr(cfg, name)
            if isinstance(value, tuple):
                value = ", ".join(repr(v) for v in value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
