import numpy as np
import pytest

from steadyfsi.config import RunConfig
from steadyfsi import fixedpoint


@pytest.fixture(scope="session")
def default_cfg():
    return RunConfig()


@pytest.fixture(scope="session")
def quick_cfg():
    return RunConfig(grid_nx=16, grid_nz=16)


@pytest.fixture(scope="session")
def converged_default(default_cfg):
    """Converged coupled solve on the default 32x32 configuration."""
    report = fixedpoint.solve_fixed_point(default_cfg)
    assert report.converged
    return report


@pytest.fixture(scope="session")
def converged_quick(quick_cfg):
    report = fixedpoint.solve_fixed_point(quick_cfg)
    assert report.converged
    return report


def tent_beam(gamma=(0.25, 0.75), n=41, height=0.1, slope=0.4):
    """Tent-shaped deflection with exactly known sup norm and slope."""
    from steadyfsi.geometry import BeamDisplacement

    lo, hi = gamma
    x = np.linspace(lo, hi, n)
    vals = np.minimum.reduce([slope * (x - lo), np.full(n, height),
                              slope * (hi - x)])
    vals[0] = 0.0
    vals[-1] = 0.0
    return BeamDisplacement(lo, hi, vals)
