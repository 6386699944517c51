"""Shared builders for the test suite."""

import numpy as np

from kvsim import Grid, MaterialParams, ScalarField, SimState, VectorField
from kvsim.cli_io import _cos_profile, _sin_profile


def default_params(**overrides):
    base = dict(lambda1=1.0, mu1=1.0, lambda2=1.0, mu2=1.0,
                k=1.0, cv=1.0, alpha=0.1, beta=1.0)
    base.update(overrides)
    return MaterialParams(**base)


def bump_state(grid, v_amp=0.2, theta0=1.0, theta_amp=0.1):
    """Boundary-compatible nonequilibrium state: velocity bump + theta hump."""
    profile = _sin_profile(grid)
    v = np.zeros(grid.shape + (grid.d,))
    for i in range(grid.d):
        v[..., i] = v_amp / (1.0 + i) * profile
    theta = theta0 + theta_amp * _cos_profile(grid)
    return SimState(
        t=0.0,
        u=VectorField.zeros(grid),
        v=VectorField(grid, v),
        theta=ScalarField(grid, theta),
    ).validate()


def random_boundary_zero_vector(grid, rng):
    data = rng.standard_normal(grid.shape + (grid.d,))
    data[grid.boundary_mask] = 0.0
    return VectorField(grid, data)


def make_grid(d=2, n=17, length=1.0):
    return Grid((n,) * d, (length,) * d)
