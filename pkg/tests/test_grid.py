"""Grid containers, difference operators, and quadrature."""

import numpy as np
import pytest

from kvsim import (
    Grid,
    ScalarField,
    UsageError,
    VectorField,
    integrate,
    lame_operator,
    laplacian_neumann,
    lp_norm,
    sym_gradient,
    tensor_divergence,
)
from kvsim.constitutive import COMPONENT_OF, apply_isotropic
from kvsim.grid import SymTensorField, boundary_max_abs

from helpers import make_grid, random_boundary_zero_vector


# ---------------------------------------------------------------------------
# grid and field plumbing
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("nodes,lengths", [
    ((2, 5), (1.0, 1.0)),
    ((5, 5), (1.0, -1.0)),
    ((5, 5, 5, 5), (1.0,) * 4),
    ((5,), (1.0, 1.0)),
])
def test_grid_validation(nodes, lengths):
    with pytest.raises(UsageError):
        Grid(nodes, lengths)


def test_masks_partition_nodes(grid2d):
    assert np.all(grid2d.boundary_mask ^ grid2d.interior_mask)
    assert grid2d.interior_flat.size == (17 - 2) ** 2


def test_field_shape_validation(grid2d):
    with pytest.raises(UsageError):
        ScalarField(grid2d, np.zeros((3, 3)))
    with pytest.raises(UsageError):
        VectorField(grid2d, np.zeros(grid2d.shape + (3,)))


# ---------------------------------------------------------------------------
# symmetric gradient
# ---------------------------------------------------------------------------

def test_sym_gradient_of_zero(grid2d):
    eps = sym_gradient(VectorField.zeros(grid2d))
    assert np.all(eps.data == 0.0)


def test_sym_gradient_linear_swirl_exact():
    grid = make_grid(d=3, n=5)
    x, y, z = grid.coords()
    u = VectorField(grid, np.stack([y, x, np.zeros_like(x)], axis=-1))
    eps = sym_gradient(u)
    expected = np.zeros(grid.shape + (6,))
    expected[..., COMPONENT_OF[(0, 1)]] = 1.0
    assert np.max(np.abs(eps.data - expected)) <= 1e-13


def test_sym_gradient_second_order():
    errs = []
    for n in (17, 33):
        grid = make_grid(d=2, n=n)
        x, _ = grid.coords()
        u = VectorField(grid, np.stack([np.sin(x), np.zeros_like(x)], axis=-1))
        eps = sym_gradient(u)
        errs.append(np.max(np.abs(eps.data[..., 0] - np.cos(x))))
    order = np.log2(errs[0] / errs[1])
    assert 1.7 <= order <= 2.3


# ---------------------------------------------------------------------------
# tensor divergence
# ---------------------------------------------------------------------------

def test_divergence_of_constant_tensor(grid2d):
    data = np.tile(np.array([1.0, 2.0, 0.0, 0.0, 0.0, 3.0]), grid2d.shape + (1,))
    div = tensor_divergence(SymTensorField(grid2d, data))
    interior = grid2d.interior_mask
    assert np.max(np.abs(div.data[interior])) == 0.0


def test_divergence_of_linear_tensor_exact(grid2d):
    x, _ = grid2d.coords()
    data = np.zeros(grid2d.shape + (6,))
    for c in range(3):
        data[..., c] = x  # x1 * identity
    div = tensor_divergence(SymTensorField(grid2d, data))
    assert np.max(np.abs(div.data[..., 0] - 1.0)) <= 1e-13
    assert np.max(np.abs(div.data[..., 1])) <= 1e-13


def test_divergence_second_order():
    errs = []
    for n in (17, 33):
        grid = make_grid(d=2, n=n)
        x, y = grid.coords()
        data = np.zeros(grid.shape + (6,))
        data[..., 0] = np.sin(x) * np.cos(y)
        data[..., 1] = np.cos(x) * np.sin(y)
        data[..., 5] = np.sin(x) * np.sin(y)
        div = tensor_divergence(SymTensorField(grid, data))
        exact_x = np.cos(x) * np.cos(y) + np.sin(x) * np.cos(y)
        exact_y = np.cos(x) * np.sin(y) + np.cos(x) * np.cos(y)
        err = max(
            np.max(np.abs(div.data[..., 0] - exact_x)),
            np.max(np.abs(div.data[..., 1] - exact_y)),
        )
        errs.append(err)
    order = np.log2(errs[0] / errs[1])
    assert 1.7 <= order <= 2.3


# ---------------------------------------------------------------------------
# Neumann Laplacian
# ---------------------------------------------------------------------------

def test_laplacian_annihilates_constants(grid2d):
    lap = laplacian_neumann(ScalarField.constant(grid2d, 4.2))
    assert np.max(np.abs(lap.data)) == 0.0


def test_laplacian_second_order_on_neumann_profile():
    errs = []
    for n in (17, 33):
        grid = Grid((n, n), (1.0, 1.3))
        x, _ = grid.coords()
        theta = ScalarField(grid, np.cos(np.pi * x / grid.lengths[0]))
        lap = laplacian_neumann(theta)
        exact = -((np.pi / grid.lengths[0]) ** 2) * theta.data
        errs.append(np.max(np.abs(lap.data - exact)))
    order = np.log2(errs[0] / errs[1])
    assert 1.7 <= order <= 2.3


def test_laplacian_symmetric_under_quadrature(rng, grid2d):
    a = ScalarField(grid2d, rng.standard_normal(grid2d.shape))
    b = ScalarField(grid2d, rng.standard_normal(grid2d.shape))
    lhs = integrate(ScalarField(grid2d, laplacian_neumann(a).data * b.data))
    rhs = integrate(ScalarField(grid2d, a.data * laplacian_neumann(b).data))
    assert abs(lhs - rhs) <= 1e-12 * (1.0 + abs(lhs))


def test_laplacian_flux_conservation(rng, grid2d):
    theta = ScalarField(grid2d, rng.standard_normal(grid2d.shape))
    total = integrate(laplacian_neumann(theta))
    scale = np.max(np.abs(laplacian_neumann(theta).data))
    assert abs(total) <= 1e-12 * (1.0 + scale)


# ---------------------------------------------------------------------------
# displacement operator
# ---------------------------------------------------------------------------

def test_lame_operator_zero(grid2d):
    out = lame_operator(VectorField.zeros(grid2d), 1.0, 1.0)
    assert np.all(out.data == 0.0)


def test_lame_operator_exact_on_quadratic():
    grid = make_grid(d=3, n=7)
    x, y, z = grid.coords()
    u = VectorField(grid, np.stack([x**2, np.zeros_like(x), np.zeros_like(x)], axis=-1))
    lam, mu = 2.0, 3.0
    out = lame_operator(u, lam, mu, check_boundary=False)
    interior = grid.interior_mask
    assert np.max(np.abs(out.data[interior][:, 0] - (2 * lam + 4 * mu))) <= 1e-12
    assert np.max(np.abs(out.data[interior][:, 1:])) <= 1e-12


def test_lame_operator_requires_boundary_zero(grid2d):
    x, _ = grid2d.coords()
    u = VectorField(grid2d, np.stack([x, x], axis=-1))
    with pytest.raises(UsageError):
        lame_operator(u, 1.0, 1.0)


def test_lame_operator_self_adjoint_and_negative(rng):
    grid = Grid((9, 11), (1.0, 1.3))
    lam, mu = 0.7, 1.1
    u = random_boundary_zero_vector(grid, rng)
    v = random_boundary_zero_vector(grid, rng)
    qu = lame_operator(u, lam, mu)
    qv = lame_operator(v, lam, mu)

    def vdot(a, b):
        return integrate(ScalarField(grid, np.sum(a.data * b.data, axis=-1)))

    lhs, rhs = vdot(qu, v), vdot(u, qv)
    assert abs(lhs - rhs) <= 1e-10 * (1.0 + abs(lhs))
    assert vdot(qu, u) <= 0.0


def test_lame_operator_matches_composition_on_quadratics():
    grid = make_grid(d=2, n=9)
    x, y = grid.coords()
    u = VectorField(grid, np.stack([x * y + x**2, y**2 - x * y], axis=-1))
    lam, mu = 1.2, 0.8
    direct = lame_operator(u, lam, mu, check_boundary=False)
    composed = tensor_divergence(SymTensorField(
        grid, apply_isotropic(lam, mu, sym_gradient(u).data)
    ))
    interior = grid.interior_mask
    diff = np.max(np.abs(direct.data[interior] - composed.data[interior]))
    assert diff <= 1e-11 * (1.0 + np.max(np.abs(direct.data)))


def test_lame_operator_matches_composition_second_order(rng):
    # one-sided rows of the composed form touch the first interior cell, so
    # the O(h^2) agreement is measured past that single-cell layer
    errs = []
    for n in (17, 33):
        grid = make_grid(d=2, n=n)
        x, y = grid.coords()
        data = np.stack([
            np.sin(np.pi * x) * np.sin(np.pi * y),
            np.sin(2 * np.pi * x) * np.sin(np.pi * y),
        ], axis=-1)
        u = VectorField(grid, data)
        lam, mu = 1.2, 0.8
        direct = lame_operator(u, lam, mu, check_boundary=False)
        composed = tensor_divergence(SymTensorField(
            grid, apply_isotropic(lam, mu, sym_gradient(u).data)
        ))
        diff = np.abs(direct.data - composed.data)[2:-2, 2:-2]
        errs.append(np.max(diff))
    order = np.log2(errs[0] / errs[1])
    assert 1.7 <= order <= 2.3


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def test_integrate_exact_on_constants_and_linears():
    grid = make_grid(d=2, n=9)
    x, _ = grid.coords()
    assert integrate(ScalarField.constant(grid, 1.0)) == pytest.approx(1.0, abs=1e-14)
    assert integrate(ScalarField(grid, x)) == pytest.approx(0.5, abs=1e-14)


def test_integrate_second_order_on_quadratic():
    errs = []
    for n in (9, 17):
        grid = make_grid(d=1, n=n)
        (x,) = grid.coords()
        errs.append(abs(integrate(ScalarField(grid, x**2)) - 1.0 / 3.0))
    order = np.log2(errs[0] / errs[1])
    assert 1.8 <= order <= 2.2


def test_lp_norm_variants(grid2d):
    f = ScalarField.constant(grid2d, -2.0)
    assert lp_norm(f, np.inf) == 2.0
    assert lp_norm(f, 2) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(UsageError):
        lp_norm(f, 0.5)


def test_boundary_max_abs(grid2d):
    data = np.zeros(grid2d.shape + (2,))
    data[0, 3, 1] = -7.0
    assert boundary_max_abs(VectorField(grid2d, data)) == 7.0
