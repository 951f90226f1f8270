import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from torus_hpt.errors import BandLimitError, DegreeOverflow, MeanError
from torus_hpt.torus_dec import (
    Form, Grid, VectorField, bv_seven_term_residual, codifferential, curl, divergence,
    expectation, exterior_derivative, flat, gradient, harmonic_coefficients,
    harmonic_projection, hodge_star, integrate, interpolate, l2_inner, pointwise_product,
    poisson_solve, random_bandlimited, sharp, wedge,
)

SEEDS = [0, 1, 2, 3]


@pytest.mark.parametrize("n", [4, 12, 24])
def test_grid_size_must_be_power_of_two(n):
    with pytest.raises(ValueError):
        Grid(n)


def test_form_degree_out_of_range(grid16):
    with pytest.raises(DegreeOverflow):
        Form(grid16, 4, np.zeros((1, 16, 16, 16)))


def test_forms_are_immutable_but_inputs_are_not(grid16):
    values = np.zeros((1, 16, 16, 16))
    form = Form(grid16, 0, values)
    assert not form.components.flags.writeable
    assert values.flags.writeable


def test_derivative_of_sine(grid16, sin_x):
    x, _, _ = grid16.coordinates
    d = exterior_derivative(sin_x)
    assert d.degree == 1
    assert_allclose(d.components[0], np.cos(x), atol=1e-12)
    assert_allclose(d.components[1:], 0.0, atol=1e-12)


def test_codifferential_is_divergence_on_one_forms(grid16):
    x, _, _ = grid16.coordinates
    alpha = Form.from_functions(grid16, 1, [lambda x, y, z: np.sin(x), lambda x, y, z: 0 * x, lambda x, y, z: 0 * x])
    assert_allclose(codifferential(alpha).components[0], np.cos(x), atol=1e-12)


def test_codifferential_of_function_is_zero(sin_x):
    delta = codifferential(sin_x)
    assert delta.degree == 0
    assert delta.sup_norm() == 0.0


def test_star_of_frame_elements(grid16):
    dx = Form.constant(grid16, 1, [1, 0, 0])
    assert_allclose(hodge_star(dx).components[:, 0, 0, 0], [1, 0, 0])
    dzdx = Form.constant(grid16, 2, [0, 1, 0])
    assert_allclose(hodge_star(dzdx).components[:, 0, 0, 0], [0, 1, 0])
    assert_allclose(hodge_star(Form.constant(grid16, 0, [2.0])).components[0, 0, 0, 0], 2.0)


def test_wedge_frame_signs(grid16):
    dx, dy, dz = (Form.constant(grid16, 1, e) for e in np.eye(3))
    assert_allclose(wedge(dx, dy).components[:, 0, 0, 0], [0, 0, 1])
    assert_allclose(wedge(dy, dx).components[:, 0, 0, 0], [0, 0, -1])
    assert_allclose(wedge(dz, dx).components[:, 0, 0, 0], [0, 1, 0])
    assert_allclose(wedge(wedge(dx, dy), dz).components[0, 0, 0, 0], 1.0)


def test_wedge_degree_overflow(grid16):
    omega = Form.constant(grid16, 2, [1, 0, 0])
    with pytest.raises(DegreeOverflow):
        wedge(omega, omega)
    with pytest.raises(DegreeOverflow):
        exterior_derivative(Form.constant(grid16, 3, [1.0]))


@pytest.mark.parametrize("degree", [0, 1, 2, 3])
@pytest.mark.parametrize("seed", SEEDS)
def test_star_star_is_identity(grid16, degree, seed):
    omega = random_bandlimited(grid16, degree, 2, seed)
    assert (hodge_star(hodge_star(omega)) - omega).sup_norm() <= 1e-12


@pytest.mark.parametrize("degree", [1, 2, 3])
@pytest.mark.parametrize("seed", SEEDS)
def test_delta_squared_vanishes(grid16, degree, seed):
    omega = random_bandlimited(grid16, degree, 2, seed)
    assert codifferential(codifferential(omega)).sup_norm() <= 1e-10 * max(1.0, omega.sup_norm())


@pytest.mark.parametrize("degree", [0, 1])
@pytest.mark.parametrize("seed", SEEDS)
def test_d_squared_vanishes(grid16, degree, seed):
    omega = random_bandlimited(grid16, degree, 2, seed)
    assert exterior_derivative(exterior_derivative(omega)).sup_norm() <= 1e-10 * max(1.0, omega.sup_norm())


@pytest.mark.parametrize("n", [16, 32])
@pytest.mark.parametrize("degree", [1, 2, 3])
@pytest.mark.parametrize("seed", SEEDS)
def test_signed_adjointness(n, degree, seed):
    grid = Grid(n)
    alpha = random_bandlimited(grid, degree - 1, 2, seed)
    beta = random_bandlimited(grid, degree, 2, seed + 100)
    lhs = l2_inner(exterior_derivative(alpha), beta)
    rhs = -l2_inner(alpha, codifferential(beta))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs) + abs(rhs))


@pytest.mark.parametrize("seed", SEEDS)
def test_vector_calculus_identities(grid16, seed):
    f = random_bandlimited(grid16, 0, 2, seed)
    u = sharp(random_bandlimited(grid16, 1, 2, seed + 7))
    assert curl(gradient(f)).sup_norm() <= 1e-10 * max(1.0, f.sup_norm())
    assert divergence(curl(u)).sup_norm() <= 1e-10 * max(1.0, u.sup_norm())


def test_abc_flow_is_beltrami(grid16):
    u = VectorField.from_functions(grid16, [
        lambda x, y, z: np.sin(z) + np.cos(y),
        lambda x, y, z: np.sin(x) + np.cos(z),
        lambda x, y, z: np.sin(y) + np.cos(x),
    ])
    assert (curl(u) - u).sup_norm() <= 1e-12


def test_gradient_of_sine(grid16):
    _, y, _ = grid16.coordinates
    f = Form.from_functions(grid16, 0, [lambda x, y, z: np.sin(y)])
    g = gradient(f)
    assert_allclose(g.components[1], np.cos(y), atol=1e-12)
    assert_allclose(g.components[[0, 2]], 0.0, atol=1e-12)


def test_expectation_and_integration(grid16, sin_x):
    one = Form.constant(grid16, 0, [1.0])
    assert expectation(one) == pytest.approx(1.0)
    assert expectation(sin_x) == pytest.approx(0.0, abs=1e-14)
    x, _, _ = grid16.coordinates
    sin_sq = Form(grid16, 0, (np.sin(x) ** 2)[None])
    assert expectation(sin_sq) == pytest.approx(0.5)
    assert integrate(hodge_star(one)) == pytest.approx((2 * math.pi) ** 3)
    assert l2_inner(sin_x, sin_x) == pytest.approx(4 * math.pi ** 3)
    with pytest.raises(ValueError):
        integrate(sin_x)


@pytest.mark.parametrize("seed", SEEDS)
def test_expectation_kills_exact_terms(grid16, seed):
    alpha = random_bandlimited(grid16, 1, 2, seed)
    assert abs(expectation(codifferential(alpha))) <= 1e-12 * max(1.0, alpha.sup_norm())


def test_harmonic_projection_keeps_constants(grid16):
    omega = Form.from_functions(grid16, 1, [
        lambda x, y, z: 2.0 + np.sin(x),
        lambda x, y, z: np.cos(z),
        lambda x, y, z: -1.0 + 0 * x,
    ])
    assert_allclose(harmonic_coefficients(omega), [2.0, 0.0, -1.0], atol=1e-14)
    assert_allclose(harmonic_projection(omega).components[:, 3, 5, 7], [2.0, 0.0, -1.0], atol=1e-14)


def test_poisson_solve_inverts_laplacian(grid16, sin_x):
    phi = poisson_solve(-sin_x)
    assert (phi - sin_x).sup_norm() <= 1e-12
    assert (codifferential(exterior_derivative(phi)) + sin_x).sup_norm() <= 1e-12


def test_poisson_solve_rejects_mean(grid16):
    with pytest.raises(MeanError):
        poisson_solve(Form.constant(grid16, 0, [1.0]))


def test_random_bandlimited_contract(grid16):
    with pytest.raises(BandLimitError):
        random_bandlimited(grid16, 1, 5, 0)
    a = random_bandlimited(grid16, 2, 2, 42)
    b = random_bandlimited(grid16, 2, 2, 42)
    assert np.array_equal(a.components, b.components)
    u = random_bandlimited(grid16, 1, 2, 3, divergence_free=True)
    assert codifferential(u).sup_norm() <= 1e-12 * max(1.0, u.sup_norm())


def test_dealiased_product_truncates_high_modes():
    x, _, _ = Grid(16).coordinates
    high = np.sin(7 * x)
    dealiased = pointwise_product(high, high, Grid(16, dealias_factor=2))
    assert_allclose(dealiased, 0.5, atol=1e-12)
    aliased = pointwise_product(high, high, Grid(16))
    assert np.max(np.abs(aliased - 0.5)) > 0.1


def test_low_mode_products_agree_with_and_without_dealiasing():
    x, y, _ = Grid(16).coordinates
    a, b = np.sin(x) + np.cos(2 * y), np.cos(x)
    assert_allclose(pointwise_product(a, b, Grid(16, dealias_factor=2)), a * b, atol=1e-12)


@pytest.mark.parametrize("degrees", [(0, 0, 0), (0, 1, 1), (0, 1, 2), (1, 1, 1), (0, 0, 3), (1, 1, 0)])
@pytest.mark.parametrize("seed", [0, 1])
def test_codifferential_is_second_order(grid16, degrees, seed):
    a, b, c = (random_bandlimited(grid16, d, 2, seed * 10 + i) for i, d in enumerate(degrees))
    scale = max(1.0, a.sup_norm() * b.sup_norm() * c.sup_norm())
    assert bv_seven_term_residual(a, b, c) <= 1e-10 * scale


def test_flat_sharp_round_trip(grid16):
    u = sharp(random_bandlimited(grid16, 1, 2, 9))
    assert np.array_equal(sharp(flat(u)).components, u.components)
    with pytest.raises(ValueError):
        sharp(Form.constant(grid16, 2, [1, 0, 0]))


def test_interpolation_reproduces_band_limited_forms():
    coarse, fine = Grid(8), Grid(32)
    omega = Form.from_functions(coarse, 1, [
        lambda x, y, z: np.sin(2 * x) * np.cos(y),
        lambda x, y, z: np.cos(z) + 0.5,
        lambda x, y, z: np.sin(x + 2 * z),
    ])
    expected = Form.from_functions(fine, 1, [
        lambda x, y, z: np.sin(2 * x) * np.cos(y),
        lambda x, y, z: np.cos(z) + 0.5,
        lambda x, y, z: np.sin(x + 2 * z),
    ])
    assert (interpolate(omega, fine) - expected).sup_norm() <= 1e-12
    with pytest.raises(ValueError):
        interpolate(expected, coarse)


def test_seven_term_relation_resolved_on_a_finer_grid():
    coarse, fine = Grid(8), Grid(16)
    a, b, c = (interpolate(random_bandlimited(coarse, d, 2, seed), fine) for seed, d in enumerate((0, 1, 1)))
    scale = max(1.0, a.sup_norm() * b.sup_norm() * c.sup_norm())
    assert bv_seven_term_residual(a, b, c) <= 1e-10 * scale
