import numpy as np
import pytest
import sympy
from numpy.testing import assert_allclose

from torus_hpt.decorated_forms import (
    DecoratedForm, HomotopyData, ResidualReport, coefficient_of, df_delta_total, df_exp,
    df_log, exp_symbolic, finite_difference_weights, slot_monomial, symbolic_homotopy_element,
    time_derivative,
)
from torus_hpt.errors import DegreeError, DensityError, ForeignMonomialError, RingMismatchError, SlotError
from torus_hpt.graded_params import (
    DEPS, DT, EPS, ONE, Monomial, RingElement, epsilon_deps_ring, epsilon_ring, real_ring,
)
from torus_hpt.hrv_engine import build_euler_homotopy
from torus_hpt.torus_dec import Form, codifferential, random_bandlimited


def test_central_difference_weights():
    assert_allclose(finite_difference_weights([-1, 0, 1]), [-0.5, 0.0, 0.5], atol=1e-14)
    assert_allclose(finite_difference_weights([0, 1]), [-1.0, 1.0], atol=1e-14)
    with pytest.raises(ValueError):
        finite_difference_weights([0])


def _polynomial_family(grid, times, power):
    x, _, _ = grid.coordinates
    values = np.stack([t ** power * np.sin(x) for t in times])
    return Form(grid, 0, values[None]), np.stack([power * t ** (power - 1) * np.sin(x) for t in times])


@pytest.mark.parametrize("power", [1, 3, 7])
def test_time_derivative_is_exact_on_polynomials(grid16, times, power):
    family, expected = _polynomial_family(grid16, times, power)
    derivative = time_derivative(family, times)
    assert_allclose(derivative.components[0], expected, atol=1e-9)


def test_time_derivative_order_reduces_with_few_samples(grid16):
    times = np.array([0.0, 0.5])
    family, expected = _polynomial_family(grid16, times, 1)
    assert_allclose(time_derivative(family, times).components[0], expected, atol=1e-12)


def test_time_derivative_edge_cases(grid16, sin_x):
    assert time_derivative(sin_x, [0.0]).sup_norm() == 0.0
    single = Form(grid16, 0, sin_x.components[:, None])
    with pytest.raises(ValueError):
        time_derivative(single, [0.0])


def _constant(grid, degree, values):
    return Form.constant(grid, degree, values)


def test_product_sign_convention(grid16):
    ring = epsilon_ring().with_interval()
    a = DecoratedForm(ring, grid16, {Monomial.of(DT): _constant(grid16, 1, [1, 0, 0])})
    b = DecoratedForm(ring, grid16, {Monomial.of(EPS): _constant(grid16, 1, [0, 1, 0])})
    ab = coefficient_of(a * b, Monomial.of(DT, EPS))
    ba = coefficient_of(b * a, Monomial.of(DT, EPS))
    assert_allclose(ab.components[:, 0, 0, 0], [0, 0, -1])
    assert_allclose(ba.components, ab.components)


def test_exp_of_nilpotent_part_terminates(grid16):
    ring = real_ring().with_interval()
    X = random_bandlimited(grid16, 1, 2, 0)
    a = DecoratedForm(ring, grid16, {Monomial.of(DT): X})
    e = df_exp(a)
    assert set(e.terms) == {ONE, Monomial.of(DT)}
    assert_allclose(e.terms[ONE].components, 1.0)
    assert_allclose(e.terms[Monomial.of(DT)].components, X.components)


def test_exp_of_scalar_is_pointwise_exponential(grid16, sin_x):
    a = DecoratedForm(real_ring(), grid16, {ONE: sin_x})
    assert_allclose(df_exp(a).terms[ONE].components, np.exp(sin_x.components))


def test_exp_requires_total_degree_zero(grid16, sin_x):
    ring = epsilon_ring()
    a = DecoratedForm(ring, grid16, {Monomial.of(EPS): sin_x})
    with pytest.raises(DegreeError):
        df_exp(a)


def test_log_inverts_exp(grid16):
    ring = epsilon_deps_ring()
    a = DecoratedForm(ring, grid16, {
        ONE: random_bandlimited(grid16, 0, 2, 1).scaled(0.1),
        Monomial.of(EPS): random_bandlimited(grid16, 1, 2, 2),
        Monomial.of(DEPS): random_bandlimited(grid16, 2, 2, 3),
        Monomial.of(EPS, DEPS): random_bandlimited(grid16, 3, 2, 4),
    })
    back = df_log(df_exp(a))
    assert set(back.terms) == set(a.terms)
    for mono, form in a.terms.items():
        assert (back.terms[mono] - form).sup_norm() <= 1e-10 * max(1.0, form.sup_norm())


def test_log_needs_positive_scalar(grid16, sin_x):
    with pytest.raises(DensityError):
        df_log(DecoratedForm(real_ring(), grid16, {ONE: sin_x}))


def test_delta_total_applies_ring_differential(grid16):
    ring = epsilon_deps_ring()
    V = random_bandlimited(grid16, 1, 2, 5)
    delta = df_delta_total(DecoratedForm(ring, grid16, {Monomial.of(EPS): V}))
    assert (coefficient_of(delta, Monomial.of(EPS)) - codifferential(V)).sup_norm() == 0.0
    assert (coefficient_of(delta, Monomial.of(DEPS)) + V).sup_norm() == 0.0


def test_coefficient_of_contract(grid16, sin_x):
    a = DecoratedForm(epsilon_deps_ring(), grid16, {ONE: sin_x})
    zero = coefficient_of(a, Monomial.of(EPS, DEPS))
    assert zero.degree == 3 and zero.sup_norm() == 0.0
    with pytest.raises(DegreeError):
        coefficient_of(a, Monomial.of(DEPS, DEPS))
    with pytest.raises(ForeignMonomialError):
        coefficient_of(DecoratedForm(real_ring(), grid16, {ONE: sin_x}), Monomial.of(EPS))


def test_symbolic_exponential_of_generic_homotopy():
    element, s = symbolic_homotopy_element()
    ring = element.ring
    rho = sympy.Symbol("rho")
    X, V, pi, sigma, Phi, Psi = (s[name] for name in ("X", "V", "pi", "sigma", "Phi", "Psi"))
    expected = RingElement(ring, {
        ONE: rho,
        Monomial.of(X, DT): rho,
        Monomial.of(V, EPS): rho,
        Monomial.of(pi, DT, EPS): rho,
        Monomial.of(sigma, DEPS): rho,
        Monomial.of(Phi, DT, DEPS): rho,
        Monomial.of(Psi, EPS, DEPS): rho,
        Monomial.of(X, V, DT, EPS): -rho,
        Monomial.of(X, sigma, DT, DEPS): rho,
        Monomial.of(V, sigma, EPS, DEPS): rho,
    })
    assert exp_symbolic(element) == expected


def test_homotopy_slots(grid16, times):
    X = Form.zero(grid16, 1, (len(times),))
    h = HomotopyData(epsilon_ring(), grid16, times, f=Form.zero(grid16, 0, (len(times),)), X=X)
    assert h.populated() == ["f", "X"]
    assert str(h.interval_ring) == "R[eps][[t,dt]]"
    with pytest.raises(SlotError):
        h.slot("V")
    with pytest.raises(DegreeError):
        HomotopyData(real_ring(), grid16, times, X=Form.zero(grid16, 2, (len(times),)))
    with pytest.raises(RingMismatchError):
        HomotopyData(epsilon_ring(), grid16, times, sigma=Form.zero(grid16, 2, (len(times),)))
    assert slot_monomial("Phi") == Monomial.of(DT, DEPS)
    assert set(h.to_decorated().terms) == {ONE, Monomial.of(DT)}
    assert set(h.at_time(3).terms) == {ONE}


def test_residual_report():
    report = ResidualReport({"mass": np.array([1e-12, 3e-9]), "vorticity": np.array([0.0])}, tolerance=1e-9)
    assert report.failures == ["mass"]
    assert not report.passed
    assert report.max_residual() == pytest.approx(3e-9)
    data = report.to_dict()
    assert data["equations"]["mass"]["per_sample"] == [1e-12, 3e-9]
    assert data["failures"] == ["mass"]


def _random_degree_zero(grid, seed):
    ring = epsilon_deps_ring()
    return DecoratedForm(ring, grid, {
        ONE: random_bandlimited(grid, 0, 2, seed).scaled(0.1),
        Monomial.of(EPS): random_bandlimited(grid, 1, 2, seed + 1),
        Monomial.of(DEPS): random_bandlimited(grid, 2, 2, seed + 2),
        Monomial.of(EPS, DEPS): random_bandlimited(grid, 3, 2, seed + 3),
    })


def _deviation_from_one(element):
    one = DecoratedForm.one(element.ring, element.grid, element.times)
    return (element - one).sup_norm()


@pytest.mark.parametrize("seed", [0, 10, 20])
def test_exp_of_negative_is_inverse(grid16, seed):
    a = _random_degree_zero(grid16, seed)
    scale = max(1.0, a.sup_norm()) ** 3
    assert _deviation_from_one(df_exp(a) * df_exp(-a)) <= 1e-12 * scale


def test_exp_of_negative_is_inverse_on_euler_homotopy(transport_state):
    a = build_euler_homotopy(transport_state).to_decorated()
    scale = max(1.0, a.sup_norm()) ** 3
    assert _deviation_from_one(df_exp(a) * df_exp(-a)) <= 1e-12 * scale


def test_total_differential_squares_to_zero_on_euler_homotopy(transport_state):
    exponential = df_exp(build_euler_homotopy(transport_state).to_decorated())
    twice = df_delta_total(df_delta_total(exponential))
    assert twice.sup_norm() <= 1e-9 * max(1.0, exponential.sup_norm())


@pytest.mark.parametrize("seed", [0, 10])
def test_total_differential_squares_to_zero_on_families(grid16, times, seed):
    ring = epsilon_deps_ring().with_interval()
    profile = np.cos(3 * times)[None, :, None, None, None]
    static = _random_degree_zero(grid16, seed)
    terms = {mono: Form(grid16, form.degree, form.components[:, None] * profile)
             for mono, form in static.terms.items()}
    terms[Monomial.of(DT)] = Form(grid16, 1, random_bandlimited(grid16, 1, 2, seed + 5).components[:, None] * profile)
    family = DecoratedForm(ring, grid16, terms, times)
    twice = df_delta_total(df_delta_total(family))
    assert twice.sup_norm() <= 1e-9 * max(1.0, family.sup_norm())
