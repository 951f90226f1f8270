import math

import numpy as np
import pytest
import sympy
from numpy.polynomial.hermite_e import hermegauss

from torus_hpt.gaussian_model import (
    N_MAX_LIMIT, GaussianElement, g_delta, g_moment, g_reduce, moment_table,
    weighted_codifferential, x,
)


def test_first_moments():
    assert g_moment(0) == 1
    assert g_moment(1) == 0
    assert g_moment(2) == 1


@pytest.mark.parametrize("k", range(1, 21))
def test_even_moments_are_double_factorials(k):
    assert g_moment(2 * k) == sympy.factorial2(2 * k - 1)
    assert g_moment(2 * k - 1) == 0


@pytest.mark.parametrize("k", range(0, 9))
def test_moments_match_quadrature(k):
    nodes, weights = hermegauss(30)
    quadrature = float(np.sum(weights * nodes ** (2 * k)) / math.sqrt(2 * math.pi))
    assert float(g_moment(2 * k)) == pytest.approx(quadrature, rel=1e-12)


@pytest.mark.parametrize("degree", [0, 1, 2, 5, 17, 39])
def test_expectation_vanishes_on_exact_elements(degree):
    g = sum(sympy.Rational(i + 1, 3) * x ** i for i in range(degree + 1))
    assert g_reduce(g_delta(GaussianElement.one_form(g))) == 0


def test_delta_of_monomial():
    result = g_delta(GaussianElement.one_form(x ** 3))
    assert result.is_function
    assert result.f.as_expr() == sympy.expand(3 * x ** 2 - x ** 4)
    assert g_delta(GaussianElement.function(x ** 2)).f.is_zero


@pytest.mark.parametrize("g", [sympy.Integer(1), x, x ** 2 - 3, 2 * x ** 5 + x])
def test_weighted_codifferential_matches_closed_form(g):
    assert weighted_codifferential(g) == g_delta(GaussianElement.one_form(g)).f


def test_reduce_is_linear():
    a = GaussianElement.function(x ** 4 + 2 * x ** 2)
    assert g_reduce(a) == 5
    assert g_reduce(a + GaussianElement.one_form(x)) == 5


def test_moment_table_limits():
    table = moment_table(6)
    assert [n for n, _ in table] == list(range(7))
    assert table[6][1] == 15
    assert len(moment_table(N_MAX_LIMIT)) == N_MAX_LIMIT + 1
    with pytest.raises(ValueError):
        moment_table(N_MAX_LIMIT + 1)
    with pytest.raises(ValueError):
        g_moment(-1)
