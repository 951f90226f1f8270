"""
Exact homotopy Gaussian on the real line.

Elements are f + g*eta with polynomials f, g over QQ, where eta is the formal
basis 1-form paired with the standard Gaussian measure:

    delta(g eta) = g' - x g,    delta(f) = 0.

Moments follow from E vanishing on delta-exact elements:
    0 = E(delta(x^(n-1) eta)) = (n-1) E(x^(n-2)) - E(x^n).
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple, Union

import sympy

logger = logging.getLogger("gaussian_model")

x = sympy.Symbol("x")
N_MAX_LIMIT = 40

PolyLike = Union[sympy.Poly, sympy.Expr, int]


def _poly(value: PolyLike) -> sympy.Poly:
    if isinstance(value, sympy.Poly):
        return sympy.Poly(value.as_expr(), x, domain="QQ")
    return sympy.Poly(sympy.sympify(value), x, domain="QQ")


@dataclass(frozen=True)
class GaussianElement:
    """f (0-form part) + g * eta (1-form part)."""
    f: sympy.Poly
    g: sympy.Poly

    def __post_init__(self):
        object.__setattr__(self, "f", _poly(self.f))
        object.__setattr__(self, "g", _poly(self.g))

    @classmethod
    def function(cls, f: PolyLike) -> "GaussianElement":
        return cls(_poly(f), _poly(0))

    @classmethod
    def one_form(cls, g: PolyLike) -> "GaussianElement":
        return cls(_poly(0), _poly(g))

    @property
    def is_function(self) -> bool:
        return self.g.is_zero

    def __add__(self, other: "GaussianElement") -> "GaussianElement":
        return GaussianElement(self.f + other.f, self.g + other.g)

    def __str__(self) -> str:
        return f"({self.f.as_expr()}) + ({self.g.as_expr()})*eta"


def g_delta(a: GaussianElement) -> GaussianElement:
    """(f, g) -> (g' - x g, 0)."""
    g = a.g
    return GaussianElement(g.diff(x) - _poly(x) * g, _poly(0))


@lru_cache(maxsize=None)
def g_moment(n: int) -> sympy.Rational:
    """E(x^n) from E(1) = 1, E(x) = 0 and E(x^n) = (n-1) E(x^(n-2))."""
    if n < 0:
        raise ValueError(f"moment order must be non-negative, got {n}")
    if n % 2:
        return sympy.Integer(0)
    value = sympy.Integer(1)
    for k in range(2, n + 1, 2):
        value *= k - 1
    return value


def g_reduce(a: GaussianElement) -> sympy.Rational:
    """E of the 0-form part; the eta part carries no real-valued expectation."""
    if not a.is_function:
        logger.debug(f"g_reduce ignores the eta part {a.g.as_expr()}")
    total = sympy.Integer(0)
    for (power,), coeff in a.f.terms():
        total += coeff * g_moment(power)
    return sympy.Rational(total)


def gaussian_density() -> sympy.Expr:
    return sympy.exp(-x ** 2 / 2) / sympy.sqrt(2 * sympy.pi)


def weighted_codifferential(g: PolyLike) -> sympy.Poly:
    """
    rho^-1 d(rho g)/dx for the Gaussian density rho: the codifferential of g*eta
    computed through the measure instead of the closed formula.
    """
    rho = gaussian_density()
    expr = sympy.simplify(sympy.diff(rho * _poly(g).as_expr(), x) / rho)
    return _poly(sympy.expand(expr))


def moment_table(n_max: int) -> List[Tuple[int, sympy.Rational]]:
    if n_max < 0 or n_max > N_MAX_LIMIT:
        raise ValueError(f"n_max must lie in 0..{N_MAX_LIMIT}, got {n_max}")
    return [(n, g_moment(n)) for n in range(n_max + 1)]
