"""
Graded parameter rings R = (k[[S]], d_R) for collections of homotopy random
variables.

Supported rings are R, R[eps], R[eps, deps], their interval extensions
R[[t, dt]] and finite sets of statistics markers s_i. Every monomial is kept
in the canonical variable order (t, dt, eps, deps, s_1, s_2, ...); symbolic
form variables, when present, sort in front of all parameters so that a
monomial reads as "form part, then parameter part".
"""
import logging
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import sympy

from .errors import ForeignMonomialError, RingMismatchError

logger = logging.getLogger("graded_params")

T_MAX_DEFAULT = 16
MARKER_ORDER_DEFAULT = 4
FORM_DEGREE_CAP = 3

_MARKER_BASE = 100
_FORM_BASE = -100


@dataclass(frozen=True)
class GradedVariable:
    """A homogeneous generator. `order` fixes its slot in the canonical order."""
    name: str
    degree: int
    order: int
    is_form: bool = False

    @property
    def is_odd(self) -> bool:
        return self.degree % 2 != 0

    @property
    def is_nilpotent(self) -> bool:
        # odd generators square to zero; dt is odd, deps and t are even
        return self.is_odd

    @property
    def is_marker(self) -> bool:
        return self.order >= _MARKER_BASE

    def __repr__(self) -> str:
        return self.name


T = GradedVariable("t", 0, 0)
DT = GradedVariable("dt", -1, 1)
EPS = GradedVariable("eps", -1, 2)
DEPS = GradedVariable("deps", -2, 3)


def marker(index: int, degree: int = 0) -> GradedVariable:
    """Statistics marker s_index (1-based)."""
    if index < 1:
        raise ValueError(f"marker index must be >= 1, got {index}")
    return GradedVariable(f"s{index}", degree, _MARKER_BASE + index)


def form_symbol(name: str, degree: int, position: int) -> GradedVariable:
    """A symbolic differential form of the given degree, used for exact expansions."""
    if not 0 <= degree <= 3:
        raise ValueError(f"form symbol {name} has degree {degree} outside 0..3")
    return GradedVariable(name, degree, _FORM_BASE + position, is_form=True)


def _koszul(a: GradedVariable, b: GradedVariable) -> int:
    return -1 if (a.degree * b.degree) % 2 else 1


def normalize_word(word: Sequence[GradedVariable]) -> Tuple[int, Optional["Monomial"]]:
    """
    Bring a product of generators into canonical order.

    Returns (sign, monomial); monomial is None when the word vanishes because an
    odd generator occurs twice.
    """
    letters = list(word)
    sign = 1
    # insertion sort; every adjacent transposition of distinct generators costs a Koszul sign
    for i in range(1, len(letters)):
        j = i
        while j > 0 and letters[j - 1].order > letters[j].order:
            sign *= _koszul(letters[j - 1], letters[j])
            letters[j - 1], letters[j] = letters[j], letters[j - 1]
            j -= 1
    powers: List[Tuple[GradedVariable, int]] = []
    for var in letters:
        if powers and powers[-1][0] == var:
            if var.is_nilpotent:
                return 0, None
            powers[-1] = (var, powers[-1][1] + 1)
        else:
            powers.append((var, 1))
    return sign, Monomial(tuple(powers))


@dataclass(frozen=True)
class Monomial:
    """
    A product of generators stored as (variable, exponent) pairs in canonical order.

    Monomials are sign-free keys; the Koszul sign produced while normalizing a word
    is returned by `normalize_word` and absorbed into the coefficient.
    """
    powers: Tuple[Tuple[GradedVariable, int], ...] = ()

    @classmethod
    def of(cls, *variables: GradedVariable) -> "Monomial":
        sign, mono = normalize_word(variables)
        if mono is None or sign != 1:
            raise ForeignMonomialError(
                f"{'*'.join(v.name for v in variables)} is not a canonical nonzero monomial")
        return mono

    @property
    def degree(self) -> int:
        return sum(var.degree * exp for var, exp in self.powers)

    @property
    def form_degree(self) -> int:
        return sum(var.degree * exp for var, exp in self.powers if var.is_form)

    @property
    def variables(self) -> Tuple[GradedVariable, ...]:
        return tuple(var for var, _ in self.powers)

    def exponent(self, var: GradedVariable) -> int:
        for v, e in self.powers:
            if v == var:
                return e
        return 0

    def word(self) -> List[GradedVariable]:
        return [var for var, exp in self.powers for _ in range(exp)]

    @property
    def is_canonical(self) -> bool:
        orders = [var.order for var, _ in self.powers]
        if orders != sorted(set(orders)):
            return False
        return all(exp >= 1 and (exp == 1 or not var.is_nilpotent) for var, exp in self.powers)

    def without(self, var: GradedVariable) -> "Monomial":
        return Monomial(tuple((v, e) for v, e in self.powers if v != var))

    def sort_key(self) -> Tuple:
        return (len(self.powers), tuple((v.order, e) for v, e in self.powers))

    def __str__(self) -> str:
        if not self.powers:
            return "1"
        return "*".join(v.name if e == 1 else f"{v.name}^{e}" for v, e in self.powers)

    __repr__ = __str__


ONE = Monomial()


def multiply_monomials(a: Monomial, b: Monomial) -> Tuple[int, Optional[Monomial]]:
    return normalize_word(a.word() + b.word())


@dataclass(frozen=True)
class RingSpec:
    """Generators, generator differentials and truncation policy of a parameter ring."""
    name: str
    variables: Tuple[GradedVariable, ...]
    differential: Tuple[Tuple[str, str], ...] = ()
    t_max: int = T_MAX_DEFAULT
    marker_order: int = MARKER_ORDER_DEFAULT
    form_degree_cap: Optional[int] = None

    def has(self, var: GradedVariable) -> bool:
        return var in self.variables

    def d_generator(self, var: GradedVariable) -> Optional[GradedVariable]:
        target = dict(self.differential).get(var.name)
        if target is None:
            return None
        for v in self.variables:
            if v.name == target:
                return v
        raise RingMismatchError(f"differential of {var.name} points outside ring {self.name}")

    def check_monomial(self, mono: Monomial) -> None:
        for var, _ in mono.powers:
            if var not in self.variables:
                raise ForeignMonomialError(f"variable {var.name} is not a generator of {self.name}")
        if not mono.is_canonical:
            raise ForeignMonomialError(f"monomial {mono} is not canonical in {self.name}")

    def keeps(self, mono: Monomial) -> bool:
        """Truncation policy: t-series order, marker order, symbolic form degree."""
        if mono.exponent(T) > self.t_max:
            return False
        if sum(e for v, e in mono.powers if v.is_marker) > self.marker_order:
            return False
        if self.form_degree_cap is not None and mono.form_degree > self.form_degree_cap:
            return False
        return True

    def monomial_product(self, a: Monomial, b: Monomial) -> Tuple[int, Optional[Monomial]]:
        sign, mono = multiply_monomials(a, b)
        if mono is None or not self.keeps(mono):
            return 0, None
        return sign, mono

    def monomial_differential(self, mono: Monomial) -> Dict[Monomial, int]:
        """Graded Leibniz extension of the generator differentials to one monomial."""
        result: Dict[Monomial, int] = {}
        word = mono.word()
        prefix_degree = 0
        for i, var in enumerate(word):
            target = self.d_generator(var)
            if target is not None:
                sign, image = normalize_word(word[:i] + [target] + word[i + 1:])
                if image is not None and self.keeps(image):
                    sign *= -1 if prefix_degree % 2 else 1
                    result[image] = result.get(image, 0) + sign
            prefix_degree += var.degree
        return {m: c for m, c in result.items() if c != 0}

    def with_interval(self) -> "RingSpec":
        if self.has(T):
            return self
        return RingSpec(
            name=f"{self.name}[[t,dt]]",
            variables=tuple(sorted(self.variables + (T, DT), key=lambda v: v.order)),
            differential=self.differential + (("t", "dt"),),
            t_max=self.t_max,
            marker_order=self.marker_order,
            form_degree_cap=self.form_degree_cap,
        )

    def with_markers(self, count: int, degrees: Optional[Sequence[int]] = None) -> "RingSpec":
        degrees = list(degrees) if degrees is not None else [0] * count
        if len(degrees) != count:
            raise ValueError(f"expected {count} marker degrees, got {len(degrees)}")
        markers = tuple(marker(i + 1, d) for i, d in enumerate(degrees))
        return RingSpec(
            name=f"{self.name}[[{','.join(m.name for m in markers)}]]",
            variables=self.variables + markers,
            differential=self.differential,
            t_max=self.t_max,
            marker_order=self.marker_order,
            form_degree_cap=self.form_degree_cap,
        )

    def with_form_symbols(self, symbols: Iterable[GradedVariable]) -> "RingSpec":
        symbols = tuple(symbols)
        return RingSpec(
            name=f"Omega<{','.join(s.name for s in symbols)}>(x){self.name}",
            variables=tuple(sorted(symbols + self.variables, key=lambda v: v.order)),
            differential=self.differential,
            t_max=self.t_max,
            marker_order=self.marker_order,
            form_degree_cap=FORM_DEGREE_CAP,
        )

    def __str__(self) -> str:
        return self.name


def real_ring(t_max: int = T_MAX_DEFAULT) -> RingSpec:
    return RingSpec("R", (), (), t_max=t_max)


def epsilon_ring(t_max: int = T_MAX_DEFAULT) -> RingSpec:
    return RingSpec("R[eps]", (EPS,), (), t_max=t_max)


def epsilon_deps_ring(t_max: int = T_MAX_DEFAULT) -> RingSpec:
    return RingSpec("R[eps,deps]", (EPS, DEPS), (("eps", "deps"),), t_max=t_max)


RING_BUILDERS = {
    "R": real_ring,
    "R[eps]": epsilon_ring,
    "R[eps,deps]": epsilon_deps_ring,
}


def ring_by_name(name: str) -> RingSpec:
    try:
        return RING_BUILDERS[name]()
    except KeyError:
        raise RingMismatchError(f"unknown parameter ring '{name}'; known: {sorted(RING_BUILDERS)}") from None


def _is_zero(value: Any) -> bool:
    if isinstance(value, sympy.Basic):
        return bool(value == 0) or sympy.simplify(value) == 0
    return value == 0


@dataclass(frozen=True, eq=False)
class RingElement:
    """Finite map Monomial -> coefficient (exact sympy number or float)."""
    ring: RingSpec
    coefficients: Mapping[Monomial, Any] = field(default_factory=dict)

    def __post_init__(self):
        clean: Dict[Monomial, Any] = {}
        for mono, coeff in self.coefficients.items():
            self.ring.check_monomial(mono)
            if not self.ring.keeps(mono) or _is_zero(coeff):
                continue
            clean[mono] = coeff
        object.__setattr__(self, "coefficients", MappingProxyType(clean))

    @classmethod
    def zero(cls, ring: RingSpec) -> "RingElement":
        return cls(ring, {})

    @classmethod
    def scalar(cls, ring: RingSpec, value: Any) -> "RingElement":
        return cls(ring, {ONE: value})

    @classmethod
    def one(cls, ring: RingSpec) -> "RingElement":
        return cls.scalar(ring, sympy.Integer(1))

    @classmethod
    def variable(cls, ring: RingSpec, var: GradedVariable) -> "RingElement":
        return cls(ring, {Monomial.of(var): sympy.Integer(1)})

    @property
    def is_zero(self) -> bool:
        return not self.coefficients

    @property
    def degrees(self) -> set:
        return {mono.degree for mono in self.coefficients}

    @property
    def is_homogeneous(self) -> bool:
        return len(self.degrees) <= 1

    @property
    def degree(self) -> int:
        degrees = self.degrees
        if len(degrees) != 1:
            raise ValueError(f"element is not homogeneous (degrees {sorted(degrees)})")
        return degrees.pop()

    def coefficient(self, mono: Monomial) -> Any:
        self.ring.check_monomial(mono)
        return self.coefficients.get(mono, 0)

    def _check_same_ring(self, other: "RingElement") -> None:
        if other.ring != self.ring:
            raise RingMismatchError(f"cannot combine elements of {self.ring} and {other.ring}")

    def __add__(self, other: "RingElement") -> "RingElement":
        self._check_same_ring(other)
        merged = dict(self.coefficients)
        for mono, coeff in other.coefficients.items():
            merged[mono] = merged.get(mono, 0) + coeff
        return RingElement(self.ring, merged)

    def __neg__(self) -> "RingElement":
        return RingElement(self.ring, {m: -c for m, c in self.coefficients.items()})

    def __sub__(self, other: "RingElement") -> "RingElement":
        return self + (-other)

    def __mul__(self, other: Any) -> "RingElement":
        if isinstance(other, RingElement):
            return ring_mul(self, other)
        return RingElement(self.ring, {m: c * other for m, c in self.coefficients.items()})

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RingElement):
            return NotImplemented
        return self.ring == other.ring and (self - other).is_zero

    __hash__ = None

    def __str__(self) -> str:
        if self.is_zero:
            return "0"
        terms = sorted(self.coefficients.items(), key=lambda kv: kv[0].sort_key())
        return " + ".join(f"({c})*{m}" for m, c in terms)


def ring_mul(a: RingElement, b: RingElement) -> RingElement:
    """Graded-commutative product with Koszul signs and truncation."""
    if a.ring != b.ring:
        raise RingMismatchError(f"cannot multiply elements of {a.ring} and {b.ring}")
    product: Dict[Monomial, Any] = {}
    for ma, ca in a.coefficients.items():
        for mb, cb in b.coefficients.items():
            sign, mono = a.ring.monomial_product(ma, mb)
            if mono is None:
                continue
            product[mono] = product.get(mono, 0) + sign * ca * cb
    return RingElement(a.ring, product)


def ring_differential(a: RingElement) -> RingElement:
    """d_R extended to the whole element by the graded Leibniz rule."""
    image: Dict[Monomial, Any] = {}
    for mono, coeff in a.coefficients.items():
        for target, mult in a.ring.monomial_differential(mono).items():
            image[target] = image.get(target, 0) + mult * coeff
    return RingElement(a.ring, image)
