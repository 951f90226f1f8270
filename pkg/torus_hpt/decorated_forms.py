"""
Decorated forms: elements of Omega(M) (x) R, stored as a map Monomial -> Form.

Conventions (form written first, parameter monomial second):

    (w (x) r)(w' (x) r') = (-1)^(|r||w'|) (w ^ w') (x) (r r')
    delta(w (x) r)       = delta(w) (x) r + (-1)^|w| w (x) d_R(r)

Homotopies carry time-sampled families; the t-dependence contributes
(-1)^|w| dw/dt (x) dt*r, with dw/dt taken by finite differences over the samples.
"""
import logging
from dataclasses import dataclass, field, replace
from itertools import count
from types import MappingProxyType
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import sympy

from .errors import DegreeError, DensityError, RingMismatchError, SlotError
from .graded_params import (
    DEPS, DT, EPS, ONE, GradedVariable, Monomial, RingElement, RingSpec,
    epsilon_deps_ring, form_symbol,
)
from .torus_dec import Form, Grid, codifferential, wedge

logger = logging.getLogger("decorated_forms")

FD_ORDER_DEFAULT = 8
FD_ORDER_MIN = 4
SERIES_GUARD = 64


# --- time finite differences ---

def finite_difference_weights(offsets: Sequence[float]) -> np.ndarray:
    """First-derivative weights at 0, exact for polynomials of degree < len(offsets)."""
    offsets = np.asarray(offsets, dtype=float)
    size = len(offsets)
    if size < 2:
        raise ValueError("a derivative stencil needs at least two points")
    vandermonde = np.vander(offsets, size, increasing=True).T
    rhs = np.zeros(size)
    rhs[1] = 1.0
    return np.linalg.solve(vandermonde, rhs)


def _stencil(index: int, n_samples: int, width: int) -> np.ndarray:
    start = min(max(index - width // 2, 0), n_samples - width)
    return np.arange(start, start + width)


def time_derivative(form: Form, times: Sequence[float], order: int = FD_ORDER_DEFAULT) -> Form:
    """
    d/dt of a time-sampled family: centered (order+1)-point stencils, shifted at the
    ends. With fewer samples the order drops to (samples - 1). Static forms give zero.
    """
    if not form.is_family:
        return Form.zero(form.grid, form.degree)
    times = np.asarray(times, dtype=float)
    n_samples = form.batch_shape[0]
    if len(times) != n_samples:
        raise ValueError(f"{n_samples} samples but {len(times)} sample times")
    if n_samples < 2:
        raise ValueError("time derivative needs at least two samples")
    steps = np.diff(times)
    if np.any(steps <= 0):
        raise ValueError("sample times must be strictly increasing")
    h = float(np.min(steps))
    width = min(order + 1, n_samples)
    if width < order + 1:
        logger.debug(f"time derivative order reduced to {width - 1} ({n_samples} samples)")

    comps = form.components
    out = np.empty(comps.shape)
    for i in range(n_samples):
        idx = _stencil(i, n_samples, width)
        weights = finite_difference_weights((times[idx] - times[i]) / h) / h
        out[:, i] = np.tensordot(weights, comps[:, idx], axes=([0], [1]))
    return Form(form.grid, form.degree, out)


# --- decorated forms ---

def _accumulate(terms: Dict[Monomial, Form], mono: Monomial, form: Form) -> None:
    if mono in terms:
        if terms[mono].degree != form.degree:
            raise DegreeError(f"monomial {mono} would carry forms of degree {terms[mono].degree} and {form.degree}")
        terms[mono] = terms[mono] + form
    else:
        terms[mono] = form


@dataclass(frozen=True, eq=False)
class DecoratedForm:
    """A finite sum  sum_m  w_m (x) m  with Forms w_m (static or time-sampled)."""
    ring: RingSpec
    grid: Grid
    terms: Mapping[Monomial, Form] = field(default_factory=dict)
    times: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.times is not None:
            object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        clean: Dict[Monomial, Form] = {}
        for mono, form in self.terms.items():
            self.ring.check_monomial(mono)
            if form.grid != self.grid:
                raise RingMismatchError(f"term {mono} lives on a different grid")
            if form.is_family:
                if self.times is None:
                    raise ValueError(f"term {mono} is time-sampled but no sample times were given")
                if form.batch_shape[0] != len(self.times):
                    raise ValueError(f"term {mono} has {form.batch_shape[0]} samples, expected {len(self.times)}")
            clean[mono] = form
        object.__setattr__(self, "terms", MappingProxyType(clean))

    @classmethod
    def zero(cls, ring: RingSpec, grid: Grid, times=None) -> "DecoratedForm":
        return cls(ring, grid, {}, times)

    @classmethod
    def one(cls, ring: RingSpec, grid: Grid, times=None) -> "DecoratedForm":
        return cls(ring, grid, {ONE: Form.constant(grid, 0, [1.0])}, times)

    @property
    def total_degrees(self) -> set:
        return {form.degree + mono.degree for mono, form in self.terms.items()}

    @property
    def is_homogeneous(self) -> bool:
        return len(self.total_degrees) <= 1

    @property
    def total_degree(self) -> int:
        degrees = self.total_degrees
        if not degrees:
            return 0
        if len(degrees) != 1:
            raise DegreeError(f"element is not homogeneous (total degrees {sorted(degrees)})")
        return next(iter(degrees))

    def monomials(self) -> List[Monomial]:
        return sorted(self.terms, key=lambda m: m.sort_key())

    def with_terms(self, terms: Mapping[Monomial, Form]) -> "DecoratedForm":
        return replace(self, terms=terms)

    def scaled(self, factor: float) -> "DecoratedForm":
        return self.with_terms({m: w.scaled(factor) for m, w in self.terms.items()})

    def sup_norm(self) -> float:
        return max((w.sup_norm() for w in self.terms.values()), default=0.0)

    def __add__(self, other: "DecoratedForm") -> "DecoratedForm":
        return df_add(self, other)

    def __neg__(self) -> "DecoratedForm":
        return self.scaled(-1.0)

    def __sub__(self, other: "DecoratedForm") -> "DecoratedForm":
        return df_add(self, -other)

    def __mul__(self, other: "DecoratedForm") -> "DecoratedForm":
        return df_mul(self, other)

    def __repr__(self) -> str:
        body = ", ".join(f"{m}: {w.degree}-form" for m, w in sorted(self.terms.items(), key=lambda kv: kv[0].sort_key()))
        return f"DecoratedForm({self.ring}; {body or '0'})"


def _merged_times(a: DecoratedForm, b: DecoratedForm) -> Optional[np.ndarray]:
    if a.ring != b.ring:
        raise RingMismatchError(f"cannot combine elements of {a.ring} and {b.ring}")
    if a.grid != b.grid:
        raise RingMismatchError(f"cannot combine elements on grids {a.grid} and {b.grid}")
    if a.times is None:
        return b.times
    if b.times is not None and not np.array_equal(a.times, b.times):
        raise ValueError("decorated forms are sampled at different times")
    return a.times


def df_add(a: DecoratedForm, b: DecoratedForm) -> DecoratedForm:
    times = _merged_times(a, b)
    terms = dict(a.terms)
    for mono, form in b.terms.items():
        _accumulate(terms, mono, form)
    return DecoratedForm(a.ring, a.grid, terms, times)


def df_mul(a: DecoratedForm, b: DecoratedForm) -> DecoratedForm:
    """Graded product; terms whose form degree would exceed 3 are zero and dropped."""
    times = _merged_times(a, b)
    terms: Dict[Monomial, Form] = {}
    for ma, wa in a.terms.items():
        for mb, wb in b.terms.items():
            if wa.degree + wb.degree > 3:
                continue
            sign, mono = a.ring.monomial_product(ma, mb)
            if mono is None:
                continue
            if (ma.degree * wb.degree) % 2:
                sign = -sign
            product = wedge(wa, wb)
            _accumulate(terms, mono, product if sign == 1 else product.scaled(sign))
    return DecoratedForm(a.ring, a.grid, terms, times)


def _split_scalar(a: DecoratedForm) -> Tuple[Optional[Form], DecoratedForm]:
    scalar = a.terms.get(ONE)
    rest = a.with_terms({m: w for m, w in a.terms.items() if m != ONE})
    return scalar, rest


def _power_series(nilpotent: DecoratedForm, coefficient) -> DecoratedForm:
    """sum_{n>=0} coefficient(n) * nilpotent^n, stopping when the power vanishes structurally."""
    one = DecoratedForm.one(nilpotent.ring, nilpotent.grid, nilpotent.times)
    result = one.scaled(coefficient(0)) if coefficient(0) != 0 else DecoratedForm.zero(
        nilpotent.ring, nilpotent.grid, nilpotent.times)
    power = one
    for n in count(1):
        power = df_mul(power, nilpotent)
        if not power.terms:
            logger.debug(f"series terminated after {n - 1} powers")
            return result
        if n > SERIES_GUARD:
            raise DegreeError("series does not terminate; is the non-scalar part nilpotent?")
        result = result + power.scaled(coefficient(n))


def _inverse_factorial(n: int) -> float:
    value = 1.0
    for i in range(2, n + 1):
        value /= i
    return value


def df_exp(a: DecoratedForm) -> DecoratedForm:
    """exp(f + N) = e^f * sum N^n / n!  for a total-degree-0 element with scalar part f."""
    if a.total_degrees - {0}:
        raise DegreeError(f"exp needs total degree 0, got {sorted(a.total_degrees)}")
    scalar, nilpotent = _split_scalar(a)
    result = _power_series(nilpotent, _inverse_factorial)
    if scalar is None:
        return result
    rho = np.exp(scalar.components[0])
    return result.with_terms({m: w.times_function(rho) for m, w in result.terms.items()})


def df_log(a: DecoratedForm) -> DecoratedForm:
    """Inverse of df_exp for elements whose scalar part is a positive function."""
    scalar, rest = _split_scalar(a)
    if scalar is None or scalar.degree != 0 or np.min(scalar.components) <= 0:
        raise DensityError("log needs a strictly positive scalar part")
    rho = scalar.components[0]
    normalized = rest.with_terms({m: w.times_function(1.0 / rho) for m, w in rest.terms.items()})
    result = _power_series(normalized, lambda n: 0.0 if n == 0 else (-1.0) ** (n + 1) / n)
    return result + a.with_terms({ONE: Form(a.grid, 0, np.log(rho)[None])})


def df_delta_total(a: DecoratedForm, fd_order: int = FD_ORDER_DEFAULT) -> DecoratedForm:
    """(delta_M (x) 1 + 1 (x) d_R), with d_R t = dt realized by finite differences."""
    terms: Dict[Monomial, Form] = {}
    sampled = a.ring.has(DT)
    dt_mono = Monomial.of(DT) if sampled else None
    for mono, form in a.terms.items():
        if form.degree > 0:
            _accumulate(terms, mono, codifferential(form))
        form_sign = -1 if form.degree % 2 else 1
        for target, mult in a.ring.monomial_differential(mono).items():
            _accumulate(terms, target, form.scaled(form_sign * mult))
        if sampled and form.is_family:
            sign, target = a.ring.monomial_product(dt_mono, mono)
            if target is not None:
                derivative = time_derivative(form, a.times, fd_order)
                _accumulate(terms, target, derivative.scaled(form_sign * sign))
    return DecoratedForm(a.ring, a.grid, terms, a.times)


def coefficient_of(a: DecoratedForm, mono: Monomial) -> Form:
    """Stored Form of `mono`, or the zero form of the degree fixed by a's total degree."""
    a.ring.check_monomial(mono)
    if mono in a.terms:
        return a.terms[mono]
    degree = a.total_degree - mono.degree
    if not 0 <= degree <= 3:
        raise DegreeError(f"no form of degree {degree} can accompany {mono}")
    batch = (len(a.times),) if a.times is not None else ()
    return Form.zero(a.grid, degree, batch)


# --- symbolic expansion ---

def exp_symbolic(element: RingElement, prefactor: sympy.Expr = sympy.Symbol("rho")) -> RingElement:
    """
    Exact exponential in a free graded-commutative algebra of symbolic forms and
    parameters. `prefactor` stands for e^f of an absent scalar part; a scalar
    coefficient c present in `element` multiplies it by exp(c).
    """
    if any(mono.degree != 0 for mono in element.coefficients):
        raise DegreeError("exp needs a total-degree-0 element")
    ring = element.ring
    scalar = element.coefficients.get(ONE, 0)
    nilpotent = RingElement(ring, {m: c for m, c in element.coefficients.items() if m != ONE})
    power = RingElement.one(ring)
    result = RingElement.one(ring)
    for n in count(1):
        power = power * nilpotent
        if power.is_zero:
            break
        if n > SERIES_GUARD:
            raise DegreeError("symbolic series does not terminate")
        result = result + power * sympy.Rational(1, sympy.factorial(n))
    return result * (prefactor * sympy.exp(scalar))


HOMOTOPY_SLOTS: Dict[str, Tuple[int, Tuple[GradedVariable, ...]]] = {
    "f": (0, ()),
    "X": (1, (DT,)),
    "V": (1, (EPS,)),
    "pi": (2, (DT, EPS)),
    "sigma": (2, (DEPS,)),
    "Phi": (3, (DT, DEPS)),
    "Psi": (3, (EPS, DEPS)),
}


def slot_monomial(name: str) -> Monomial:
    _, variables = HOMOTOPY_SLOTS[name]
    return Monomial.of(*variables) if variables else ONE


def symbolic_homotopy_element() -> Tuple[RingElement, Dict[str, GradedVariable]]:
    """The generic X dt + V eps + pi dt eps + sigma deps + Phi dt deps + Psi eps deps, symbolically."""
    symbols = {}
    for position, (name, (degree, _)) in enumerate(HOMOTOPY_SLOTS.items()):
        if name != "f":
            symbols[name] = form_symbol(name, degree, position)
    ring = epsilon_deps_ring().with_interval().with_form_symbols(symbols.values())
    coefficients = {}
    for name, symbol in symbols.items():
        coefficients[Monomial.of(symbol, *HOMOTOPY_SLOTS[name][1])] = sympy.Integer(1)
    return RingElement(ring, coefficients), symbols


# --- homotopy data and residual reports ---

@dataclass(frozen=True, eq=False)
class HomotopyData:
    """
    Slots of  f + X dt + V eps + pi dt eps + sigma deps + Phi dt deps + Psi eps deps.

    `ring` is the collection ring (R, R[eps] or R[eps,deps]); the homotopy lives in
    its interval extension. Populated slots are time-sampled families over `times`.
    """
    ring: RingSpec
    grid: Grid
    times: np.ndarray
    f: Optional[Form] = None
    X: Optional[Form] = None
    V: Optional[Form] = None
    pi: Optional[Form] = None
    sigma: Optional[Form] = None
    Phi: Optional[Form] = None
    Psi: Optional[Form] = None

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        interval = self.interval_ring
        for name in self.populated():
            form = getattr(self, name)
            degree, variables = HOMOTOPY_SLOTS[name]
            if form.degree != degree:
                raise DegreeError(f"slot {name} needs a {degree}-form, got degree {form.degree}")
            if any(not interval.has(v) for v in variables):
                raise RingMismatchError(f"slot {name} is not available in {interval}")
            if form.grid != self.grid:
                raise RingMismatchError(f"slot {name} lives on a different grid")
            if form.is_family and form.batch_shape[0] != len(self.times):
                raise ValueError(f"slot {name} has {form.batch_shape[0]} samples, expected {len(self.times)}")

    @property
    def interval_ring(self) -> RingSpec:
        return self.ring.with_interval()

    def populated(self) -> List[str]:
        return [name for name in HOMOTOPY_SLOTS if getattr(self, name) is not None]

    def slot(self, name: str) -> Form:
        form = getattr(self, name)
        if form is None:
            raise SlotError(f"homotopy slot {name} is not populated")
        return form

    def with_slots(self, **slots: Optional[Form]) -> "HomotopyData":
        return replace(self, **slots)

    def to_decorated(self) -> DecoratedForm:
        terms = {slot_monomial(name): getattr(self, name) for name in self.populated()}
        return DecoratedForm(self.interval_ring, self.grid, terms, self.times)

    def collection(self) -> DecoratedForm:
        """The t-family of collections: every slot without a dt factor."""
        terms = {slot_monomial(name): getattr(self, name) for name in self.populated()
                 if DT not in HOMOTOPY_SLOTS[name][1]}
        return DecoratedForm(self.ring, self.grid, terms, self.times)

    def at_time(self, index: int) -> DecoratedForm:
        family = self.collection()
        return DecoratedForm(self.ring, self.grid, {m: w.at(index) for m, w in family.terms.items()})


@dataclass
class ResidualReport:
    """Sup-norm residual per named equation and per time sample."""
    residuals: Dict[str, np.ndarray]
    tolerance: float
    informational: Dict[str, np.ndarray] = field(default_factory=dict)

    def max_residual(self, name: Optional[str] = None) -> float:
        if name is not None:
            return float(np.max(self.residuals[name]))
        return max((float(np.max(v)) for v in self.residuals.values()), default=0.0)

    @property
    def failures(self) -> List[str]:
        return sorted(name for name, values in self.residuals.items() if np.max(values) > self.tolerance)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> Dict:
        def table(values: Dict[str, np.ndarray]) -> Dict:
            return {name: {"max": float(np.max(v)), "per_sample": [float(x) for x in np.atleast_1d(v)]}
                    for name, v in sorted(values.items())}

        return {
            "tolerance": float(self.tolerance),
            "passed": self.passed,
            "failures": self.failures,
            "equations": table(self.residuals),
            "informational": table(self.informational),
        }
