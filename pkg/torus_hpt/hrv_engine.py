"""
Builders and checkers for collections and homotopies of homotopy random
variables built from fluid data (rho, u, p) on the flat 3-torus.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .decorated_forms import (
    FD_ORDER_DEFAULT, DecoratedForm, HomotopyData, ResidualReport, coefficient_of,
    df_delta_total, df_exp, time_derivative,
)
from .errors import DensityError, MassError, RingMismatchError, SlotError
from .graded_params import (
    DEPS, DT, EPS, ONE, Monomial, RingElement, RingSpec, epsilon_deps_ring,
    epsilon_ring, marker, real_ring, ring_by_name,
)
from .torus_dec import (
    FRAME_NAMES, Form, Grid, VectorField, codifferential, cross, curl,
    exterior_derivative, expectation, flat, gradient, harmonic_coefficients,
    hodge_star, integrate, pointwise_product, poisson_solve, sharp, wedge,
)

logger = logging.getLogger("hrv_engine")

TOL_DEFAULT = 1e-8
TOL_MASS_DEFAULT = 1e-10
TOL_REDUNDANCY_DEFAULT = 1e-9

EQUATION_NAMES = {
    "dt": "mass",
    "eps": "rhoV-divergence",
    "dt*eps": "vorticity",
    "deps": "V-equation",
    "eps*deps": "trivial-equation",
    "deps^2": "Psi-equation",
    "dt*eps*deps": "helicity-equation",
    "dt*deps": "momentum",
}

LEMMA_RINGS = {"mass": "R", "vorticity": "R[eps]", "euler": "R[eps,deps]"}


def equation_name(mono: Monomial) -> str:
    return EQUATION_NAMES.get(str(mono), str(mono))


@dataclass(frozen=True, eq=False)
class FluidState:
    """Time-sampled density, velocity and pressure."""
    rho: Form
    u: VectorField
    p: Form
    times: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        n_samples = len(self.times)
        for name, value in (("rho", self.rho), ("u", self.u), ("p", self.p)):
            if value.batch_shape != (n_samples,):
                raise ValueError(f"{name} must be sampled at {n_samples} times, got batch {value.batch_shape}")
        if self.rho.degree != 0 or self.p.degree != 0:
            raise ValueError("rho and p must be 0-forms")
        if np.min(self.rho.components) <= 0:
            raise DensityError(f"density must be positive (min {np.min(self.rho.components):.3e})")

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    def with_density(self, rho: Form) -> "FluidState":
        return replace(self, rho=rho)

    def sup_norm(self) -> float:
        return max(self.rho.sup_norm(), self.u.sup_norm(), self.p.sup_norm())


@dataclass(frozen=True, eq=False)
class CollectionSpec:
    """
    Defining forms of a collection: f for R, (f, V) for R[eps], (f, sigma) for
    R[eps,deps], where V = delta(rho sigma)/rho and Psi = -V ^ sigma are derived.
    Time-sampled forms need `times`, one per sample.
    """
    ring_name: str
    f: Form
    V: Optional[Form] = None
    sigma: Optional[Form] = None
    times: Optional[np.ndarray] = None

    def __post_init__(self):
        ring_by_name(self.ring_name)
        if self.ring_name == "R[eps]" and self.V is None:
            raise SlotError("an R[eps] collection needs V")
        if self.ring_name == "R[eps,deps]" and self.sigma is None:
            raise SlotError("an R[eps,deps] collection needs sigma")
        sampled = [form for form in (self.f, self.V, self.sigma) if form is not None and form.is_family]
        if self.times is not None:
            object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
            for form in sampled:
                if form.batch_shape[0] != len(self.times):
                    raise ValueError(f"collection form has {form.batch_shape[0]} samples, expected {len(self.times)}")
        elif sampled:
            raise ValueError("a time-sampled collection needs its sample times")

    @property
    def ring(self) -> RingSpec:
        return ring_by_name(self.ring_name)

    @property
    def rho(self) -> np.ndarray:
        return np.exp(self.f.components[0])

    def derived(self) -> Dict[str, Form]:
        if self.ring_name == "R":
            return {"f": self.f}
        if self.ring_name == "R[eps]":
            return {"f": self.f, "V": self.V}
        rho = self.rho
        V = codifferential(self.sigma.times_function(rho)).times_function(1.0 / rho)
        Psi = -wedge(V, self.sigma)
        return {"f": self.f, "V": V, "sigma": self.sigma, "Psi": Psi}

    def to_decorated(self) -> DecoratedForm:
        monomials = {"f": ONE, "V": Monomial.of(EPS), "sigma": Monomial.of(DEPS),
                     "Psi": Monomial.of(EPS, DEPS)}
        terms = {monomials[name]: form for name, form in self.derived().items()}
        return DecoratedForm(self.ring, self.f.grid, terms, self.times)


@dataclass
class StatisticsReport:
    times: np.ndarray
    statistics: List[RingElement]
    mass: np.ndarray
    cohomology: List[Dict[str, Dict[str, float]]] = field(default_factory=list)
    helicity: Optional[np.ndarray] = None

    def to_dict(self) -> Dict:
        out = {
            "times": [float(t) for t in self.times],
            "mass": [float(m) for m in self.mass],
            "statistics": [{str(m): float(c) for m, c in sorted(s.coefficients.items(), key=lambda kv: kv[0].sort_key())}
                           for s in self.statistics],
        }
        if self.cohomology:
            out["cohomology"] = self.cohomology
        if self.helicity is not None:
            out["helicity"] = [float(h) for h in self.helicity]
        return out


# --- residuals ---

def expected_equations(ring: RingSpec) -> List[Monomial]:
    """Monomials at which delta(exp X) can carry a form of degree 0..3."""
    variables = [v for v in ring.variables if v.degree != 0]
    ranges = [range(2) if v.is_nilpotent else range(4 // abs(v.degree) + 1) for v in variables]
    found = []
    for exponents in product(*ranges):
        powers = tuple((v, e) for v, e in zip(variables, exponents) if e)
        mono = Monomial(powers)
        if 0 <= -1 - mono.degree <= 3:
            found.append(mono)
    return sorted(found, key=lambda m: m.sort_key())


def _tolerance(tol: float, scale: float) -> float:
    return tol * max(1.0, scale)


def _residual_report(element: DecoratedForm, tol: float, fd_order: int) -> ResidualReport:
    exponential = df_exp(element)
    delta = df_delta_total(exponential, fd_order)
    residuals = {}
    for mono in expected_equations(element.ring):
        residuals[equation_name(mono)] = coefficient_of(delta, mono).sup_norm_per_sample()
    unexpected = set(delta.terms) - set(expected_equations(element.ring))
    if unexpected:
        logger.warning(f"delta(exp) has terms outside the expected equations: {sorted(map(str, unexpected))}")
    return ResidualReport(residuals, _tolerance(tol, exponential.sup_norm()))


def collection_residual(c: CollectionSpec, tol: float = TOL_DEFAULT) -> ResidualReport:
    report = _residual_report(c.to_decorated(), tol, FD_ORDER_DEFAULT)
    logger.info(f"Collection residual ({c.ring_name}): max {report.max_residual():.3e}, passed={report.passed}")
    return report


def homotopy_residual(h: HomotopyData, tol: float = TOL_DEFAULT,
                      fd_order: int = FD_ORDER_DEFAULT) -> ResidualReport:
    report = _residual_report(h.to_decorated(), tol, fd_order)
    logger.info(f"Homotopy residual ({h.interval_ring}): max {report.max_residual():.3e}, passed={report.passed}")
    return report


# --- lemma identifications ---

def build_mass_homotopy(state: FluidState) -> HomotopyData:
    """f = log rho, X = u_flat over R[[t,dt]]."""
    if np.min(state.rho.components) <= 0:
        raise DensityError("mass homotopy needs a positive density")
    f = Form(state.grid, 0, np.log(state.rho.components))
    logger.info(f"Built mass homotopy on N={state.grid.n}, {len(state.times)} samples")
    return HomotopyData(real_ring(), state.grid, state.times, f=f, X=flat(state.u))


def kinetic_form(X: Form) -> Form:
    """1/2 delta(X ^ *X)."""
    return codifferential(wedge(X, hodge_star(X))).scaled(0.5)


def build_vorticity_homotopy(u: VectorField, times: Sequence[float]) -> HomotopyData:
    """f = 0, X = u_flat, V = -*dX, pi = 1/2 delta(X ^ *X) over R[eps][[t,dt]]."""
    X = flat(u)
    batch = X.batch_shape
    logger.info(f"Built vorticity homotopy on N={u.grid.n}, {len(times)} samples")
    return HomotopyData(
        epsilon_ring(), u.grid, times,
        f=Form.zero(u.grid, 0, batch),
        X=X,
        V=-hodge_star(exterior_derivative(X)),
        pi=kinetic_form(X),
    )


def build_euler_homotopy(state: FluidState) -> HomotopyData:
    """
    rho = e^f, X = u_flat, V = -*d(rho X)/rho, pi = 1/2 delta(X ^ *X) - delta(X) *X,
    sigma = *X, Phi = *p/rho, Psi = X ^ dX over R[eps,deps][[t,dt]].
    """
    rho = state.rho.components[0]
    if np.min(rho) <= 0:
        raise DensityError("Euler homotopy needs a positive density")
    X = flat(state.u)
    sigma = hodge_star(X)
    V = -hodge_star(exterior_derivative(X.times_function(rho))).times_function(1.0 / rho)
    pi = kinetic_form(X) - wedge(codifferential(X), sigma)
    logger.info(f"Built Euler homotopy on N={state.grid.n}, {len(state.times)} samples")
    return HomotopyData(
        epsilon_deps_ring(), state.grid, state.times,
        f=Form(state.grid, 0, np.log(state.rho.components)),
        X=X,
        V=V,
        pi=pi,
        sigma=sigma,
        Phi=hodge_star(state.p).times_function(1.0 / rho),
        Psi=wedge(X, exterior_derivative(X)),
    )


def recover_fluid_state(h: HomotopyData) -> FluidState:
    """Converse direction: rho = e^f, u = X_sharp, p = *(rho Phi) (zero when Phi is absent)."""
    f, X = h.slot("f"), h.slot("X")
    rho = np.exp(f.components[0])
    if h.Phi is None:
        logger.debug("Phi not populated; recovered pressure is zero")
        p = Form.zero(h.grid, 0, X.batch_shape)
    else:
        p = hodge_star(h.Phi.times_function(rho))
    return FluidState(Form(h.grid, 0, rho[None]), sharp(X), p, h.times)


# --- constraints ---

def _deviation(a: Form, b: Form) -> np.ndarray:
    return (a - b).sup_norm_per_sample()


def _component_deviation(a: Form, b: Form) -> np.ndarray:
    """Frame-component difference, ignoring that a and b may differ in degree."""
    diff = np.abs(a.components - b.components)
    if diff.ndim == 5:
        return np.max(diff, axis=(0, 2, 3, 4))
    return np.array([np.max(diff)])


def constraint_check(h: HomotopyData, lemma: str) -> ResidualReport:
    """
    Deviation from the identifications the lemma imposes. Tolerance 1e-10 relative
    to the slot magnitudes; the literal frame reading of the vorticity constraint
    (V against X component-wise) is informational only.
    """
    X = h.slot("X")
    residuals: Dict[str, np.ndarray] = {}
    informational: Dict[str, np.ndarray] = {}
    if lemma == "mass":
        # f = log rho and X = u_flat are the whole identification; nothing is constrained
        pass
    elif lemma == "vorticity":
        residuals["constant-density"] = h.slot("f").sup_norm_per_sample()
        residuals["vorticity"] = _deviation(h.slot("V"), -hodge_star(exterior_derivative(X)))
        residuals["kinetic"] = _deviation(h.slot("pi"), kinetic_form(X))
        informational["vorticity-literal"] = _component_deviation(h.slot("V"), X)
    elif lemma == "euler":
        rho = np.exp(h.slot("f").components[0])
        V_expected = -hodge_star(exterior_derivative(X.times_function(rho))).times_function(1.0 / rho)
        residuals["velocity"] = _deviation(h.slot("sigma"), hodge_star(X))
        residuals["V-identification"] = _deviation(h.slot("V"), V_expected)
        residuals["modified-kinetic"] = _deviation(
            h.slot("pi"), kinetic_form(X) - wedge(codifferential(X), hodge_star(X)))
        residuals["Psi-identification"] = _deviation(h.slot("Psi"), wedge(X, exterior_derivative(X)))
    else:
        raise ValueError(f"unknown lemma '{lemma}'; expected one of {sorted(LEMMA_RINGS)}")
    scale = max(h.slot(name).sup_norm() for name in h.populated())
    return ResidualReport(residuals, _tolerance(1e-10, scale), informational)


# --- statistics ---

def _collection_family(source: Union[CollectionSpec, HomotopyData]) -> Tuple[DecoratedForm, np.ndarray]:
    if isinstance(source, HomotopyData):
        return source.collection(), source.times
    element = source.to_decorated()
    times = element.times if element.times is not None else np.array([0.0])
    return element, times


def _per_sample(values, n_samples: int) -> np.ndarray:
    return np.broadcast_to(np.atleast_1d(np.asarray(values, dtype=float)), (n_samples,))


def statistics(source: Union[CollectionSpec, HomotopyData]) -> StatisticsReport:
    """E(exp X) per sample, applied monomial-wise (only 0-form coefficients survive)."""
    element, times = _collection_family(source)
    exponential = df_exp(element)
    n_samples = len(times)
    per_sample: List[Dict[Monomial, float]] = [dict() for _ in range(n_samples)]
    for mono, form in exponential.terms.items():
        if form.degree != 0:
            continue
        values = _per_sample(expectation(form), n_samples)
        for i in range(n_samples):
            per_sample[i][mono] = float(values[i])
    stats = [RingElement(element.ring, coeffs) for coeffs in per_sample]
    mass = np.array([float(s.coefficients.get(ONE, 0.0)) for s in stats])
    report = StatisticsReport(times=np.asarray(times), statistics=stats, mass=mass)
    if isinstance(source, HomotopyData) and source.Psi is not None:
        report.helicity = helicity(source)
    return report


def cohomology_statistics(source: Union[CollectionSpec, HomotopyData]) -> StatisticsReport:
    """Harmonic projection of every coefficient of exp X in the constant-form basis."""
    report = statistics(source)
    element, times = _collection_family(source)
    exponential = df_exp(element)
    n_samples = len(times)
    tables: List[Dict[str, Dict[str, float]]] = [dict() for _ in range(n_samples)]
    for mono, form in sorted(exponential.terms.items(), key=lambda kv: kv[0].sort_key()):
        coeffs = harmonic_coefficients(form)
        if not form.is_family:
            coeffs = np.repeat(coeffs[:, None], n_samples, axis=1)
        for i in range(n_samples):
            tables[i][str(mono)] = {name: float(coeffs[j, i]) for j, name in enumerate(FRAME_NAMES[form.degree])}
    report.cohomology = tables
    return report


def helicity(h: HomotopyData) -> np.ndarray:
    """Integral of Psi per sample (un-normalized volume, so ABC gives (A^2+B^2+C^2)(2pi)^3)."""
    Psi = h.Psi
    if Psi is None:
        raise SlotError("helicity needs the Psi slot")
    return _per_sample(integrate(Psi), len(h.times)).copy()


def marker_statistics(functions: Sequence[Form], order: int = 4) -> RingElement:
    """
    E(exp(sum_i s_i f_i)) over R[[s_1..s_k]] truncated at total order `order`; the
    coefficient of s^r is E(prod f_i^r_i) / prod r_i!.
    """
    if not functions:
        raise ValueError("marker statistics need at least one function")
    if any(f.degree != 0 or f.is_family for f in functions):
        raise ValueError("marker statistics take static 0-forms")
    ring = replace(real_ring().with_markers(len(functions)), marker_order=order)
    grid = functions[0].grid
    terms = {Monomial.of(marker(i + 1)): f for i, f in enumerate(functions)}
    exponential = df_exp(DecoratedForm(ring, grid, terms))
    coeffs = {mono: float(expectation(form)) for mono, form in exponential.terms.items()}
    return RingElement(ring, coeffs)


def joint_moment(stats: RingElement, exponents: Sequence[int]) -> float:
    """Raw moment E(prod f_i^r_i) read off marker statistics."""
    powers = tuple((marker(i + 1), r) for i, r in enumerate(exponents) if r)
    mono = Monomial(powers)
    return float(stats.coefficient(mono)) * math.prod(math.factorial(r) for r in exponents)


# --- constructive density homotopy ---

def construct_density_homotopy(f0: Form, f1: Form, times: Optional[Sequence[float]] = None,
                               tol_mass: float = TOL_MASS_DEFAULT,
                               tol_mean: float = 1e-10) -> Tuple[HomotopyData, Form]:
    """
    Homotopy between the R-collections f0 and f1 of equal mass:
        rho(t) = (1-t) e^f0 + t e^f1,  Y = d phi with delta(d phi) = e^f1 - e^f0,
        f(t) = log rho(t),  X(t) = -Y / rho(t).
    Returns the homotopy and Y.
    """
    if f0.degree != 0 or f1.degree != 0 or f0.is_family or f1.is_family:
        raise ValueError("density homotopy endpoints are static 0-forms")
    if f0.grid != f1.grid:
        raise RingMismatchError("endpoints live on different grids")
    grid = f0.grid
    rho0, rho1 = np.exp(f0.components[0]), np.exp(f1.components[0])
    mass0 = float(expectation(Form(grid, 0, rho0[None])))
    mass1 = float(expectation(Form(grid, 0, rho1[None])))
    if abs(mass1 - mass0) > tol_mass * max(abs(mass0), abs(mass1)):
        raise MassError(f"masses differ: E(e^f0)={mass0:.12g}, E(e^f1)={mass1:.12g}")

    difference = rho1 - rho0
    # remove the mean left by the mass tolerance before inverting the Laplacian
    difference = difference - difference.mean()
    Y = exterior_derivative(poisson_solve(Form(grid, 0, difference[None]), tol_mean))

    times = np.linspace(0.0, 1.0, 11) if times is None else np.asarray(times, dtype=float)
    t = times[:, None, None, None]
    rho_t = (1.0 - t) * rho0[None] + t * rho1[None]
    X = Form(grid, 1, -Y.components[:, None] / rho_t[None])
    logger.info(f"Constructed density homotopy: mass {mass0:.12g}, |Y|={Y.sup_norm():.3e}, {len(times)} samples")
    homotopy = HomotopyData(real_ring(), grid, times, f=Form(grid, 0, np.log(rho_t)[None]), X=X)
    return homotopy, Y


# --- supplementary consistency checks ---

def redundancy_check(h: HomotopyData, tol: float = TOL_REDUNDANCY_DEFAULT,
                     fd_order: int = FD_ORDER_DEFAULT) -> ResidualReport:
    """
    Formal consequences among the Euler coefficient equations (R_m = coefficient of m in
    delta(exp X)):
        delta(R_deps) + R_eps = 0
        delta(R_dtdeps) + R_dteps - d/dt R_deps = 0
        delta(R_deps^2) + R_epsdeps = 0
        d/dt R_deps^2 - R_dtepsdeps = 0
    """
    ring = h.interval_ring
    if not ring.has(DEPS):
        raise RingMismatchError(f"redundancy relations need deps; homotopy ring is {ring}")
    exponential = df_exp(h.to_decorated())
    delta = df_delta_total(exponential, fd_order)

    def coefficient(*variables):
        return coefficient_of(delta, Monomial.of(*variables))

    deps_sq = Monomial(((DEPS, 2),))
    r_eps, r_deps = coefficient(EPS), coefficient(DEPS)
    r_dteps, r_dtdeps = coefficient(DT, EPS), coefficient(DT, DEPS)
    r_epsdeps, r_dtepsdeps = coefficient(EPS, DEPS), coefficient(DT, EPS, DEPS)
    r_deps_sq = coefficient_of(delta, deps_sq)

    residuals = {
        "delta(V-equation)": (codifferential(r_deps) + r_eps).sup_norm_per_sample(),
        "delta(momentum)": (codifferential(r_dtdeps) + r_dteps
                            - time_derivative(r_deps, h.times, fd_order)).sup_norm_per_sample(),
        "delta(Psi-equation)": (codifferential(r_deps_sq) + r_epsdeps).sup_norm_per_sample(),
        "d/dt(Psi-equation)": (time_derivative(r_deps_sq, h.times, fd_order) - r_dtepsdeps).sup_norm_per_sample(),
    }
    return ResidualReport(residuals, _tolerance(tol, exponential.sup_norm()))


def kinetic_energy_density(u: VectorField) -> Form:
    """|u|^2 / 2 as a 0-form."""
    comps = u.components
    total = sum(pointwise_product(comps[i], comps[i], u.grid) for i in range(3))
    return Form(u.grid, 0, 0.5 * total[None])


def euler_momentum_residual(state: FluidState, fd_order: int = FD_ORDER_DEFAULT) -> VectorField:
    """du/dt + grad(|u|^2/2) - u x curl u + grad(p)/rho."""
    u = state.u
    u_dot = sharp(time_derivative(flat(u), state.times, fd_order))
    pressure_term = VectorField(state.grid, gradient(state.p).components / state.rho.components[0][None])
    return u_dot + gradient(kinetic_energy_density(u)) - cross(u, curl(u)) + pressure_term
