"""
Closed-form fluid states on the flat 3-torus, all with Fourier support at
wavenumber <= 2, plus random divergence-free generators for property tests.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ConstructionError, DensityError
from .hrv_engine import FluidState, euler_momentum_residual
from .torus_dec import Form, Grid, VectorField, random_bandlimited, sharp

logger = logging.getLogger("field_zoo")

DT_DEFAULT = 1.0 / 64.0
N_STEPS_DEFAULT = 8
U0_DEFAULT = (1.0, 0.5, 0.25)
PROFILE_AMPLITUDE_DEFAULT = 0.2
TG_FIT_TOLERANCE = 1e-8

sin, cos = np.sin, np.cos

VelocityFn = Callable[[np.ndarray, np.ndarray, np.ndarray, float], Tuple[np.ndarray, np.ndarray, np.ndarray]]
ScalarFn = Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]


def sample_times(dt: float = DT_DEFAULT, n_steps: int = N_STEPS_DEFAULT, t0: float = 0.0) -> np.ndarray:
    return t0 + dt * np.arange(n_steps + 1)


def _unit(x, y, z, t):
    return np.ones_like(x)


def _zero(x, y, z, t):
    return np.zeros_like(x)


@dataclass(frozen=True, eq=False)
class AnalyticField:
    """A named closed-form state; `lemma` is the identification it is meant to exercise."""
    name: str
    velocity: VelocityFn
    density: ScalarFn = _unit
    pressure: ScalarFn = _zero
    params: Mapping[str, Any] = field(default_factory=dict)
    steady: bool = True
    lemma: str = "euler"

    def _snapshot(self, grid: Grid, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        x, y, z = grid.coordinates
        rho = np.broadcast_to(self.density(x, y, z, t), x.shape)
        u = np.stack([np.broadcast_to(c, x.shape) for c in self.velocity(x, y, z, t)])
        p = np.broadcast_to(self.pressure(x, y, z, t), x.shape)
        return rho, u, p

    def evaluate(self, grid: Grid, times: Optional[Sequence[float]] = None) -> FluidState:
        times = sample_times() if times is None else np.asarray(times, dtype=float)
        n_samples = len(times)
        if self.steady:
            rho, u, p = self._snapshot(grid, float(times[0]))
            shape = (n_samples,) + rho.shape
            rho_f = np.broadcast_to(rho[None], shape)[None]
            u_f = np.broadcast_to(u[:, None], (3,) + shape)
            p_f = np.broadcast_to(p[None], shape)[None]
        else:
            snapshots = [self._snapshot(grid, float(t)) for t in times]
            rho_f = np.stack([s[0] for s in snapshots])[None]
            u_f = np.stack([s[1] for s in snapshots], axis=1)
            p_f = np.stack([s[2] for s in snapshots])[None]
        logger.debug(f"Evaluated field {self.name} on N={grid.n} at {n_samples} samples")
        return FluidState(Form(grid, 0, rho_f), VectorField(grid, u_f), Form(grid, 0, p_f), times)


def abc_flow(A: float = 1.0, B: float = 1.0, C: float = 1.0) -> AnalyticField:
    """Beltrami ABC flow, rho = 1, p = -|u|^2/2 (steady)."""
    def velocity(x, y, z, t):
        return (A * sin(z) + C * cos(y), B * sin(x) + A * cos(z), C * sin(y) + B * cos(x))

    def pressure(x, y, z, t):
        ux, uy, uz = velocity(x, y, z, t)
        return -0.5 * (ux ** 2 + uy ** 2 + uz ** 2)

    return AnalyticField("abc", velocity, pressure=pressure, params={"A": A, "B": B, "C": C})


def shear_flow(amplitude: float = 1.0) -> AnalyticField:
    """u = (a sin y, 0, 0), rho = 1, p = 0 (steady)."""
    def velocity(x, y, z, t):
        return (amplitude * sin(y), np.zeros_like(x), np.zeros_like(x))

    return AnalyticField("shear", velocity, params={"amplitude": amplitude}, lemma="vorticity")


def _taylor_green_velocity(x, y, z, t):
    return (sin(x) * cos(y), -cos(x) * sin(y), np.zeros_like(x))


def taylor_green_2d(n: int = 32, tol: float = TG_FIT_TOLERANCE) -> AnalyticField:
    """
    Planar Taylor-Green vortex, rho = 1, with p = c1 cos 2x + c2 cos 2y fitted by
    least squares on the momentum residual.
    """
    grid = Grid(n)
    times = sample_times(n_steps=2)

    def residual(c1: float, c2: float) -> np.ndarray:
        candidate = AnalyticField("taylor-green", _taylor_green_velocity,
                                  pressure=lambda x, y, z, t: c1 * cos(2 * x) + c2 * cos(2 * y))
        return euler_momentum_residual(candidate.evaluate(grid, times)).components.ravel()

    base = residual(0.0, 0.0)
    columns = np.stack([residual(1.0, 0.0) - base, residual(0.0, 1.0) - base], axis=1)
    (c1, c2), *_ = np.linalg.lstsq(columns, -base, rcond=None)
    remaining = float(np.max(np.abs(residual(c1, c2))))
    if remaining > tol:
        raise ConstructionError(f"Taylor-Green pressure fit leaves momentum residual {remaining:.3e} > {tol:.1e}")
    logger.info(f"Taylor-Green pressure fit: c1={c1:.15g}, c2={c2:.15g}, residual {remaining:.3e}")

    c1, c2 = float(c1), float(c2)
    return AnalyticField(
        "taylor-green", _taylor_green_velocity,
        pressure=lambda x, y, z, t: c1 * cos(2 * x) + c2 * cos(2 * y),
        params={"c1": c1, "c2": c2, "fit_residual": remaining},
    )


def default_profile(amplitude: float = PROFILE_AMPLITUDE_DEFAULT) -> Callable:
    def profile(x, y, z):
        return 1.0 + amplitude * (sin(x) + 0.5 * cos(2 * y) + 0.5 * sin(z))
    return profile


def transport_solution(profile: Optional[Callable] = None,
                       u0: Sequence[float] = U0_DEFAULT,
                       probe_n: int = 32) -> AnalyticField:
    """rho(x, t) = g(x - u0 t), u = u0, p = 0: an exact time-dependent Euler solution."""
    profile = default_profile() if profile is None else profile
    u0 = tuple(float(c) for c in u0)
    x, y, z = Grid(probe_n).coordinates
    lowest = float(np.min(profile(x, y, z)))
    if lowest <= 0:
        raise DensityError(f"transport profile must be positive (min {lowest:.3e} on the probe grid)")

    def density(x, y, z, t):
        return profile(x - u0[0] * t, y - u0[1] * t, z - u0[2] * t)

    def velocity(x, y, z, t):
        return tuple(np.full_like(x, c) for c in u0)

    return AnalyticField("transport", velocity, density=density, params={"u0": list(u0)},
                         steady=False, lemma="mass")


def random_divfree(grid: Grid, kmax: int, seed: int) -> VectorField:
    return sharp(random_bandlimited(grid, 1, kmax, seed, divergence_free=True))


def make_field(name: str, A: float = 1.0, B: float = 1.0, C: float = 1.0, amplitude: float = 1.0,
               u0: Sequence[float] = U0_DEFAULT, profile_amplitude: float = PROFILE_AMPLITUDE_DEFAULT,
               n: int = 32) -> AnalyticField:
    """Build a shipped field by name with the parameters that apply to it."""
    builders: Dict[str, Callable[[], AnalyticField]] = {
        "abc": lambda: abc_flow(A, B, C),
        "shear": lambda: shear_flow(amplitude),
        "taylor-green": lambda: taylor_green_2d(n),
        "transport": lambda: transport_solution(default_profile(profile_amplitude), u0),
    }
    try:
        builder = builders[name]
    except KeyError:
        raise ValueError(f"unknown field '{name}'; known: {sorted(builders)}") from None
    return builder()


FIELD_NAMES = ("abc", "shear", "taylor-green", "transport")
