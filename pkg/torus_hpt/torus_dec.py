"""
Exterior calculus on the flat 3-torus [0, 2*pi)^3.

Forms are stored as frame-component arrays on an N^3 periodic collocation
grid, optionally with one leading batch axis holding time samples:

    components.shape == (C(3, k), N, N, N)       static form
    components.shape == (C(3, k), T, N, N, N)    time-sampled family

Frame bases: k=1 (dx, dy, dz), k=2 (dy^dz, dz^dx, dx^dy), k=3 dx^dy^dz.
Derivatives are spectral (FFT over the last three axes).
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BandLimitError, DegreeOverflow, MeanError, RingMismatchError

logger = logging.getLogger("torus_dec")

PERIOD = 2.0 * math.pi
SPATIAL_AXES = (-3, -2, -1)

FRAME: Dict[int, List[Tuple[int, ...]]] = {
    0: [()],
    1: [(0,), (1,), (2,)],
    2: [(1, 2), (2, 0), (0, 1)],
    3: [(0, 1, 2)],
}
FRAME_NAMES: Dict[int, List[str]] = {
    0: ["1"],
    1: ["dx", "dy", "dz"],
    2: ["dy^dz", "dz^dx", "dx^dy"],
    3: ["dV"],
}


def _sort_sign(indices: Sequence[int]) -> Tuple[int, Optional[Tuple[int, ...]]]:
    """Sign of the permutation sorting `indices`; (0, None) on a repeated index."""
    if len(set(indices)) != len(indices):
        return 0, None
    letters = list(indices)
    sign = 1
    for i in range(len(letters)):
        for j in range(len(letters) - 1 - i):
            if letters[j] > letters[j + 1]:
                letters[j], letters[j + 1] = letters[j + 1], letters[j]
                sign = -sign
    return sign, tuple(letters)


def _frame_index(degree: int, sorted_indices: Tuple[int, ...]) -> Tuple[int, int]:
    """Frame slot and sign with e_sorted = sign * FRAME[degree][slot]."""
    for slot, element in enumerate(FRAME[degree]):
        sign, key = _sort_sign(element)
        if key == sorted_indices:
            return slot, sign
    raise KeyError(sorted_indices)


def _build_wedge_table() -> Dict[Tuple[int, int], List[Tuple[int, int, int, int]]]:
    table = {}
    for j, k in product(range(4), range(4)):
        if j + k > 3:
            continue
        entries = []
        for ia, left in enumerate(FRAME[j]):
            for ib, right in enumerate(FRAME[k]):
                sign, key = _sort_sign(left + right)
                if sign == 0:
                    continue
                slot, frame_sign = _frame_index(j + k, key)
                entries.append((ia, ib, slot, sign * frame_sign))
        table[(j, k)] = entries
    return table


def _build_star_table() -> Dict[int, List[Tuple[int, int, int]]]:
    # e_I ^ *e_I = dV fixes *e_I = sign * e_J for the complementary J
    table = {}
    for k in range(4):
        entries = []
        for i, element in enumerate(FRAME[k]):
            for j, complement in enumerate(FRAME[3 - k]):
                sign, key = _sort_sign(element + complement)
                if sign != 0:
                    entries.append((i, j, sign))
        table[k] = entries
    return table


WEDGE_TABLE = _build_wedge_table()
STAR_TABLE = _build_star_table()


@dataclass(frozen=True)
class Grid:
    """Periodic collocation grid with N points per axis and period 2*pi."""
    n: int
    dealias_factor: int = 1

    def __post_init__(self):
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"grid size must be a power of two >= 8, got {self.n}")
        if self.dealias_factor < 1:
            raise ValueError(f"dealias_factor must be >= 1, got {self.dealias_factor}")

    @property
    def period(self) -> float:
        return PERIOD

    @property
    def spacing(self) -> float:
        return PERIOD / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    @property
    def volume(self) -> float:
        return PERIOD ** 3

    @cached_property
    def coordinates(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        axis = np.arange(self.n) * self.spacing
        return tuple(np.meshgrid(axis, axis, axis, indexing="ij"))

    @cached_property
    def wavenumbers(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        return k[:, None, None], k[None, :, None], k[None, None, :]

    @cached_property
    def derivative_wavenumbers(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        # odd derivatives drop the unpaired Nyquist mode
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        k[self.n // 2] = 0.0
        return k[:, None, None], k[None, :, None], k[None, None, :]

    @cached_property
    def wavenumber_squared(self) -> np.ndarray:
        kx, ky, kz = self.wavenumbers
        return kx ** 2 + ky ** 2 + kz ** 2


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.asarray(array, dtype=float)
    if array.flags.writeable:
        array = array.copy()
        array.setflags(write=False)
    return array


def _broadcast_pair(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if a.shape == b.shape:
        return a, b
    # static forms broadcast against time-sampled families
    if a.ndim < b.ndim:
        a = a[:, None]
    elif b.ndim < a.ndim:
        b = b[:, None]
    return np.broadcast_arrays(a, b)


@dataclass(frozen=True, eq=False)
class Form:
    """A degree-k differential form given by its frame components."""
    grid: Grid
    degree: int
    components: np.ndarray

    def __post_init__(self):
        if self.degree not in FRAME:
            raise DegreeOverflow(f"form degree {self.degree} outside 0..3")
        comps = np.asarray(self.components, dtype=float)
        n = self.grid.n
        expected = len(FRAME[self.degree])
        if comps.ndim not in (4, 5) or comps.shape[0] != expected or comps.shape[-3:] != (n, n, n):
            raise ValueError(
                f"degree-{self.degree} form on N={n} needs shape ({expected}, [T,] {n}, {n}, {n}), "
                f"got {comps.shape}")
        object.__setattr__(self, "components", _readonly(comps))

    @classmethod
    def zero(cls, grid: Grid, degree: int, batch_shape: Tuple[int, ...] = ()) -> "Form":
        return cls(grid, degree, np.zeros((len(FRAME[degree]),) + tuple(batch_shape) + (grid.n,) * 3))

    @classmethod
    def constant(cls, grid: Grid, degree: int, values: Sequence[float]) -> "Form":
        values = np.asarray(values, dtype=float).reshape(len(FRAME[degree]), 1, 1, 1)
        return cls(grid, degree, np.broadcast_to(values, (len(FRAME[degree]),) + (grid.n,) * 3).copy())

    @classmethod
    def from_functions(cls, grid: Grid, degree: int,
                       functions: Sequence[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]]) -> "Form":
        x, y, z = grid.coordinates
        arrays = [np.broadcast_to(fn(x, y, z), x.shape) for fn in functions]
        return cls(grid, degree, np.stack(arrays))

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.components.shape[1:-3]

    @property
    def is_family(self) -> bool:
        return len(self.batch_shape) == 1

    def at(self, index: int) -> "Form":
        if not self.is_family:
            return self
        return Form(self.grid, self.degree, self.components[:, index])

    def _check_compatible(self, other: "Form") -> None:
        if other.grid != self.grid:
            raise RingMismatchError(f"forms live on different grids ({self.grid} vs {other.grid})")
        if other.degree != self.degree:
            raise ValueError(f"cannot add a {self.degree}-form and a {other.degree}-form")

    def __add__(self, other: "Form") -> "Form":
        self._check_compatible(other)
        a, b = _broadcast_pair(self.components, other.components)
        return Form(self.grid, self.degree, a + b)

    def __sub__(self, other: "Form") -> "Form":
        return self + (-other)

    def __neg__(self) -> "Form":
        return Form(self.grid, self.degree, -self.components)

    def scaled(self, factor: float) -> "Form":
        return Form(self.grid, self.degree, self.components * factor)

    def times_function(self, values: np.ndarray) -> "Form":
        """Pointwise product with a function given as raw grid values."""
        values = np.asarray(values, dtype=float)
        comps = self.components
        if values.ndim > comps.ndim - 1:
            comps = comps[:, None]
        return Form(self.grid, self.degree, comps * values[None])

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.components))) if self.components.size else 0.0

    def sup_norm_per_sample(self) -> np.ndarray:
        if not self.is_family:
            return np.array([self.sup_norm()])
        return np.max(np.abs(self.components), axis=(0, 2, 3, 4))

    def __repr__(self) -> str:
        return f"Form(degree={self.degree}, N={self.grid.n}, batch={self.batch_shape})"


@dataclass(frozen=True, eq=False)
class VectorField:
    """Vector field in the orthonormal frame (e_x, e_y, e_z)."""
    grid: Grid
    components: np.ndarray

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=float)
        n = self.grid.n
        if comps.ndim not in (4, 5) or comps.shape[0] != 3 or comps.shape[-3:] != (n, n, n):
            raise ValueError(f"vector field on N={n} needs shape (3, [T,] {n}, {n}, {n}), got {comps.shape}")
        object.__setattr__(self, "components", _readonly(comps))

    @classmethod
    def from_functions(cls, grid: Grid, functions) -> "VectorField":
        x, y, z = grid.coordinates
        return cls(grid, np.stack([np.broadcast_to(fn(x, y, z), x.shape) for fn in functions]))

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.components.shape[1:-3]

    @property
    def is_family(self) -> bool:
        return len(self.batch_shape) == 1

    def at(self, index: int) -> "VectorField":
        if not self.is_family:
            return self
        return VectorField(self.grid, self.components[:, index])

    def __add__(self, other: "VectorField") -> "VectorField":
        a, b = _broadcast_pair(self.components, other.components)
        return VectorField(self.grid, a + b)

    def __neg__(self) -> "VectorField":
        return VectorField(self.grid, -self.components)

    def __sub__(self, other: "VectorField") -> "VectorField":
        return self + (-other)

    def scaled(self, factor: float) -> "VectorField":
        return VectorField(self.grid, self.components * factor)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.components)))


# --- spectral kernels ---

def _fft(values: np.ndarray) -> np.ndarray:
    return np.fft.fftn(values, axes=SPATIAL_AXES)


def _ifft(values: np.ndarray) -> np.ndarray:
    return np.real(np.fft.ifftn(values, axes=SPATIAL_AXES))


def _partials(values: np.ndarray, grid: Grid) -> List[np.ndarray]:
    spectrum = _fft(values)
    return [_ifft(1j * k * spectrum) for k in grid.derivative_wavenumbers]


def _retained_indices(n: int, m: int) -> Tuple[np.ndarray, np.ndarray]:
    """Coarse and fine FFT indices of the modes |k| < n/2 (Nyquist dropped)."""
    half = n // 2
    coarse = np.r_[0:half, half + 1:n]
    fine = np.r_[0:half, m - half + 1:m]
    return coarse, fine


def _pad_spectrum(values: np.ndarray, n: int, m: int) -> np.ndarray:
    """Values on an n-grid re-sampled on an m-grid (m >= n) by zero-padding the spectrum."""
    coarse, fine = _retained_indices(n, m)
    spectrum = _fft(values)
    padded = np.zeros(values.shape[:-3] + (m, m, m), dtype=complex)
    padded[(Ellipsis,) + np.ix_(fine, fine, fine)] = spectrum[(Ellipsis,) + np.ix_(coarse, coarse, coarse)]
    return _ifft(padded) * (m / n) ** 3


def _dealiased_product(a: np.ndarray, b: np.ndarray, grid: Grid) -> np.ndarray:
    n = grid.n
    m = n * grid.dealias_factor
    coarse, fine = _retained_indices(n, m)
    product_fine = _pad_spectrum(a, n, m) * _pad_spectrum(b, n, m)
    spectrum = _fft(product_fine)
    trimmed = np.zeros(product_fine.shape[:-3] + (n, n, n), dtype=complex)
    trimmed[(Ellipsis,) + np.ix_(coarse, coarse, coarse)] = spectrum[(Ellipsis,) + np.ix_(fine, fine, fine)]
    return _ifft(trimmed) * (n / m) ** 3


def interpolate(omega: Form, grid: Grid) -> Form:
    """Trigonometric interpolation of `omega` onto a grid at least as fine as its own."""
    n, m = omega.grid.n, grid.n
    if m < n:
        raise ValueError(f"interpolation needs a finer grid, got N={n} -> N={m}")
    if m == n:
        return Form(grid, omega.degree, omega.components)
    return Form(grid, omega.degree, _pad_spectrum(omega.components, n, m))


def pointwise_product(a: np.ndarray, b: np.ndarray, grid: Grid) -> np.ndarray:
    if grid.dealias_factor == 1:
        return a * b
    a, b = np.broadcast_arrays(a, b)
    return _dealiased_product(a, b, grid)


# --- operators ---

def exterior_derivative(omega: Form) -> Form:
    """Spectral de Rham differential d: Omega^k -> Omega^(k+1)."""
    k = omega.degree
    if k == 3:
        raise DegreeOverflow("d of a 3-form on a 3-manifold is not representable")
    grid = omega.grid
    out = np.zeros((len(FRAME[k + 1]),) + omega.components.shape[1:])
    for ib in range(omega.n_components):
        partials = _partials(omega.components[ib], grid)
        for ia, jb, slot, sign in WEDGE_TABLE[(1, k)]:
            if jb == ib:
                out[slot] += sign * partials[ia]
    return Form(grid, k + 1, out)


def hodge_star(omega: Form) -> Form:
    k = omega.degree
    out = np.zeros((len(FRAME[3 - k]),) + omega.components.shape[1:])
    for i, j, sign in STAR_TABLE[k]:
        out[j] += sign * omega.components[i]
    return Form(omega.grid, 3 - k, out)


def codifferential(omega: Form) -> Form:
    """delta = (-1)^(3k+1) * d * on k-forms; the zero 0-form on functions."""
    k = omega.degree
    if k == 0:
        return Form.zero(omega.grid, 0, omega.batch_shape)
    sign = -1.0 if (3 * k + 1) % 2 else 1.0
    return hodge_star(exterior_derivative(hodge_star(omega))).scaled(sign)


def wedge(alpha: Form, beta: Form) -> Form:
    if alpha.grid != beta.grid:
        raise RingMismatchError("wedge of forms on different grids")
    j, k = alpha.degree, beta.degree
    if j + k > 3:
        raise DegreeOverflow(f"wedge of a {j}-form and a {k}-form exceeds degree 3")
    a, b = _broadcast_pair(alpha.components, beta.components)
    out = np.zeros((len(FRAME[j + k]),) + a.shape[1:])
    for ia, ib, slot, sign in WEDGE_TABLE[(j, k)]:
        out[slot] += sign * pointwise_product(a[ia], b[ib], alpha.grid)
    return Form(alpha.grid, j + k, out)


def flat(u: VectorField) -> Form:
    return Form(u.grid, 1, u.components)


def sharp(omega: Form) -> VectorField:
    if omega.degree != 1:
        raise ValueError(f"sharp expects a 1-form, got degree {omega.degree}")
    return VectorField(omega.grid, omega.components)


def gradient(f: Form) -> VectorField:
    return sharp(exterior_derivative(f))


def divergence(u: VectorField) -> Form:
    return codifferential(flat(u))


def curl(u: VectorField) -> VectorField:
    return sharp(hodge_star(exterior_derivative(flat(u))))


def cross(u: VectorField, v: VectorField) -> VectorField:
    return sharp(hodge_star(wedge(flat(u), flat(v))))


def integrate(omega: Form) -> np.ndarray:
    """Riemann sum of a 3-form; a float, or one value per time sample for families."""
    if omega.degree != 3:
        raise ValueError(f"only 3-forms can be integrated, got degree {omega.degree}")
    total = omega.components[0].sum(axis=SPATIAL_AXES) * omega.grid.cell_volume
    return total if omega.is_family else float(total)


def expectation(omega: Form):
    """E(f) = integral of *f over the normalized volume; zero on forms of degree >= 1."""
    if omega.degree != 0:
        return np.zeros(omega.batch_shape) if omega.is_family else 0.0
    return integrate(hodge_star(omega)) / omega.grid.volume


def harmonic_coefficients(omega: Form) -> np.ndarray:
    """Zero-mode coefficient of every frame component (per sample for families)."""
    return omega.components.mean(axis=SPATIAL_AXES)


def harmonic_projection(omega: Form) -> Form:
    means = harmonic_coefficients(omega)
    comps = np.broadcast_to(means[..., None, None, None], omega.components.shape)
    return Form(omega.grid, omega.degree, comps.copy())


def poisson_solve(h: Form, tol_mean: float = 1e-10) -> Form:
    """Zero-mean phi with delta(d phi) = h, mode by mode (delta d = Laplacian on functions)."""
    if h.degree != 0:
        raise ValueError(f"poisson_solve expects a 0-form, got degree {h.degree}")
    mean = np.max(np.abs(np.atleast_1d(expectation(h))))
    scale = max(1.0, h.sup_norm())
    if mean > tol_mean * scale:
        raise MeanError(f"right-hand side has mean {mean:.3e} (tolerance {tol_mean * scale:.3e})")
    k2 = h.grid.wavenumber_squared.copy()
    k2[0, 0, 0] = 1.0
    spectrum = -_fft(h.components) / k2
    spectrum[..., 0, 0, 0] = 0.0
    return Form(h.grid, 0, _ifft(spectrum))


def _wedge_or_zero(alpha: Optional[Form], beta: Optional[Form]) -> Optional[Form]:
    if alpha is None or beta is None or alpha.degree + beta.degree > 3:
        return None
    return wedge(alpha, beta)


def _delta_or_zero(omega: Optional[Form]) -> Optional[Form]:
    if omega is None or omega.degree == 0:
        return None
    return codifferential(omega)


def bv_seven_term_residual(alpha: Form, beta: Form, gamma: Form) -> float:
    """
    Sup-norm defect of the second-order relation

        delta(a b c) = delta(a b) c + (-1)^|a| a delta(b c) + (-1)^(|b||c|) delta(a c) b
                       - delta(a) b c - (-1)^|a| a delta(b) c - (-1)^(|a|+|b|) a b delta(c)

    where terms of overflowing degree count as zero.
    """
    a, b, c = alpha.degree, beta.degree, gamma.degree
    w, d = _wedge_or_zero, _delta_or_zero
    lhs = [(1, d(w(w(alpha, beta), gamma)))]
    rhs = [
        (1, w(d(w(alpha, beta)), gamma)),
        ((-1) ** a, w(alpha, d(w(beta, gamma)))),
        ((-1) ** (b * c), w(d(w(alpha, gamma)), beta)),
        (-1, w(w(d(alpha), beta), gamma)),
        (-((-1) ** a), w(w(alpha, d(beta)), gamma)),
        (-((-1) ** (a + b)), w(w(alpha, beta), d(gamma))),
    ]
    defect = None
    for sign, term in lhs + [(-s, t) for s, t in rhs]:
        if term is None:
            continue
        term = term.scaled(sign)
        defect = term if defect is None else defect + term
    return 0.0 if defect is None else defect.sup_norm()


def random_bandlimited(grid: Grid, degree: int, kmax: int, seed: int,
                       divergence_free: bool = False) -> Form:
    """Deterministic random form with Fourier support on |k|_inf <= kmax."""
    if kmax > grid.n // 4:
        raise BandLimitError(f"kmax={kmax} exceeds N/4={grid.n // 4}")
    if kmax < 0:
        raise BandLimitError(f"kmax must be non-negative, got {kmax}")
    if divergence_free and degree != 1:
        raise ValueError("divergence_free applies to 1-forms only")
    n = grid.n
    ncomp = len(FRAME[degree])
    rng = np.random.default_rng(seed)
    kx, ky, kz = grid.wavenumbers
    mask = (np.abs(kx) <= kmax) & (np.abs(ky) <= kmax) & (np.abs(kz) <= kmax)
    shape = (ncomp, n, n, n)
    spectrum = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * mask
    if divergence_free:
        k2 = grid.wavenumber_squared.copy()
        k2[0, 0, 0] = 1.0
        k_dot = kx * spectrum[0] + ky * spectrum[1] + kz * spectrum[2]
        for i, k in enumerate((kx, ky, kz)):
            spectrum[i] = spectrum[i] - k * k_dot / k2
    n_modes = int(mask.sum())
    values = np.real(np.fft.ifftn(spectrum, axes=SPATIAL_AXES)) * n ** 3 / math.sqrt(n_modes)
    logger.debug(f"random_bandlimited degree={degree} kmax={kmax} seed={seed} modes={n_modes}")
    return Form(grid, degree, values)


def l2_inner(alpha: Form, beta: Form) -> float:
    """<alpha, beta>_{L^2} = integral of alpha ^ *beta (orthonormal frame)."""
    if alpha.degree != beta.degree:
        raise ValueError("L2 inner product needs forms of equal degree")
    return float(np.sum(alpha.components * beta.components) * alpha.grid.cell_volume)
