"""
Command-line entry point. Every subcommand writes one JSON report (stdout or
--out) and exits 0 on pass, 1 on a failed verification, 2 on usage/input errors.
Logs go to stderr.
"""
import argparse
import json
import logging
import sys
import time
from concurrent import futures
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy
import yaml

from . import __version__
from .config import RunConfig, env_log_level, load_config
from .errors import HptError
from .field_io import load_fluid_state, read_form, write_fluid_state
from .field_zoo import FIELD_NAMES, make_field
from .gaussian_model import N_MAX_LIMIT, moment_table
from .hrv_engine import (
    LEMMA_RINGS, FluidState, build_euler_homotopy, build_mass_homotopy,
    build_vorticity_homotopy, constraint_check, construct_density_homotopy,
    helicity, homotopy_residual, redundancy_check, statistics,
)
from .torus_dec import (
    Form, Grid, bv_seven_term_residual, codifferential, curl, divergence,
    exterior_derivative, expectation, gradient, hodge_star, interpolate, l2_inner,
    random_bandlimited, sharp,
)

logger = logging.getLogger("cli_reports")

SCHEMA_VERSION = 1
EXIT_PASS, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

BV_DEGREES = [(0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 2), (1, 1, 1), (0, 0, 2), (1, 1, 0), (0, 0, 3)]


def _versions() -> Dict[str, str]:
    return {"torus_hpt": __version__, "numpy": np.__version__, "sympy": sympy.__version__,
            "pyyaml": yaml.__version__}


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, sympy.Basic):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def render_report(report: Dict[str, Any]) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=_json_default)


def emit_report(report: Dict[str, Any], out: Optional[str]) -> None:
    text = render_report(report)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
        logger.info(f"Report written to {out}")
    else:
        print(text)


def _base_report(command: str, config: RunConfig, passed: bool) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config.to_dict(),
        "verdict": "pass" if passed else "fail",
        "versions": _versions(),
    }


# --- check-dec ---

def _seed(config: RunConfig, tag: int, index: int) -> int:
    return config.seed * 100003 + tag * 1009 + index


def _random(grid: Grid, config: RunConfig, degree: int, tag: int, index: int) -> Form:
    return random_bandlimited(grid, degree, config.kmax, _seed(config, tag, index))


def _relative(residual: float, scale: float) -> float:
    return residual / max(1.0, scale)


def check_delta_squared(grid: Grid, config: RunConfig) -> float:
    worst = 0.0
    for degree in (2, 3):
        for i in range(config.n_random):
            omega = _random(grid, config, degree, 10 + degree, i)
            worst = max(worst, _relative(codifferential(codifferential(omega)).sup_norm(), omega.sup_norm()))
    return worst


def check_star_star(grid: Grid, config: RunConfig) -> float:
    worst = 0.0
    for degree in range(4):
        for i in range(config.n_random):
            omega = _random(grid, config, degree, 20 + degree, i)
            worst = max(worst, (hodge_star(hodge_star(omega)) - omega).sup_norm())
    return worst


def check_adjointness(grid: Grid, config: RunConfig) -> float:
    """<d alpha, beta> = -<alpha, delta beta> (the debug flag flips delta)."""
    sign = -1.0 if config.debug_flip_delta_sign else 1.0
    worst = 0.0
    for degree in (1, 2, 3):
        for i in range(config.n_random):
            alpha = _random(grid, config, degree - 1, 30 + degree, i)
            beta = _random(grid, config, degree, 40 + degree, i)
            lhs = l2_inner(exterior_derivative(alpha), beta)
            rhs = -l2_inner(alpha, codifferential(beta).scaled(sign))
            worst = max(worst, _relative(abs(lhs - rhs), abs(lhs) + abs(rhs)))
    return worst


def check_curl_grad(grid: Grid, config: RunConfig) -> float:
    worst = 0.0
    for i in range(config.n_random):
        f = _random(grid, config, 0, 50, i)
        worst = max(worst, _relative(curl(gradient(f)).sup_norm(), f.sup_norm()))
    return worst


def check_div_curl(grid: Grid, config: RunConfig) -> float:
    worst = 0.0
    for i in range(config.n_random):
        u = sharp(_random(grid, config, 1, 60, i))
        worst = max(worst, _relative(divergence(curl(u)).sup_norm(), u.sup_norm()))
    return worst


def check_expectation_delta(grid: Grid, config: RunConfig) -> float:
    worst = 0.0
    for i in range(config.n_random):
        alpha = _random(grid, config, 1, 70, i)
        worst = max(worst, _relative(abs(expectation(codifferential(alpha))), alpha.sup_norm()))
    return worst


def _triple_product_grid(grid: Grid, kmax: int) -> Grid:
    """Smallest grid, no coarser than `grid`, on which products of three kmax-band forms do not alias."""
    m = grid.n
    while 3 * kmax >= m // 2:
        m *= 2
    return grid if m == grid.n else Grid(m)


def check_bv_seven_term(grid: Grid, config: RunConfig) -> float:
    fine = _triple_product_grid(grid, config.kmax)
    if fine is not grid:
        logger.info(f"bv-seven-term: evaluating on N={fine.n} to resolve triple products of kmax={config.kmax}")
    worst = 0.0
    for i in range(config.n_random):
        degrees = BV_DEGREES[i % len(BV_DEGREES)]
        a, b, c = (interpolate(_random(grid, config, d, 80 + j, i), fine) for j, d in enumerate(degrees))
        scale = a.sup_norm() * b.sup_norm() * c.sup_norm()
        worst = max(worst, _relative(bv_seven_term_residual(a, b, c), scale))
    return worst


DEC_CHECKS: Dict[str, Callable[[Grid, RunConfig], float]] = {
    "delta-delta": check_delta_squared,
    "star-star": check_star_star,
    "adjointness": check_adjointness,
    "curl-grad": check_curl_grad,
    "div-curl": check_div_curl,
    "expectation-delta": check_expectation_delta,
    "bv-seven-term": check_bv_seven_term,
}


def cmd_check_dec(config: RunConfig, args: argparse.Namespace = None) -> Tuple[Dict[str, Any], bool]:
    grid = Grid(config.n, config.dealias_factor)
    results: Dict[str, Dict[str, Any]] = {}
    timings: Dict[str, float] = {}

    def run(name: str) -> Tuple[str, float, float]:
        start = time.perf_counter()
        value = DEC_CHECKS[name](grid, config)
        return name, value, time.perf_counter() - start

    logger.info(f"Running {len(DEC_CHECKS)} identity checks on N={grid.n} with {config.workers} workers")
    with futures.ThreadPoolExecutor(max_workers=config.workers) as executor:
        for name, value, elapsed in executor.map(run, sorted(DEC_CHECKS)):
            results[name] = {"max_relative_residual": value, "tolerance": config.tol_identity,
                             "passed": bool(value <= config.tol_identity)}
            timings[name] = elapsed
            log = logger.info if results[name]["passed"] else logger.warning
            log(f"check {name}: {value:.3e} (tolerance {config.tol_identity:.1e})")

    passed = all(r["passed"] for r in results.values())
    report = _base_report("check-dec", config, passed)
    report["checks"] = results
    report["timings"] = timings
    return report, passed


# --- verify ---

def _resolve_state(config: RunConfig) -> Tuple[FluidState, Dict[str, Any], str]:
    if config.manifest:
        state = load_fluid_state(config.manifest, config.dealias_factor)
        return state, {"name": "manifest", "path": config.manifest}, config.lemma or "euler"
    field = make_field(config.field, A=config.A, B=config.B, C=config.C, amplitude=config.amplitude,
                       u0=config.u0, profile_amplitude=config.profile_amplitude, n=config.n)
    state = field.evaluate(Grid(config.n, config.dealias_factor), config.times)
    return state, {"name": field.name, "params": dict(field.params)}, config.lemma or field.lemma


def _inject_mass_violation(state: FluidState) -> FluidState:
    """rho -> rho * (1 + t): breaks mass conservation unless rho is identically zero."""
    factor = (1.0 + state.times)[None, :, None, None, None]
    logger.warning("Injecting mass violation rho -> rho * (1 + t)")
    return state.with_density(Form(state.grid, 0, state.rho.components * factor))


def cmd_verify(config: RunConfig, args: argparse.Namespace = None) -> Tuple[Dict[str, Any], bool]:
    start = time.perf_counter()
    state, field_info, lemma = _resolve_state(config)
    if config.inject_mass_violation:
        state = _inject_mass_violation(state)

    if lemma == "mass":
        h = build_mass_homotopy(state)
    elif lemma == "vorticity":
        h = build_vorticity_homotopy(state.u, state.times)
    else:
        h = build_euler_homotopy(state)

    residual = homotopy_residual(h, config.tol, config.fd_order)
    constraints = constraint_check(h, lemma)
    stats = statistics(h)
    passed = residual.passed and constraints.passed

    report = _base_report("verify", config, passed)
    report.update({
        "field": field_info,
        "lemma": lemma,
        "ring": str(h.interval_ring),
        "residuals": residual.to_dict(),
        "constraints": constraints.to_dict(),
        "statistics": {"times": [float(t) for t in h.times], "mass": [float(m) for m in stats.mass],
                       "mass_spread": float(np.ptp(stats.mass))},
    })
    if h.Psi is not None:
        report["helicity"] = [float(v) for v in helicity(h)]
    if lemma == "euler":
        redundancy = redundancy_check(h, fd_order=config.fd_order)
        report["redundancy"] = redundancy.to_dict()
        passed = passed and redundancy.passed
        report["verdict"] = "pass" if passed else "fail"
    report["timings"] = {"total": time.perf_counter() - start}
    if not passed:
        logger.warning(f"verify failed: residual failures {residual.failures}, constraint failures {constraints.failures}")
    return report, passed


# --- gaussian ---

def cmd_gaussian(config: RunConfig, args: argparse.Namespace) -> Tuple[Dict[str, Any], bool]:
    n_max = args.n_max
    if not 0 <= n_max <= N_MAX_LIMIT:
        raise ValueError(f"--n-max must lie in 0..{N_MAX_LIMIT}, got {n_max}")
    rows: List[List[Any]] = []
    for n, value in moment_table(n_max):
        rows.append([n, int(value) if value.is_integer else str(value)])
    report = _base_report("gaussian", config, True)
    report["n_max"] = n_max
    report["moments"] = rows
    return report, True


# --- homotopy ---

def cmd_homotopy(config: RunConfig, args: argparse.Namespace) -> Tuple[Dict[str, Any], bool]:
    start = time.perf_counter()
    f0 = read_form(args.f0, config.dealias_factor)
    f1 = read_form(args.f1, config.dealias_factor)
    if f0.grid.n != f1.grid.n:
        raise ValueError(f"endpoint grids differ: N={f0.grid.n} and N={f1.grid.n}")
    times = np.linspace(0.0, 1.0, 11)
    h, Y = construct_density_homotopy(f0, f1, times, tol_mass=config.tol_mass, tol_mean=config.tol_mean)
    residual = homotopy_residual(h, config.tol, config.fd_order)
    mass = statistics(h).mass

    f = h.slot("f")
    endpoint_tol = 1e-10 * max(1.0, f0.sup_norm(), f1.sup_norm())
    endpoints = {"t0": (f.at(0) - f0).sup_norm(), "t1": (f.at(len(times) - 1) - f1).sup_norm()}
    mass_spread = float(np.ptp(mass))
    passed = (residual.passed and max(endpoints.values()) <= endpoint_tol
              and mass_spread <= 1e-10 * max(1.0, float(np.max(np.abs(mass)))))

    report = _base_report("homotopy", config, passed)
    report.update({
        "inputs": {"f0": args.f0, "f1": args.f1},
        "residuals": residual.to_dict(),
        "endpoint_mismatch": endpoints,
        "endpoint_tolerance": endpoint_tol,
        "mass": [float(m) for m in mass],
        "mass_spread": mass_spread,
        "Y_sup_norm": Y.sup_norm(),
        "Y_is_zero": bool(Y.sup_norm() == 0.0),
        "timings": {"total": time.perf_counter() - start},
    })
    return report, passed


# --- export ---

def cmd_export(config: RunConfig, args: argparse.Namespace) -> Tuple[Dict[str, Any], bool]:
    state, field_info, _ = _resolve_state(config)
    manifest = write_fluid_state(args.directory, state)
    report = _base_report("export", config, True)
    report.update({"field": field_info, "manifest": manifest, "samples": len(state.times)})
    return report, True


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], Tuple[Dict[str, Any], bool]]] = {
    "check-dec": cmd_check_dec,
    "verify": cmd_verify,
    "gaussian": cmd_gaussian,
    "homotopy": cmd_homotopy,
    "export": cmd_export,
}


def _flag():
    return dict(action="store_const", const=True, default=None)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=None, help='YAML file with key: value run parameters')
    common.add_argument('--n', type=int, default=None, help='Grid points per axis (power of two >= 8)')
    common.add_argument('--dealias-factor', type=int, default=None, help='Oversampling factor for products')
    common.add_argument('--dt', type=float, default=None, help='Time step between samples')
    common.add_argument('--n-steps', type=int, default=None, help='Number of time steps (samples - 1)')
    common.add_argument('--t0', type=float, default=None, help='First sample time')
    common.add_argument('--tol', type=float, default=None, help='Residual tolerance')
    common.add_argument('--tol-mass', type=float, default=None, help='Relative equal-mass tolerance')
    common.add_argument('--tol-mean', type=float, default=None, help='Zero-mean tolerance of the Poisson solve')
    common.add_argument('--tol-identity', type=float, default=None, help='Operator identity tolerance')
    common.add_argument('--fd-order', type=int, default=None, help='Time finite-difference order (even, >= 4)')
    common.add_argument('--seed', type=int, default=None, help='Random seed')
    common.add_argument('--out', default=None, help='Write the JSON report here instead of stdout')
    common.add_argument('--max-workers', type=int, default=None, help='Thread-pool size (default $HPT_MAX_WORKERS or 4)')

    fields = argparse.ArgumentParser(add_help=False)
    fields.add_argument('--field', choices=FIELD_NAMES, default=None, help='Analytic field')
    fields.add_argument('--A', type=float, default=None, help='ABC parameter A')
    fields.add_argument('--B', type=float, default=None, help='ABC parameter B')
    fields.add_argument('--C', type=float, default=None, help='ABC parameter C')
    fields.add_argument('--amplitude', type=float, default=None, help='Shear-flow amplitude')
    fields.add_argument('--u0', type=float, nargs=3, default=None, help='Transport velocity')
    fields.add_argument('--profile-amplitude', type=float, default=None, help='Transport profile amplitude')
    fields.add_argument('--manifest', default=None, help='Fluid-state manifest (overrides --field)')

    parser = argparse.ArgumentParser(prog='torus_hpt',
                                     description='Homotopy random variables and fluid data on the flat 3-torus')
    sub = parser.add_subparsers(dest='command', required=True)

    check = sub.add_parser('check-dec', parents=[common], help='Exterior-calculus identity suite')
    check.add_argument('--n-random', type=int, default=None, help='Random samples per identity')
    check.add_argument('--kmax', type=int, default=None, help='Largest wavenumber of random forms')
    check.add_argument('--debug-flip-delta-sign', help='Negative control: flip the sign of delta', **_flag())

    verify = sub.add_parser('verify', parents=[common, fields], help='Check a fluid state against a lemma')
    verify.add_argument('--lemma', choices=sorted(LEMMA_RINGS), default=None, help='Lemma identification')
    verify.add_argument('--inject-mass-violation', help='Negative control: rho -> rho (1 + t)', **_flag())

    gaussian = sub.add_parser('gaussian', parents=[common], help='Exact homotopy-Gaussian moment table')
    gaussian.add_argument('--n-max', type=int, default=8, help=f'Largest moment order (<= {N_MAX_LIMIT})')

    homotopy = sub.add_parser('homotopy', parents=[common], help='Density homotopy between two 0-forms')
    homotopy.add_argument('f0', help='Field file of f0 (0-form)')
    homotopy.add_argument('f1', help='Field file of f1 (0-form)')

    export = sub.add_parser('export', parents=[common, fields], help='Write an analytic field as field files')
    export.add_argument('directory', help='Output directory')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_PASS

    logging.basicConfig(level=env_log_level(), format=LOG_FORMAT, stream=sys.stderr)
    known = set(RunConfig.field_names())
    overrides = {k: v for k, v in vars(args).items() if k in known and v is not None}
    out = overrides.get("out")
    try:
        config = load_config(args.config, overrides)
        out = config.out
        report, passed = COMMANDS[args.command](config, args)
    except (HptError, ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}", exc_info=True)
        emit_report({
            "schema_version": SCHEMA_VERSION,
            "command": args.command,
            "verdict": "error",
            "error": {"type": type(e).__name__, "message": str(e)},
        }, out)
        return EXIT_INPUT

    emit_report(report, out)
    return EXIT_PASS if passed else EXIT_FAIL
