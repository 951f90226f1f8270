"""
Field files and fluid-state manifests.

Field file (text):
    line 1:   "k N"
    then C(3, k) blocks of N^3 whitespace-separated values, x index fastest.

Manifest (YAML):
    n: 32
    times: [0.0, 0.015625, ...]
    samples:
      - {rho: rho_000.txt, u: u_000.txt, p: p_000.txt}
      ...
File names in a manifest are resolved relative to the manifest's directory.
"""
import logging
import os
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from .errors import FieldFileError
from .hrv_engine import FluidState
from .torus_dec import FRAME, Form, Grid, VectorField

logger = logging.getLogger("field_io")

MANIFEST_VERSION = 1


def write_form(path: str, form: Form) -> None:
    if form.is_family:
        raise FieldFileError("field files hold a single time sample; write families through a manifest")
    n = form.grid.n
    with open(path, "w") as fh:
        fh.write(f"{form.degree} {n}\n")
        for comp in form.components:
            # x fastest: Fortran order over (x, y, z)
            np.savetxt(fh, comp.ravel(order="F").reshape(-1, n), fmt="%.17g")
    logger.debug(f"Wrote {form.degree}-form (N={n}) to {path}")


def read_form(path: str, dealias_factor: int = 1, expected_n: Optional[int] = None) -> Form:
    """Parse a field file; any header/count mismatch raises FieldFileError."""
    try:
        with open(path, "r") as fh:
            header = fh.readline().split()
            body = fh.read().split()
    except OSError as e:
        raise FieldFileError(f"cannot read field file {path}: {e}") from e

    if len(header) != 2:
        raise FieldFileError(f"{path}: header must be 'k N', got {' '.join(header)!r}")
    try:
        degree, n = int(header[0]), int(header[1])
    except ValueError as e:
        raise FieldFileError(f"{path}: non-integer header {header}") from e
    if degree not in FRAME:
        raise FieldFileError(f"{path}: form degree {degree} outside 0..3")
    if expected_n is not None and n != expected_n:
        raise FieldFileError(f"{path}: grid size {n} does not match expected {expected_n}")

    ncomp = len(FRAME[degree])
    expected = ncomp * n ** 3
    if len(body) != expected:
        raise FieldFileError(f"{path}: expected {expected} values for a {degree}-form on N={n}, found {len(body)}")
    try:
        values = np.array(body, dtype=float)
    except ValueError as e:
        raise FieldFileError(f"{path}: non-numeric value in body") from e

    try:
        grid = Grid(n, dealias_factor)
    except ValueError as e:
        raise FieldFileError(f"{path}: {e}") from e
    comps = values.reshape(ncomp, n ** 3)
    arrays = [c.reshape((n, n, n), order="F") for c in comps]
    logger.debug(f"Read {degree}-form (N={n}) from {path}")
    return Form(grid, degree, np.stack(arrays))


def read_manifest(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r") as fh:
            manifest = yaml.safe_load(fh)
    except OSError as e:
        raise FieldFileError(f"cannot read manifest {path}: {e}") from e
    except yaml.YAMLError as e:
        raise FieldFileError(f"manifest {path} is not valid YAML: {e}") from e

    if not isinstance(manifest, dict):
        raise FieldFileError(f"manifest {path} must be a mapping")
    for key in ("n", "times", "samples"):
        if key not in manifest:
            raise FieldFileError(f"manifest {path} is missing '{key}'")
    times, samples = manifest["times"], manifest["samples"]
    if not isinstance(samples, list) or len(samples) != len(times):
        raise FieldFileError(f"manifest {path}: {len(times)} times but "
                             f"{len(samples) if isinstance(samples, list) else 'no'} samples")
    for i, sample in enumerate(samples):
        missing = [k for k in ("rho", "u", "p") if not isinstance(sample, dict) or k not in sample]
        if missing:
            raise FieldFileError(f"manifest {path}: sample {i} lacks {missing}")
    return manifest


def load_fluid_state(manifest_path: str, dealias_factor: int = 1) -> FluidState:
    manifest = read_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    n = int(manifest["n"])
    rho: List[np.ndarray] = []
    u: List[np.ndarray] = []
    p: List[np.ndarray] = []
    for sample in manifest["samples"]:
        forms = {key: read_form(os.path.join(base, sample[key]), dealias_factor, expected_n=n)
                 for key in ("rho", "u", "p")}
        for key, degree in (("rho", 0), ("u", 1), ("p", 0)):
            if forms[key].degree != degree:
                raise FieldFileError(f"{sample[key]}: '{key}' must be a {degree}-form, got degree {forms[key].degree}")
        rho.append(forms["rho"].components)
        u.append(forms["u"].components)
        p.append(forms["p"].components)

    grid = Grid(n, dealias_factor)
    times = np.asarray(manifest["times"], dtype=float)
    logger.info(f"Loaded fluid state from {manifest_path}: N={n}, {len(times)} samples")
    return FluidState(
        rho=Form(grid, 0, np.stack(rho, axis=1)),
        u=VectorField(grid, np.stack(u, axis=1)),
        p=Form(grid, 0, np.stack(p, axis=1)),
        times=times,
    )


def write_fluid_state(directory: str, state: FluidState, prefix: str = "") -> str:
    """Write one field file per slot and sample plus `manifest.yaml`; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    samples = []
    for i in range(len(state.times)):
        names = {key: f"{prefix}{key}_{i:03d}.txt" for key in ("rho", "u", "p")}
        write_form(os.path.join(directory, names["rho"]), state.rho.at(i))
        write_form(os.path.join(directory, names["u"]), Form(state.grid, 1, state.u.at(i).components))
        write_form(os.path.join(directory, names["p"]), state.p.at(i))
        samples.append(names)

    manifest = {
        "version": MANIFEST_VERSION,
        "n": state.grid.n,
        "times": [float(t) for t in state.times],
        "samples": samples,
    }
    manifest_path = os.path.join(directory, f"{prefix}manifest.yaml")
    with open(manifest_path, "w") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=False)
    logger.info(f"Wrote {len(samples)} samples to {manifest_path}")
    return manifest_path
