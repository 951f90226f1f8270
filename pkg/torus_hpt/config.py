"""
Run configuration: defaults < YAML config file < command-line flags.
Process-level knobs come from the environment (HPT_MAX_WORKERS, HPT_LOG_LEVEL).
"""
import logging
import os
import dataclasses
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, List, Mapping, Optional

import numpy as np
import yaml

from .errors import ConfigError
from .field_zoo import DT_DEFAULT, FIELD_NAMES, N_STEPS_DEFAULT, PROFILE_AMPLITUDE_DEFAULT, U0_DEFAULT, sample_times
from .hrv_engine import LEMMA_RINGS

logger = logging.getLogger("config")

DEFAULT_MAX_WORKERS = 4


def env_max_workers() -> int:
    raw = os.getenv("HPT_MAX_WORKERS", str(DEFAULT_MAX_WORKERS))
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning(f"Ignoring non-integer HPT_MAX_WORKERS={raw!r}")
        return DEFAULT_MAX_WORKERS


def env_log_level() -> str:
    return os.getenv("HPT_LOG_LEVEL", "INFO").upper()


@dataclass
class RunConfig:
    n: int = 32
    dealias_factor: int = 1
    dt: float = DT_DEFAULT
    n_steps: int = N_STEPS_DEFAULT
    t0: float = 0.0
    field: str = "abc"
    A: float = 1.0
    B: float = 1.0
    C: float = 1.0
    amplitude: float = 1.0
    u0: List[float] = dataclasses.field(default_factory=lambda: list(U0_DEFAULT))
    profile_amplitude: float = PROFILE_AMPLITUDE_DEFAULT
    manifest: Optional[str] = None
    lemma: Optional[str] = None
    tol: float = 1e-8
    tol_mass: float = 1e-10
    tol_mean: float = 1e-10
    tol_identity: float = 1e-10
    fd_order: int = 8
    seed: int = 0
    n_random: int = 50
    kmax: int = 2
    out: Optional[str] = None
    debug_flip_delta_sign: bool = False
    inject_mass_violation: bool = False
    max_workers: Optional[int] = None

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def merged(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Copy with the non-None entries of `overrides` applied."""
        known = set(self.field_names())
        unknown = sorted(k for k in overrides if k not in known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    @property
    def times(self) -> np.ndarray:
        return sample_times(self.dt, self.n_steps, self.t0)

    @property
    def workers(self) -> int:
        return self.max_workers if self.max_workers is not None else env_max_workers()

    def validate(self) -> "RunConfig":
        if self.n < 8 or self.n & (self.n - 1):
            raise ConfigError(f"n must be a power of two >= 8, got {self.n}")
        if self.dealias_factor < 1:
            raise ConfigError(f"dealias_factor must be >= 1, got {self.dealias_factor}")
        for name in ("dt", "tol", "tol_mass", "tol_mean", "tol_identity"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.fd_order < 4 or self.fd_order % 2:
            raise ConfigError(f"fd_order must be even and >= 4, got {self.fd_order}")
        if self.field not in FIELD_NAMES:
            raise ConfigError(f"unknown field '{self.field}'; known: {list(FIELD_NAMES)}")
        if self.lemma is not None and self.lemma not in LEMMA_RINGS:
            raise ConfigError(f"unknown lemma '{self.lemma}'; known: {sorted(LEMMA_RINGS)}")
        if len(self.u0) != 3:
            raise ConfigError(f"u0 needs three components, got {self.u0}")
        if self.kmax < 0 or self.kmax > self.n // 4:
            raise ConfigError(f"kmax must lie in 0..{self.n // 4} for n={self.n}, got {self.kmax}")
        if self.n_random < 1:
            raise ConfigError(f"n_random must be >= 1, got {self.n_random}")
        if self.max_workers is not None and self.max_workers < 1:
            raise ConfigError(f"max_workers must be >= 1, got {self.max_workers}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def read_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r") as fh:
            data = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {path} is not valid YAML: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a flat key: value mapping")
    logger.info(f"Loaded configuration file {path} ({len(data)} keys)")
    return data


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Defaults, then the YAML file, then flag overrides; validated."""
    config = RunConfig()
    if path:
        config = config.merged(read_config_file(path))
    if overrides:
        config = config.merged(overrides)
    return config.validate()
