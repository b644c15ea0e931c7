"""Configuration management for bctomo experiments."""

import hashlib
import json
import math
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.exceptions import ConfigError

# Relative slack when checking that one time step divides another.
DIVISIBILITY_TOLERANCE = 1e-9


def _ratio_is_integer(numerator: float, denominator: float) -> bool:
    ratio = numerator / denominator
    return abs(ratio - round(ratio)) <= DIVISIBILITY_TOLERANCE * max(1.0, ratio) and round(ratio) >= 1


class MeshConfig(BaseModel):
    """Disk mesh generation parameters."""
    model_config = ConfigDict(extra='forbid')

    n_rings: int = Field(6, ge=1)
    n_boundary: int = Field(24, ge=8)


class SampleConfig(BaseModel):
    """Ground-truth density sample."""
    model_config = ConfigDict(extra='forbid')

    kind: Literal['constant', 'inclusions', 'annulus', 'waveguide', 'folds', 'file'] = 'constant'
    params: Dict[str, Any] = Field(default_factory=dict)
    path: Optional[str] = None

    @model_validator(mode='after')
    def _path_for_file_kind(self) -> 'SampleConfig':
        if self.kind == 'file' and not self.path:
            raise ValueError("sample kind 'file' requires 'path'")
        return self


class WaveletConfig(BaseModel):
    """Ricker wavelet; both values default from the control offset."""
    model_config = ConfigDict(extra='forbid')

    frequency: Optional[float] = Field(None, gt=0)
    delay: Optional[float] = Field(None, ge=0)


class TimeConfig(BaseModel):
    """
    Time horizon and grids.

    T may be left open, in which case it is resolved at run time as
    t_factor times the optical radius for the upper density bound.
    """
    model_config = ConfigDict(extra='forbid')

    T: Optional[float] = Field(None, gt=0)
    dt: Optional[float] = Field(None, gt=0)
    dt_solver: Optional[float] = Field(None, gt=0)
    n_t: int = Field(8, ge=1)
    substeps: int = Field(20, ge=1)
    t_factor: float = Field(1.2, gt=0)

    @model_validator(mode='after')
    def _grids_align(self) -> 'TimeConfig':
        if self.T is not None and self.dt is not None:
            if not _ratio_is_integer(self.T, self.dt):
                raise ValueError(f"T/dt must be an integer, got {self.T / self.dt:.6g}")
            self.n_t = int(round(self.T / self.dt))
        if self.dt is not None and self.dt_solver is not None:
            if not _ratio_is_integer(self.dt, self.dt_solver):
                raise ValueError(f"dt/dt_solver must be an integer, got {self.dt / self.dt_solver:.6g}")
            self.substeps = int(round(self.dt / self.dt_solver))
        if self.dt is None and self.dt_solver is not None:
            raise ValueError("dt_solver requires dt")
        return self


class FormsConfig(BaseModel):
    """Boundary form quadrature."""
    model_config = ConfigDict(extra='forbid')

    quadrature: Literal['midpoint', 'trapezoid'] = 'midpoint'
    symmetry_tolerance: float = Field(1e-8, gt=0)


class ControlConfig(BaseModel):
    """Control problem settings."""
    model_config = ConfigDict(extra='forbid')

    cutoff: float = Field(1e-10, gt=0, lt=1)
    block_weight: float = Field(1.0, gt=0)
    residual_ceiling: Optional[float] = Field(1e-6, gt=0)
    # None keeps the full truncation for every target
    residual_target: Optional[float] = Field(2e-7, gt=0)

    @model_validator(mode='after')
    def _target_below_ceiling(self) -> 'ControlConfig':
        if self.residual_target is not None and self.residual_ceiling is not None:
            if self.residual_target > self.residual_ceiling:
                raise ValueError(
                    f"residual_target {self.residual_target:g} exceeds residual_ceiling {self.residual_ceiling:g}"
                )
        return self


class ReconstructConfig(BaseModel):
    """Density reconstruction settings."""
    model_config = ConfigDict(extra='forbid')

    regularization: Optional[float] = Field(None, ge=0)
    regularization_scale: float = Field(1e-6, ge=0)
    box: Tuple[float, float] = (0.5, 2.0)
    weighted_delta: bool = True
    max_iterations: int = Field(100_000, ge=1)
    tolerance: float = Field(1e-12, gt=0)
    delta_ceiling: Optional[float] = Field(None, gt=0)

    @field_validator('box')
    @classmethod
    def _box_valid(cls, box: Tuple[float, float]) -> Tuple[float, float]:
        lo, hi = box
        if not (0 < lo < hi) or not math.isfinite(hi):
            raise ValueError(f"box must satisfy 0 < rho_min < rho_max, got {box}")
        return box


class OutputConfig(BaseModel):
    """Artifact output settings."""
    model_config = ConfigDict(extra='forbid')

    dir: str = 'runs/default'
    trace_csv: bool = False
    dump_matrices: bool = False
    harmonics_csv: bool = False
    dump_coefficients: bool = False


class LoggingConfig(BaseModel):
    """Logging configuration."""
    level: str = 'INFO'
    format: str = 'text'


class ExperimentConfig(BaseModel):
    """Complete experiment configuration."""
    model_config = ConfigDict(extra='forbid')

    mesh: MeshConfig = Field(default_factory=MeshConfig)
    sample: SampleConfig = Field(default_factory=SampleConfig)
    wavelet: WaveletConfig = Field(default_factory=WaveletConfig)
    time: TimeConfig = Field(default_factory=TimeConfig)
    forms: FormsConfig = Field(default_factory=FormsConfig)
    control: ControlConfig = Field(default_factory=ControlConfig)
    reconstruct: ReconstructConfig = Field(default_factory=ReconstructConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    oracle_mode: bool = False
    shift_mode: bool = True
    jobs: int = Field(1, ge=1)
    seed: int = 0

    @model_validator(mode='after')
    def _wavelet_fits_offset(self) -> 'ExperimentConfig':
        if self.time.dt is not None:
            check_wavelet_window(self.wavelet, self.time.dt)
        return self

    def digest(self) -> str:
        """Content hash of everything that influences computed artifacts."""
        payload = self.model_dump(mode='json', exclude={'output', 'logging', 'jobs'})
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def time_grid(self, optical_radius: Optional[float] = None) -> 'TimeGrid':
        """
        Resolve every time parameter.

        Args:
            optical_radius: T* for the upper density bound, needed only when T is open

        Raises:
            ConfigError: If T is open and no optical radius is given
        """
        t = self.time
        if t.T is not None:
            horizon = t.T
            dt = t.dt if t.dt is not None else horizon / t.n_t
        elif t.dt is not None:
            dt = t.dt
            horizon = dt * t.n_t
        else:
            if optical_radius is None:
                raise ConfigError("time.T is open; an optical radius estimate is required")
            horizon = t.t_factor * optical_radius
            dt = horizon / t.n_t
        n_t = int(round(horizon / dt))
        substeps = t.substeps
        dt_solver = dt / substeps
        frequency = self.wavelet.frequency if self.wavelet.frequency is not None else 3.5 / dt
        delay = self.wavelet.delay if self.wavelet.delay is not None else 1.5 / frequency
        grid = TimeGrid(
            T=n_t * dt,
            dt=dt,
            dt_solver=dt_solver,
            n_t=n_t,
            substeps=substeps,
            frequency=frequency,
            delay=delay,
        )
        check_wavelet_window(WaveletConfig(frequency=frequency, delay=delay), dt)
        return grid


@dataclass(frozen=True)
class TimeGrid:
    """Resolved time parameters of one experiment."""
    T: float
    dt: float
    dt_solver: float
    n_t: int
    substeps: int
    frequency: float
    delay: float

    @property
    def steps_per_horizon(self) -> int:
        """Solver steps covering [0, T]."""
        return self.n_t * self.substeps

    @property
    def n_steps(self) -> int:
        """Solver steps covering [0, 2T]."""
        return 2 * self.steps_per_horizon


def check_wavelet_window(wavelet: WaveletConfig, dt: float) -> None:
    """
    Ensure the truncated wavelet (0, t0 + 2/nu] fits inside one control offset.

    Raises:
        ConfigError: If the window is longer than dt
    """
    if wavelet.frequency is None:
        return
    delay = wavelet.delay if wavelet.delay is not None else 1.5 / wavelet.frequency
    window = delay + 2.0 / wavelet.frequency
    if window > dt * (1.0 + DIVISIBILITY_TOLERANCE):
        raise ConfigError(
            f"wavelet window t0 + 2/nu = {window:.6g} exceeds the control offset dt = {dt:.6g}"
        )


def expand_env_vars(data: Any) -> Any:
    """
    Recursively expand environment variables in configuration.

    Variables should be in format ${VAR_NAME} or $VAR_NAME
    """
    if isinstance(data, dict):
        return {k: expand_env_vars(v) for k, v in data.items()}
    elif isinstance(data, list):
        return [expand_env_vars(item) for item in data]
    elif isinstance(data, str):
        pattern = r'\$\{([^}]+)\}|\$([A-Z_][A-Z0-9_]*)'

        def replacer(match):
            var_name = match.group(1) or match.group(2)
            return os.environ.get(var_name, match.group(0))

        return re.sub(pattern, replacer, data)
    return data


def load_config(config_path: str = 'config/default.json') -> ExperimentConfig:
    """
    Load an experiment configuration from a JSON or YAML file.

    Args:
        config_path: Path to configuration file

    Returns:
        ExperimentConfig object

    Raises:
        FileNotFoundError: If config file doesn't exist
        ValueError: If config is invalid
    """
    config_file = Path(config_path)

    if not config_file.exists():
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    with open(config_file, 'r') as f:
        if config_file.suffix == '.json':
            raw_config = json.load(f)
        else:
            raw_config = yaml.safe_load(f)

    expanded_config = expand_env_vars(raw_config or {})

    return ExperimentConfig(**expanded_config)
