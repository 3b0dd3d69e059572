"""
Run configuration: JSON files validated against a strict schema.

Command-line flags override environment variables, which override the file:

    CHEMOTAXIS_OUTPUT_DIR   output directory
    CHEMOTAXIS_THREADS      stencil worker count
    SKIP_RESOURCE_CHECK     "true" skips the memory/disk check before simulate
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from .errors import ConfigError
from .grid import Grid, GridSpec, make_grid
from .model import InitialData, ModelParams, constant_data, gaussian_data, load_field_file
from .solver import SolverConfig

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "CHEMOTAXIS_OUTPUT_DIR"
THREADS_ENV = "CHEMOTAXIS_THREADS"
SKIP_RESOURCE_CHECK_ENV = "SKIP_RESOURCE_CHECK"

SNAPSHOT_FORMATS = ("vtk", "raw", "none")

_VECTOR3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_UNIT_INTERVAL = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_COUNT = {"type": "integer", "minimum": 1}

_FIELD_SOURCE = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "gaussian"},
                "amplitude": {"type": "number", "minimum": 0},
                "rate": _POSITIVE,
                "center": _VECTOR3,
            },
            "required": ["kind", "amplitude", "rate"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"kind": {"const": "constant"}, "value": {"type": "number", "minimum": 0}},
            "required": ["kind", "value"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"kind": {"const": "file"}, "path": {"type": "string", "minLength": 1}},
            "required": ["kind", "path"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA: Dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "description": {"type": "string"},
        "grid": {
            "type": "object",
            "properties": {
                "lo": _VECTOR3,
                "hi": _VECTOR3,
                "n": {"type": "array", "items": {"type": "integer", "minimum": 3},
                      "minItems": 3, "maxItems": 3},
            },
            "required": ["lo", "hi", "n"],
            "additionalProperties": False,
        },
        "params": {
            "type": "object",
            "properties": {
                "chi": {"type": "number", "minimum": 0},
                "alpha": _POSITIVE,
                "beta": _POSITIVE,
                "gamma": _POSITIVE,
                "delta": _POSITIVE,
                "mu": _POSITIVE,
                "tau": {"enum": [0, 1]},
            },
            "required": ["chi", "alpha", "beta", "gamma", "delta", "mu", "tau"],
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "dt": _POSITIVE,
                "t_end": {"type": "number", "minimum": 0},
                "cg_tol": _UNIT_INTERVAL,
                "cg_maxiter": _COUNT,
                "newton_tol": _UNIT_INTERVAL,
                "newton_maxiter": _COUNT,
                "blowup_threshold": _POSITIVE,
                "cfl_warn": {"type": "boolean"},
                "record_stride": _COUNT,
            },
            "additionalProperties": False,
        },
        "initial_data": {
            "type": "object",
            "properties": {"u": _FIELD_SOURCE, "v": _FIELD_SOURCE, "w": _FIELD_SOURCE},
            "required": ["u", "v", "w"],
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "directory": {"type": "string", "minLength": 1},
                "snapshot_stride": _COUNT,
                "snapshot_format": {"enum": list(SNAPSHOT_FORMATS)},
                "parquet": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
    },
    "required": ["grid", "params", "initial_data"],
    "additionalProperties": False,
}

_VALIDATOR = Draft202012Validator(CONFIG_SCHEMA)


@dataclass(frozen=True)
class FieldSource:
    """How one initial field is produced: ``gaussian``, ``constant`` or ``file``."""

    kind: str
    amplitude: Optional[float] = None
    rate: Optional[float] = None
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    value: Optional[float] = None
    path: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "gaussian":
            return {"kind": "gaussian", "amplitude": self.amplitude, "rate": self.rate,
                    "center": list(self.center)}
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        return {"kind": "file", "path": self.path}

    def build(self, grid: Grid):
        if self.kind == "gaussian":
            return gaussian_data(grid, self.amplitude, self.rate, self.center)
        if self.kind == "constant":
            return constant_data(grid, self.value)
        return load_field_file(grid, self.path)


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "outputs"
    snapshot_stride: int = 1
    snapshot_format: str = "vtk"
    parquet: bool = False


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    params: ModelParams
    solver: SolverConfig
    u0: FieldSource
    v0: FieldSource
    w0: FieldSource
    output: OutputConfig = field(default_factory=OutputConfig)
    description: str = ""


def _error_path(error) -> str:
    return ".".join(str(p) for p in error.absolute_path)


def _field_source(raw: Dict[str, Any], base_dir: Optional[Path]) -> FieldSource:
    kind = raw["kind"]
    if kind == "gaussian":
        return FieldSource(kind, amplitude=float(raw["amplitude"]), rate=float(raw["rate"]),
                           center=tuple(float(c) for c in raw.get("center", (0.0, 0.0, 0.0))))
    if kind == "constant":
        return FieldSource(kind, value=float(raw["value"]))
    path = Path(raw["path"])
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    return FieldSource(kind, path=str(path))


def load_config_dict(raw: Any, base_dir: Optional[Path] = None) -> RunConfig:
    """Validate a decoded JSON document and build the RunConfig.

    Relative initial-data file paths are resolved against ``base_dir``.

    Raises:
        ConfigError: naming the dotted key path of the first problem found.
    """
    error = best_match(_VALIDATOR.iter_errors(raw))
    if error is not None:
        raise ConfigError(error.message, key_path=_error_path(error) or "<root>")

    g = raw["grid"]
    spec = GridSpec(tuple(float(x) for x in g["lo"]), tuple(float(x) for x in g["hi"]),
                    tuple(int(x) for x in g["n"]))
    try:
        spec.validate()
    except ValueError as e:
        raise ConfigError(str(e), key_path="grid") from e

    p = raw["params"]
    params = ModelParams(chi=float(p["chi"]), alpha=float(p["alpha"]), beta=float(p["beta"]),
                         gamma=float(p["gamma"]), delta=float(p["delta"]), mu=float(p["mu"]),
                         tau=int(p["tau"]))

    s = raw.get("solver", {})
    try:
        solver = SolverConfig(**{k: (float(v) if isinstance(v, float) else v) for k, v in s.items()})
    except ValueError as e:
        raise ConfigError(str(e), key_path="solver") from e

    data = raw["initial_data"]
    o = raw.get("output", {})
    output = OutputConfig(**o)

    return RunConfig(grid=spec, params=params, solver=solver,
                     u0=_field_source(data["u"], base_dir), v0=_field_source(data["v"], base_dir),
                     w0=_field_source(data["w"], base_dir), output=output,
                     description=raw.get("description", ""))


def parse_config(path: Union[str, Path]) -> RunConfig:
    """Read and validate a JSON run configuration."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}") from e
    config = load_config_dict(raw, base_dir=path.parent)
    logger.debug(f"Loaded config {path}: grid {config.grid.n}, tau={config.params.tau}")
    return config


def serialize_config(config: RunConfig) -> Dict[str, Any]:
    """Inverse of :func:`load_config_dict`, with every default written out."""
    return {
        "description": config.description,
        "grid": {"lo": list(config.grid.lo), "hi": list(config.grid.hi), "n": list(config.grid.n)},
        "params": asdict(config.params),
        "solver": asdict(config.solver),
        "initial_data": {"u": config.u0.to_dict(), "v": config.v0.to_dict(), "w": config.w0.to_dict()},
        "output": asdict(config.output),
    }


def initial_data_from_config(config: RunConfig, grid: Optional[Grid] = None) -> InitialData:
    """Sample the configured initial data on ``grid`` (the configured grid by default)."""
    grid = grid or make_grid(config.grid)
    try:
        return InitialData(u0=config.u0.build(grid), v0=config.v0.build(grid), w0=config.w0.build(grid))
    except ValueError as e:
        raise ConfigError(str(e), key_path="initial_data") from e


# ---------------------------------------------------------------------------
# Environment overrides

def resolve_output_dir(config: RunConfig, cli_value: Optional[str] = None) -> Path:
    if cli_value:
        return Path(cli_value)
    env_value = os.environ.get(OUTPUT_DIR_ENV)
    if env_value:
        return Path(env_value)
    return Path(config.output.directory)


def resolve_threads(cli_value: Optional[int] = None) -> Optional[int]:
    if cli_value is not None:
        return cli_value
    env_value = os.environ.get(THREADS_ENV, "").strip()
    if not env_value:
        return None
    try:
        threads = int(env_value)
    except ValueError:
        raise ConfigError(f"expected a positive integer, got {env_value!r}", key_path=THREADS_ENV)
    if threads < 1:
        raise ConfigError(f"expected a positive integer, got {threads}", key_path=THREADS_ENV)
    return threads


def skip_resource_check(cli_flag: bool = False) -> bool:
    return cli_flag or os.getenv(SKIP_RESOURCE_CHECK_ENV, "").lower() == "true"
