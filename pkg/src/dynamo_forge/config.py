"""Run configuration: validation, canonical serialization, content hashing.

Reports embed the full configuration with every default made explicit plus a
sha256 of its canonical JSON form, so a rerun can prove it used the same
inputs byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace

import jsonschema

from .solver import SolverParams

__all__ = ["RunConfig", "ConfigError", "canonical_json", "CONFIG_SCHEMA"]


class ConfigError(ValueError):
    """Configuration file or values rejected."""


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "N": {"type": "integer", "minimum": 1, "maximum": 128},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "kappas": {
            "type": "array",
            "items": {"type": "number", "minimum": 0},
            "minItems": 1,
            "maxItems": 16,
        },
        "control_amplitude": {"type": "number", "exclusiveMinimum": 0},
        "grid_m": {"type": ["integer", "null"], "minimum": 3},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "max_blocks_per_visit": {"type": "integer", "minimum": 1},
        "stop_after_crossings": {"type": ["integer", "null"], "minimum": 1},
        "transfer_eps": {"type": "number", "exclusiveMinimum": 0},
        "transfer_max_halvings": {"type": "integer", "minimum": 0},
        "coeff_rel_tol": {"type": "number", "exclusiveMinimum": 0},
        "proj_tol": {"type": "number", "exclusiveMinimum": 0},
        "factor_slack": {"type": "number", "minimum": 0},
        "sample_every": {"type": "integer", "minimum": 1},
        "threads": {"type": "integer", "minimum": 1, "maximum": 64},
        "seed": {"type": "integer", "minimum": 0},
        "allow_uncertified": {"type": "boolean"},
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a scheduled run depends on, with replay-stable defaults."""

    N: int = 8
    dt: float = 1e-3
    kappas: tuple[float, ...] = (0.0, 1e-3, 1e-2)
    control_amplitude: float = 1.0
    grid_m: int | None = None
    horizon: float = 300.0
    max_blocks_per_visit: int = 32
    stop_after_crossings: int | None = None
    transfer_eps: float = 0.25
    transfer_max_halvings: int = 8
    coeff_rel_tol: float = 1e-12
    proj_tol: float = 1e-8
    factor_slack: float = 1e-6
    sample_every: int = 100
    threads: int = 1
    seed: int = 0
    allow_uncertified: bool = False

    def __post_init__(self) -> None:
        try:
            jsonschema.validate(self.to_json_dict(), CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(str(exc)) from exc
        if len(set(self.kappas)) != len(self.kappas):
            raise ConfigError("kappas must be distinct")
        if self.grid_m is not None and self.grid_m < 2 * self.N + 1:
            raise ConfigError(f"grid_m must be at least 2N+1 = {2 * self.N + 1}")

    @property
    def grid(self) -> int:
        """Translation grid resolution; the default is alias-free for the cube."""
        return self.grid_m if self.grid_m is not None else 2 * self.N + 1

    def solver_params(self) -> SolverParams:
        return SolverParams(dt=self.dt, sample_every=self.sample_every)

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["kappas"] = list(self.kappas)
        return d

    @staticmethod
    def from_json_dict(obj: dict) -> "RunConfig":
        try:
            jsonschema.validate(obj, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(str(exc)) from exc
        data = dict(obj)
        if "kappas" in data:
            data["kappas"] = tuple(float(k) for k in data["kappas"])
        return RunConfig(**data)

    @staticmethod
    def from_file(path) -> "RunConfig":
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError("config file must hold a JSON object")
        return RunConfig.from_json_dict(obj)

    def with_overrides(self, **kwargs) -> "RunConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        if "kappas" in kwargs:
            kwargs["kappas"] = tuple(float(k) for k in kwargs["kappas"])
        return replace(self, **kwargs)

    def content_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_json_dict()).encode()).hexdigest()


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, no whitespace, repr-exact floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)
