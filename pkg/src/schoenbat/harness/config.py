from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigError
from ..kernels import KernelId
from ..ppsbn import DEFAULT_EPSILON


class Experiment(enum.Enum):
    ERROR_SWEEP = "error_sweep"
    SPEED_SWEEP = "speed_sweep"
    UNBIASEDNESS = "unbiasedness"
    TAIL_BOUND = "tail_bound"
    DEMO = "demo"

    @classmethod
    def parse(cls, name) -> "Experiment":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower().replace("-", "_"))
        except ValueError:
            raise ConfigError(f"unknown experiment {name!r}") from None


ALL_KERNELS = tuple(KernelId)

# Per-experiment defaults for keys the user leaves out.
DEFAULTS = {
    Experiment.ERROR_SWEEP: dict(n=(100,), d=(10, 50, 100, 200), D=(10, 20, 30, 40, 50)),
    Experiment.SPEED_SWEEP: dict(n=(1000, 3000, 5000), d=(50,), D=(2, 16, 120), trials=10),
    Experiment.UNBIASEDNESS: dict(n=(8,), d=(10,), D=(8,)),
    Experiment.TAIL_BOUND: dict(n=(8,), d=(4,), D=(4, 16), kernels=(KernelId.EXP,), maps=10_000),
    Experiment.DEMO: dict(n=(64,), d=(16,), D=(64,), trials=1),
}

DEFAULT_EPS_GRID = tuple(0.25 * i for i in range(1, 81))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Experiment = Experiment.DEMO
    kernels: tuple[KernelId, ...] = ALL_KERNELS
    n: tuple[int, ...] = (100,)
    d: tuple[int, ...] = (10,)
    D: tuple[int, ...] = (10,)
    p: float = 2.0
    trials: int = 100
    seed: int = 0
    epsilon: float = DEFAULT_EPSILON
    maps: int = 20_000  # independent feature maps for the Monte-Carlo experiments
    pairs: int = 20  # random input pairs for the kernel-level unbiasedness check
    eps: tuple[float, ...] = DEFAULT_EPS_GRID  # tail-bound grid
    S: float = 1.0  # |V_ij| bound for the tail-bound experiment
    normalize: bool = True  # pre-SBN the inputs before the exact/approximate comparison
    out: str | None = None
    json: bool = False

    def __post_init__(self):
        for name in ("n", "d", "D"):
            values = getattr(self, name)
            if not values:
                raise ConfigError(f"{name} must be a non-empty list")
            if any(int(v) != v or v < 1 for v in values):
                raise ConfigError(f"{name} values must be positive integers, got {list(values)}")
        if not self.kernels:
            raise ConfigError("kernels must be non-empty")
        if not self.p > 1:
            raise ConfigError(f"p must be > 1, got {self.p}")
        if self.trials < 1 or self.maps < 2 or self.pairs < 1:
            raise ConfigError("trials and pairs must be >= 1 and maps >= 2")
        if not self.epsilon > 0 or not self.S > 0:
            raise ConfigError("epsilon and S must be positive")
        if not self.eps or any(e <= 0 for e in self.eps):
            raise ConfigError("eps grid must hold positive values")

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, enum.Enum):
                v = v.value
            elif isinstance(v, tuple):
                v = [x.value if isinstance(x, enum.Enum) else x for x in v]
            out[f.name] = v
        return out


KEYS = {f.name for f in fields(ExperimentConfig)} | {"kernel"}


def _as_tuple(value, cast):
    items = value if isinstance(value, (list, tuple)) else [value]
    return tuple(cast(v) for v in items)


def _coerce(key, value):
    try:
        if key in ("kernels", "kernel"):
            return _as_tuple(value, KernelId.parse)
        if key in ("n", "d", "D"):
            vals = _as_tuple(value, float)
            if any(v != int(v) for v in vals):
                raise ConfigError(f"{key} values must be integers, got {value!r}")
            return tuple(int(v) for v in vals)
        if key == "eps":
            return _as_tuple(value, float)
        if key in ("trials", "seed", "maps", "pairs"):
            if isinstance(value, bool) or int(value) != value:
                raise ConfigError(f"{key} must be an integer, got {value!r}")
            return int(value)
        if key in ("p", "epsilon", "S"):
            return float(value)
        if key in ("normalize", "json"):
            if not isinstance(value, bool):
                raise ConfigError(f"{key} must be true or false, got {value!r}")
            return value
        if key == "experiment":
            return Experiment.parse(value)
        if key == "out":
            return None if value is None else str(value)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid value for {key!r}: {exc}") from None
    raise ConfigError(f"unknown config key {key!r}")


def build_config(values: dict) -> ExperimentConfig:
    """Build a config from raw key/values, filling per-experiment defaults."""
    unknown = sorted(set(values) - KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    parsed = {}
    for key, value in values.items():
        if value is None and key != "out":
            continue
        parsed["kernels" if key == "kernel" else key] = _coerce(key, value)
    experiment = parsed.get("experiment", Experiment.DEMO)
    merged = {**DEFAULTS[experiment], **parsed, "experiment": experiment}
    return ExperimentConfig(**merged)


def parse_config(path) -> ExperimentConfig:
    """Read a flat JSON object of config keys; missing keys take their defaults."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: malformed config ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    for key, value in doc.items():
        if isinstance(value, dict):
            raise ConfigError(f"{path}: key {key!r} is nested; config must be flat")
    return build_config(doc)


def with_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    values = {k: v for k, v in overrides.items() if v is not None}
    if not values:
        return cfg
    parsed = {("kernels" if k == "kernel" else k): _coerce(k, v) for k, v in values.items()}
    return replace(cfg, **parsed)
