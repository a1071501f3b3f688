"""Run configuration: nested blocks that map onto the package's types.

JSON on disk, dataclasses in memory.  Parsing is strict -- an unknown or
ill-typed key is rejected with an error naming the full key path -- and
serialization uses repr floats, so parse -> save -> parse is the identity.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields

from .core import Grid, Params, ParameterError, make_grid, make_params
from .initial_data import DataSpec

__all__ = [
    "ConfigError",
    "GridBlock",
    "SolverBlock",
    "ShootingBlock",
    "DiagnosticsBlock",
    "OutputBlock",
    "RunConfig",
    "default_config",
    "config_to_dict",
    "config_from_dict",
    "load_config",
    "save_config",
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridBlock:
    n_nodes: int = 4097
    stretch: float = 0.041
    half_width: float = 10.0

    def build(self) -> Grid:
        return make_grid(self.n_nodes, self.stretch, self.half_width)


@dataclass(frozen=True)
class SolverBlock:
    cfl: float = 0.4
    ds_max: float = 2e-3
    drift_tol: float = 1e-6
    q5_floor: float = 50.0


@dataclass(frozen=True)
class ShootingBlock:
    n_max: int = 8
    spacing: float = 1.0
    newton_tol: float = 1e-9  # scaled by max(1, |pre-seed q2|) at runtime
    cauchy_tol: float = 1e-10
    jacobian_source: str = "sensitivity"  # or "fd"
    fd_step: float | None = None  # None -> 1e-6 * epsilon
    trust_alpha: float = 0.1
    trust_beta: float = 0.1
    cond_max: float = 1e8

    def __post_init__(self):
        if self.jacobian_source not in ("sensitivity", "fd"):
            raise ConfigError(
                f"jacobian_source must be 'sensitivity' or 'fd', got {self.jacobian_source!r}"
            )
        if self.n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {self.n_max}")


@dataclass(frozen=True)
class DiagnosticsBlock:
    weight_delta: float = 0.05
    nu_window: int = 3
    holder_max_exact: int = 2000
    scale: float = 1.0  # global multiplier on every inequality bound
    constants: dict = field(default_factory=dict)  # per-check prefactor overrides

    def __post_init__(self):
        for key, value in self.constants.items():
            if not isinstance(key, str) or isinstance(value, bool) \
                    or not isinstance(value, (int, float)):
                raise ConfigError(
                    f"constants entries must map names to numbers, "
                    f"got {key!r}: {value!r}")


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "runs"
    cadence: float = 0.25
    formats: tuple[str, ...] = ("csv", "json")

    def __post_init__(self):
        bad = [f for f in self.formats if f not in ("csv", "json")]
        if bad:
            raise ConfigError(f"unknown output formats {bad}; allowed: csv, json")


@dataclass(frozen=True)
class RunConfig:
    params: Params
    grid: GridBlock = field(default_factory=GridBlock)
    data: DataSpec = field(default_factory=DataSpec)
    solver: SolverBlock = field(default_factory=SolverBlock)
    shooting: ShootingBlock = field(default_factory=ShootingBlock)
    diagnostics: DiagnosticsBlock = field(default_factory=DiagnosticsBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    @property
    def fd_step(self) -> float:
        h = self.shooting.fd_step
        return 1e-6 * self.params.epsilon if h is None else h


def default_config(**data_overrides) -> RunConfig:
    """Standard configuration (gamma = 3, eps = 1e-2, production grid);
    keyword arguments override DataSpec fields."""
    return RunConfig(
        params=make_params(gamma=3.0, epsilon=1e-2, kappa0=1.0, bigM=2.0, ell=0.1),
        data=DataSpec(**data_overrides),
    )


_PARAMS_KEYS = ("gamma", "epsilon", "kappa0", "bigM", "ell")


def config_to_dict(cfg: RunConfig) -> dict:
    out = {"params": {k: getattr(cfg.params, k) for k in _PARAMS_KEYS}}
    for name in ("grid", "data", "solver", "shooting", "diagnostics", "output"):
        block = getattr(cfg, name)
        out[name] = {
            f.name: (list(v) if isinstance(v := getattr(block, f.name), tuple) else v)
            for f in fields(block)
        }
    return out


def _coerce(value, ftype, path):
    if ftype == "float" or ftype == "float | None":
        if value is None and "None" in ftype:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if ftype == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if ftype == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if ftype.startswith("tuple"):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return tuple(value)
    if ftype == "dict":
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a table, got {value!r}")
        return {k: float(v) for k, v in value.items()
                if isinstance(v, (int, float)) and not isinstance(v, bool)} \
            if all(isinstance(v, (int, float)) and not isinstance(v, bool)
                   for v in value.values()) \
            else _reject_table(value, path)
    return value


def _reject_table(value, path):
    bad = next(v for v in value.values()
               if isinstance(v, bool) or not isinstance(v, (int, float)))
    raise ConfigError(f"{path}: expected numeric values, got {bad!r}")


def _block_from_dict(cls, raw, path):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a table, got {raw!r}")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown key {path}.{key}")
        kwargs[key] = _coerce(value, str(known[key].type), f"{path}.{key}")
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"config root: expected a table, got {raw!r}")
    blocks = {
        "grid": GridBlock, "data": DataSpec, "solver": SolverBlock,
        "shooting": ShootingBlock, "diagnostics": DiagnosticsBlock,
        "output": OutputBlock,
    }
    unknown = set(raw) - set(blocks) - {"params"}
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]}")

    praw = raw.get("params", {})
    if not isinstance(praw, dict):
        raise ConfigError(f"params: expected a table, got {praw!r}")
    bad = set(praw) - set(_PARAMS_KEYS)
    if bad:
        raise ConfigError(f"unknown key params.{sorted(bad)[0]}")
    pkw = {k: _coerce(praw[k], "float", f"params.{k}") for k in praw}
    defaults = dict(gamma=3.0, epsilon=1e-2, kappa0=1.0, bigM=2.0, ell=0.1)
    defaults.update(pkw)
    try:
        params = make_params(**defaults)
    except ParameterError as exc:
        raise ConfigError(f"params: {exc}") from exc

    kwargs = {"params": params}
    for name, cls in blocks.items():
        if name in raw:
            kwargs[name] = _block_from_dict(cls, raw[name], name)
    return RunConfig(**kwargs)


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=1)
        fh.write("\n")


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(raw)
