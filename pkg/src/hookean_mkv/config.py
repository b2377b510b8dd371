"""Run configuration: a YAML tree validated into dataclasses.

Every section rejects unknown keys with a :class:`ConfigError` naming the
dotted path of the offending field. A manifest written by a previous run
is also accepted (its ``config`` entry is used), so any run can be
repeated from its manifest alone.

Schema (all keys optional except ``seed`` for stochastic scenarios)::

    scenario: str
    seed: int
    out: str
    eps_sweep: [float, ...]
    replicates: int
    domain:   {kind: box|disk, extents: [[lo, hi], ...], radius, dim}
    chain:    {J, d, eps, beta, H}
    kinetic:  {N, dt, T, mode, record_every, n_bins, init_region, velocities,
               max_reflections, write_snapshots}
    fp:       {n_r, n_v, v_max, alpha, dt, n_steps, record_every, init, init_region}
    macro:    {n, T, dt, init, init_region}
    flow:     {mu, dt, grid_n, b_kind, b_amplitude, n_steps, n_density}
    coupling: {mode: one-way|staggered, interval, T}
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .chain_dynamics import ChainParams
from .errors import ConfigError
from .geometry import ConvexDomain


def _coerce(value: Any, hint: str, path: str):
    optional = "None" in hint
    base = hint.replace("| None", "").replace("None |", "").strip()
    if value is None:
        if optional:
            return None
        raise ConfigError(path, "may not be null")
    try:
        if base == "int":
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError
            return int(value)
        if base == "float":
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if base == "bool":
            if not isinstance(value, bool):
                raise ValueError
            return value
        if base == "str":
            if not isinstance(value, str):
                raise ValueError
            return value
        if base == "list[float]":
            return [float(x) for x in value]
        if base == "list[list[float]]":
            return [[float(x) for x in row] for row in value]
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected {base}, got {value!r}") from None
    return value


def _section(cls, data: Mapping | None, path: str):
    """Build dataclass ``cls`` from ``data``, rejecting unknown keys."""
    data = {} if data is None else data
    if not isinstance(data, Mapping):
        raise ConfigError(path, "expected a mapping")
    hints = {f.name: str(f.type) for f in dataclasses.fields(cls)}
    kw = {}
    for key, value in data.items():
        if key not in hints:
            raise ConfigError(f"{path}.{key}", "unknown key")
        kw[key] = _coerce(value, hints[key], f"{path}.{key}")
    obj = cls(**kw)
    if hasattr(obj, "validate"):
        obj.validate(path)
    return obj


def _positive(obj, path: str, *names: str) -> None:
    for n in names:
        v = getattr(obj, n)
        if v is not None and not v > 0:
            raise ConfigError(f"{path}.{n}", f"must be positive, got {v}")


def _choice(obj, path: str, name: str, options: tuple) -> None:
    if getattr(obj, name) not in options:
        raise ConfigError(f"{path}.{name}", f"must be one of {list(options)}, got {getattr(obj, name)!r}")


def _region(region, path: str):
    if region is None:
        return
    for k, pair in enumerate(region):
        if len(pair) != 2 or not pair[0] < pair[1]:
            raise ConfigError(f"{path}.init_region[{k}]", "expected [lo, hi] with lo < hi")


@dataclass
class KineticConfig:
    N: int = 20000
    dt: float = 0.002
    T: float = 1.0
    mode: str = "kinetic"
    record_every: int = 50
    n_bins: int = 4
    init_region: list[list[float]] | None = None
    velocities: str = "maxwellian"
    max_reflections: int = 8
    write_snapshots: bool = False

    def validate(self, path: str) -> None:
        _positive(self, path, "N", "dt", "max_reflections", "n_bins")
        if self.T < 0 or self.record_every < 0:
            raise ConfigError(f"{path}.T", "T and record_every must be non-negative")
        _choice(self, path, "mode", ("kinetic", "overdamped"))
        _choice(self, path, "velocities", ("maxwellian", "zero"))
        _region(self.init_region, path)


@dataclass
class FPConfig:
    n_r: int = 24
    n_v: int = 32
    v_max: float = 6.0
    alpha: float = 0.0
    dt: float | None = None
    n_steps: int = 1000
    record_every: int = 10
    init: str = "gibbs"
    init_region: list[list[float]] | None = None

    def validate(self, path: str) -> None:
        _positive(self, path, "n_r", "n_v", "v_max", "dt")
        if self.alpha < 0 or self.n_steps < 0 or self.record_every < 0:
            raise ConfigError(path, "alpha, n_steps and record_every must be non-negative")
        _choice(self, path, "init", ("gibbs", "uniform", "region"))
        _region(self.init_region, path)


@dataclass
class MacroConfig:
    n: int = 32
    T: float = 1.0
    dt: float | None = None
    init: str = "uniform"
    init_region: list[list[float]] | None = None

    def validate(self, path: str) -> None:
        _positive(self, path, "n", "dt")
        if self.T < 0:
            raise ConfigError(f"{path}.T", "must be non-negative")
        _choice(self, path, "init", ("gibbs", "uniform", "region"))
        _region(self.init_region, path)


@dataclass
class FlowConfig:
    mu: float = 1.0
    dt: float = 0.01
    grid_n: int = 16
    b_kind: str = "zero"
    b_amplitude: float = 1.0
    n_steps: int = 100
    n_density: float = 1.0

    def validate(self, path: str) -> None:
        _positive(self, path, "mu", "dt", "grid_n", "n_density")
        _choice(self, path, "b_kind", ("zero", "cellular", "constant"))
        if self.n_steps < 0:
            raise ConfigError(f"{path}.n_steps", "must be non-negative")


@dataclass
class CouplingSchedule:
    """How micro (chain) and macro (flow) solvers exchange data.

    ``one-way`` keeps ``u`` frozen at its initial value; ``staggered``
    advances the flow one step every ``interval`` micro steps using the
    freshly computed stress.
    """

    mode: str = "staggered"
    interval: int = 10
    T: float = 0.2

    def validate(self, path: str) -> None:
        _choice(self, path, "mode", ("one-way", "staggered"))
        if self.interval < 1:
            raise ConfigError(f"{path}.interval", "must be >= 1")
        if self.T < 0:
            raise ConfigError(f"{path}.T", "must be non-negative")


@dataclass
class SimConfig:
    scenario: str = "run"
    seed: int | None = None
    out: str | None = None
    eps_sweep: list[float] | None = None
    replicates: int = 1
    domain: ConvexDomain = field(default_factory=lambda: ConvexDomain.box([-1.0], [1.0]))
    chain: ChainParams = field(default_factory=ChainParams)
    kinetic: KineticConfig = field(default_factory=KineticConfig)
    fp: FPConfig = field(default_factory=FPConfig)
    macro: MacroConfig = field(default_factory=MacroConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    coupling: CouplingSchedule = field(default_factory=CouplingSchedule)

    @property
    def eps_values(self) -> list[float]:
        return list(self.eps_sweep) if self.eps_sweep else [self.chain.eps]

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("seed", "required for stochastic scenarios")
        return self.seed

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "out": self.out,
            "eps_sweep": self.eps_sweep,
            "replicates": self.replicates,
            "domain": self.domain.to_config(),
            "chain": dataclasses.asdict(self.chain),
            "kinetic": dataclasses.asdict(self.kinetic),
            "fp": dataclasses.asdict(self.fp),
            "macro": dataclasses.asdict(self.macro),
            "flow": dataclasses.asdict(self.flow),
            "coupling": dataclasses.asdict(self.coupling),
        }


_TOP = {"scenario": "str", "seed": "int | None", "out": "str | None",
        "eps_sweep": "list[float] | None", "replicates": "int"}
_SECTIONS = {"kinetic": KineticConfig, "fp": FPConfig, "macro": MacroConfig,
             "flow": FlowConfig, "coupling": CouplingSchedule}


def config_from_dict(data: Mapping | None) -> SimConfig:
    """Validate a parsed configuration tree.

    Raises
    ------
    ConfigError
        On unknown keys, wrong types or out-of-range values.
    """
    data = dict(data or {})
    if "config" in data and "git_describe" in data:   # a run manifest
        data = dict(data["config"])
    kw: dict[str, Any] = {}
    for key, value in data.items():
        if key in _TOP:
            kw[key] = _coerce(value, _TOP[key], key)
        elif key in _SECTIONS:
            kw[key] = _section(_SECTIONS[key], value, key)
        elif key == "domain":
            kw[key] = ConvexDomain.from_config(value or {}, "domain")
        elif key == "chain":
            chain = _section(_ChainSection, value, "chain")
            try:
                kw[key] = ChainParams(**dataclasses.asdict(chain))
            except ValueError as exc:
                raise ConfigError("chain", str(exc)) from None
        else:
            raise ConfigError(key, "unknown key")
    cfg = SimConfig(**kw)
    if cfg.replicates < 1:
        raise ConfigError("replicates", "must be >= 1")
    if cfg.eps_sweep is not None and any(e <= 0 for e in cfg.eps_sweep):
        raise ConfigError("eps_sweep", "values must be positive")
    return cfg


@dataclass
class _ChainSection:
    J: int = 1
    d: int = 1
    eps: float = 0.5
    beta: float = 1.0
    H: float = 1.0


def load_config(path) -> SimConfig:
    """Read YAML (or JSON, a subset) from ``path``."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"not valid YAML: {exc}") from None
    if data is not None and not isinstance(data, Mapping):
        raise ConfigError(str(path), "top level must be a mapping")
    return config_from_dict(data)


def dump_config(cfg: SimConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


__all__ = ["SimConfig", "KineticConfig", "FPConfig", "MacroConfig", "FlowConfig",
           "CouplingSchedule", "config_from_dict", "load_config", "dump_config"]
