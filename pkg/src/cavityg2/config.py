"""Experiment configuration: schema, YAML round-trip and presets.

All rates and times are in units of the cavity decay rate kappa.  A config
file looks like::

    model: eit-effective
    params: {g1: 6.0, g2: 6.0, omega_c: 6.0, delta: 0.2, Delta: 0.0, pump: 0.7,
             gamma1: 0.1, gamma2: 0.1, gamma3: 0.1, n_max: 4, kappa: 1.0}
    decay_scale: 0.5
    solver: {n_traj: 10000, seed: 7}
    correlation: {method: conditional-deterministic, n_tau: 2048}
    output: {directory: null, formats: [csv, json]}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .correlations import CONDITIONAL, DEFAULT_FLOOR, DEFAULT_N_TAU, JUMP_PAIRS
from .dynamics import TrajectoryConfig
from .models import (
    DEFAULT_EFFECTIVE_DECAY_SCALE,
    EIT_DASHED,
    EIT_SOLID,
    JC_DASHED,
    JC_SOLID,
    EITParams,
    JCParams,
    OpenSystem,
    build_driven_cavity,
    build_eit,
    build_jc,
    build_jc_effective,
    derive_eit_effective,
)

MODELS = ("jc-exact", "jc-effective", "eit-exact", "eit-effective", "cavity")
METHODS = (CONDITIONAL, JUMP_PAIRS)
FORMATS = ("csv", "json", "svg", "pdf", "png")

PRESETS = {
    "jc-dashed": JC_DASHED,
    "jc-solid": JC_SOLID,
    "eit-dashed": EIT_DASHED,
    "eit-solid": EIT_SOLID,
}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class CavityParams:
    pump: float = 0.1
    n_max: int = 8
    kappa: float = 1.0

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")


_FAMILY = {"jc": JCParams, "eit": EITParams, "cavity": CavityParams}


def family(model: str) -> str:
    return model.split("-")[0]


@dataclass(frozen=True)
class CorrelationSettings:
    method: str = CONDITIONAL
    tau_max: float | None = None
    n_tau: int = DEFAULT_N_TAU
    n_bins: int = 40
    t_burn: float | None = None
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"correlation.method must be one of {METHODS}")
        if self.tau_max is not None and not self.tau_max > 0:
            raise ValueError("correlation.tau_max must be positive")
        if self.n_tau < 2 or self.n_bins < 1:
            raise ValueError("correlation.n_tau must be >= 2 and n_bins >= 1")
        if not self.floor > 0:
            raise ValueError("correlation.floor must be positive")


@dataclass(frozen=True)
class OutputSettings:
    directory: str | None = None
    formats: tuple[str, ...] = ("csv", "json")

    def __post_init__(self):
        object.__setattr__(self, "formats", tuple(self.formats))
        bad = set(self.formats) - set(FORMATS)
        if bad:
            raise ValueError(f"unknown output formats {sorted(bad)}; choose from {FORMATS}")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    params: JCParams | EITParams | CavityParams
    decay_scale: float = DEFAULT_EFFECTIVE_DECAY_SCALE
    solver: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    correlation: CorrelationSettings = field(default_factory=CorrelationSettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        want = _FAMILY[family(self.model)]
        if not isinstance(self.params, want):
            raise ConfigError(f"model {self.model} needs {want.__name__}, got {type(self.params).__name__}")
        if not self.decay_scale > 0:
            raise ConfigError("decay_scale must be positive")

    @property
    def family(self) -> str:
        return family(self.model)

    def build(self) -> OpenSystem:
        p = self.params
        if self.model == "jc-exact":
            return build_jc(p)
        if self.model == "jc-effective":
            return build_jc_effective(p, self.decay_scale)
        if self.model == "eit-exact":
            return build_eit(p)
        if self.model == "eit-effective":
            return derive_eit_effective(p, self.decay_scale)[1]
        return build_driven_cavity(p.pump, p.n_max, p.kappa)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["output"]["formats"] = list(self.output.formats)
        return out

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, solver=dataclasses.replace(self.solver, seed=int(seed)))


def _record(cls, data: Any, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(data: dict[str, Any]) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(data) - {f.name for f in dataclasses.fields(ExperimentConfig)}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    model = data.get("model")
    if model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {model!r}")
    params = _record(_FAMILY[family(model)], data.get("params"), "params")
    try:
        return ExperimentConfig(
            model=model,
            params=params,
            decay_scale=float(data.get("decay_scale", DEFAULT_EFFECTIVE_DECAY_SCALE)),
            solver=_record(TrajectoryConfig, data.get("solver"), "solver"),
            correlation=_record(CorrelationSettings, data.get("correlation"), "correlation"),
            output=_record(OutputSettings, data.get("output"), "output"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def dumps(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return from_dict(data)


def load(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def preset(model: str, name: str | None = None) -> ExperimentConfig:
    """Config for ``model`` with the named parameter preset (``jc-solid`` etc.)."""
    if model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {model!r}")
    if family(model) == "cavity":
        return ExperimentConfig(model=model, params=CavityParams())
    name = name or f"{family(model)}-dashed"
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    if not name.startswith(family(model)):
        raise ConfigError(f"preset {name} does not belong to model {model}")
    return ExperimentConfig(model=model, params=PRESETS[name])


def apply_overrides(cfg: ExperimentConfig, assignments: list[str]) -> ExperimentConfig:
    """Apply ``section.key=value`` (or ``key=value`` at top level) overrides."""
    data = cfg.to_dict()
    for item in assignments:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        value = yaml.safe_load(raw)
        node = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(f"override {key!r}: no section {part!r}")
            node = node[part]
        node[parts[-1]] = value
    return from_dict(data)
