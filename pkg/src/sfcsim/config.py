"""Experiment configuration: one YAML document drives every command.

The file has one section per module (trace, topology, failure, energy, env,
ppo, cluster, eval) plus a master seed and output directory. CLI flags
override file values. Every derived artifact records the config hash and
seed in a header comment so runs can be traced back to their inputs.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields

import yaml

from .env import EnvConfig
from .ppo import PpoConfig
from .simcore import EnergyModel, FailureModel, Topology
from .trace import DEFAULT_ORIGIN_MS, DEFAULT_STEP_DURATION


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configuration."""


@dataclass
class TraceConfig:
    source: str = "synthetic"  # synthetic | csv | cdr
    path: str | None = None
    n_cells: int = 276
    n_steps: int = 8928
    step_duration: int = DEFAULT_STEP_DURATION
    origin_time_ms: int = DEFAULT_ORIGIN_MS
    amplitude: float = 0.6
    noise: float = 0.15
    mean_step_total: float = 400.0
    split_fraction: float = 0.9


@dataclass
class ClusterConfig:
    k: int = 12
    k_min: int = 1
    k_max: int = 50
    utc_offset_hours: float = 1.0
    model_path: str | None = None
    select_index: int | None = None


@dataclass
class EvalSettings:
    n_runs: int = 100
    quick_runs: int = 10


@dataclass
class ExperimentConfig:
    trace: TraceConfig = field(default_factory=TraceConfig)
    topology: Topology = field(default_factory=Topology)
    failure: FailureModel = field(default_factory=FailureModel)
    energy: EnergyModel = field(default_factory=EnergyModel)
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)
    cells: list[int] | None = None  # explicit managed-cell list
    master_seed: int = 0
    out_dir: str = "out"


_SECTIONS = {
    "trace": TraceConfig,
    "topology": Topology,
    "failure": FailureModel,
    "energy": EnergyModel,
    "env": EnvConfig,
    "ppo": PpoConfig,
    "cluster": ClusterConfig,
    "eval": EvalSettings,
}


def _build_section(cls, data: dict, section: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key == "hidden" and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}] section: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data or {})
    kwargs = {}
    for section, cls in _SECTIONS.items():
        raw = data.pop(section, {})
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"section [{section}] must be a mapping")
        kwargs[section] = _build_section(cls, raw, section)
    for key in ("cells", "master_seed", "out_dir"):
        if key in data:
            kwargs[key] = data.pop(key)
    if data:
        raise ConfigError(f"unknown top-level keys: {sorted(data)}")
    return ExperimentConfig(**kwargs)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    data = dataclasses.asdict(cfg)
    data["ppo"]["hidden"] = list(data["ppo"]["hidden"])
    return data


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping in {path}")
    return config_from_dict(data)


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=True)


def config_hash(cfg: ExperimentConfig) -> str:
    """Short stable digest of the full configuration."""
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]
