"""Declarative experiment configuration: schema, YAML parsing, validation.

A config file is a YAML mapping with the sections below; every field
has a default, so a minimal run config only names a dataset and an
aggregator. Unknown keys are rejected (listed in the error) and
cross-field constraints are checked before anything runs.

The config hash is a SHA-256 over the resolved config (defaults filled,
``output`` excluded), so editing comments or whitespace in the file
never changes it, while any semantically meaningful change does.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .aggregators import ConfigError
from .aggregators import AggregatorSpec
from .attacks import AttackSpec
from .models import MODEL_KINDS, OPTIMIZER_KINDS

DATASET_NAMES = ("synth", "idx", "mnist", "fmnist")


@dataclass(frozen=True)
class DatasetConfig:
    name: str = "synth"
    # synthetic blobs
    train_size: int = 5000
    test_size: int = 1000
    num_classes: int = 10
    input_dim: int = 20
    separation: float = 3.0
    # IDX files (mnist / fmnist / idx)
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    # optional truncation of the training set before partitioning
    train_limit: int | None = None


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "logistic"
    hidden_dim: int = 32
    init_scale: float = 0.05


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 1e-3
    momentum: float = 0.9  # beta1 for adam
    beta2: float = 0.999
    epsilon: float = 1e-8
    reset_each_round: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    attack: AttackSpec = field(default_factory=AttackSpec)
    aggregator: AggregatorSpec = field(default_factory=AggregatorSpec)
    num_clients: int = 10
    malicious_count: int = 5
    malicious_ids: tuple[int, ...] | None = None
    rounds: int = 50
    local_steps: int = 30
    batch_size: int = 32
    filter_size: int | None = None  # server filtering subset size; None = full
    seed: int = 42
    output: str | None = None


def resolve_malicious_ids(config: ExperimentConfig) -> tuple[int, ...]:
    """Explicit ids if given, else the last malicious_count client ids."""
    if config.malicious_ids is not None:
        return tuple(sorted(config.malicious_ids))
    n, m = config.num_clients, config.malicious_count
    return tuple(range(n - m, n))


def validate_config(config: ExperimentConfig) -> None:
    """Cross-field constraint checks; raises ConfigError naming the issue."""
    n = config.num_clients
    if n < 2:
        raise ConfigError("num_clients must be >= 2")
    if not 0 <= config.malicious_count < n:
        raise ConfigError(
            f"malicious_count must be in [0, num_clients), got {config.malicious_count} of {n}"
        )
    if config.malicious_ids is not None:
        ids = tuple(config.malicious_ids)
        if len(ids) != config.malicious_count:
            raise ConfigError(
                f"malicious_ids lists {len(ids)} clients, malicious_count is {config.malicious_count}"
            )
        if len(set(ids)) != len(ids) or any(not 0 <= i < n for i in ids):
            raise ConfigError("malicious_ids must be distinct client indices in [0, num_clients)")
    if config.rounds < 0:
        raise ConfigError("rounds must be >= 0")
    if config.local_steps < 1:
        raise ConfigError("local_steps must be >= 1")
    if config.batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    if not 0 <= config.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if config.filter_size is not None and config.filter_size < 1:
        raise ConfigError("filter_size must be >= 1")

    ds = config.dataset
    if ds.name not in DATASET_NAMES:
        raise ConfigError(f"unknown dataset name {ds.name!r}, expected one of {DATASET_NAMES}")
    if ds.name == "synth":
        if ds.train_size < ds.num_classes:
            raise ConfigError("train_size must be >= num_classes")
        if ds.test_size < 1:
            raise ConfigError("test_size must be >= 1")
        if ds.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if ds.input_dim < 1:
            raise ConfigError("input_dim must be >= 1")
        if ds.separation < 0:
            raise ConfigError("separation must be >= 0")
    else:
        missing = [
            name
            for name in ("train_images", "train_labels", "test_images", "test_labels")
            if getattr(ds, name) is None
        ]
        if missing:
            raise ConfigError(f"dataset {ds.name!r} needs file paths: {', '.join(missing)}")
    if ds.train_limit is not None and ds.train_limit < n:
        raise ConfigError("train_limit must leave at least one sample per client")

    if config.model.kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {config.model.kind!r}")
    if config.model.kind == "mlp" and config.model.hidden_dim < 1:
        raise ConfigError("hidden_dim must be >= 1")
    if config.model.init_scale < 0:
        raise ConfigError("init_scale must be >= 0")

    opt = config.optimizer
    if opt.kind not in OPTIMIZER_KINDS:
        raise ConfigError(f"unknown optimizer kind {opt.kind!r}")
    if opt.learning_rate < 0:
        raise ConfigError("learning_rate must be >= 0")
    if not 0 <= opt.momentum < 1:
        raise ConfigError("momentum must be in [0, 1)")
    if not 0 <= opt.beta2 < 1:
        raise ConfigError("beta2 must be in [0, 1)")
    if opt.epsilon <= 0:
        raise ConfigError("epsilon must be > 0")

    agg = config.aggregator
    if agg.kind == "trimmed_mean":
        t = int(agg.beta * n)
        if n - 2 * t < 1:
            raise ConfigError(
                f"trimmed_mean with beta={agg.beta} trims everything for num_clients={n}"
            )
    if agg.kind in ("krum", "multi_krum"):
        if n - agg.f - 2 < 1:
            raise ConfigError(f"krum needs N - f - 2 >= 1, got N={n}, f={agg.f}")
    if agg.kind == "multi_krum" and agg.k is not None:
        if not 1 <= agg.k <= n - agg.f - 2:
            raise ConfigError(
                f"multi_krum requires k <= N - f - 2; got k={agg.k}, N={n}, f={agg.f}"
            )
    if agg.kind == "loss_cluster" and agg.k_t_override is not None:
        if not 1 <= agg.k_t_override <= n:
            raise ConfigError(
                f"k_t_override must be in [1, num_clients], got {agg.k_t_override}"
            )


_SECTION_TYPES = {
    "dataset": DatasetConfig,
    "model": ModelConfig,
    "optimizer": OptimizerConfig,
    "attack": AttackSpec,
    "aggregator": AggregatorSpec,
}


def _build_section(cls, data, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"{where}: {err}") from None


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a plain mapping."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in config: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        if name in _SECTION_TYPES:
            kwargs[name] = _build_section(_SECTION_TYPES[name], value, name)
        elif name == "malicious_ids" and value is not None:
            kwargs[name] = tuple(int(i) for i in value)
        else:
            kwargs[name] = value
    try:
        config = ExperimentConfig(**kwargs)
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err)) from None
    validate_config(config)
    return config


def parse_config(path) -> ExperimentConfig:
    """Parse and validate a YAML experiment config file."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: invalid YAML: {err}") from None
    if data is None:
        data = {}
    return config_from_dict(data)


@dataclass
class GridConfig:
    base: ExperimentConfig
    aggregators: list[AggregatorSpec]
    attacks: list[AttackSpec]
    repeats: int = 3

    def cells(self) -> list[ExperimentConfig]:
        """Defense-major cell ordering: aggregators outer, attacks inner."""
        out = []
        for agg in self.aggregators:
            for attack in self.attacks:
                out.append(dataclasses.replace(self.base, aggregator=agg, attack=attack))
        return out


def parse_grid_config(path) -> GridConfig:
    """Parse a YAML grid file: an ``experiment`` base plus a ``grid`` block.

    Individual cells are validated when they run, not here, so one
    infeasible combination cannot block the rest of the grid.
    """
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: invalid YAML: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError("grid config root must be a mapping")
    unknown = sorted(set(data) - {"experiment", "grid"})
    if unknown:
        raise ConfigError(f"unknown keys in grid config: {', '.join(unknown)}")
    base_data = data.get("experiment") or {}
    if not isinstance(base_data, dict):
        raise ConfigError("experiment: expected a mapping")
    # cells get validated individually; the base may omit attack/aggregator
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(base_data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in experiment: {', '.join(unknown)}")
    grid = data.get("grid") or {}
    unknown = sorted(set(grid) - {"aggregators", "attacks", "repeats"})
    if unknown:
        raise ConfigError(f"unknown keys in grid: {', '.join(unknown)}")
    aggs = [
        _build_section(AggregatorSpec, a, f"grid.aggregators[{i}]")
        for i, a in enumerate(grid.get("aggregators") or [{}])
    ]
    attacks = [
        _build_section(AttackSpec, a, f"grid.attacks[{i}]")
        for i, a in enumerate(grid.get("attacks") or [{}])
    ]
    repeats = int(grid.get("repeats", 3))
    if repeats < 1:
        raise ConfigError("grid repeats must be >= 1")
    return GridConfig(
        base=_build_base(base_data), aggregators=aggs, attacks=attacks, repeats=repeats
    )


def _build_base(base_data: dict) -> ExperimentConfig:
    kwargs = {}
    for name, value in base_data.items():
        if name in _SECTION_TYPES:
            kwargs[name] = _build_section(_SECTION_TYPES[name], value, name)
        elif name == "malicious_ids" and value is not None:
            kwargs[name] = tuple(int(i) for i in value)
        else:
            kwargs[name] = value
    try:
        return ExperimentConfig(**kwargs)
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err)) from None


def config_to_dict(config: ExperimentConfig) -> dict:
    return dataclasses.asdict(config)


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the resolved config; ``output`` does not participate."""
    data = config_to_dict(config)
    data.pop("output", None)
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
