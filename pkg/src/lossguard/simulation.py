"""The round loop: broadcast, local training, attacks, aggregation, eval.

One experiment is fully determined by its config's master seed. Stream
ids are fixed: client i trains with stream i, the server (data
generation, split, filter subsample, model init -- consumed in that
order) uses stream N, and client i's attack noise comes from stream
N + 1 + i. Honest clients never touch attack streams, so a run's
trajectory before the attack activates is bit-identical to a no-attack
run, and per-client streams make the outcome independent of the order
clients are processed in.

The orchestrator never hands honesty flags to an aggregator; they only
gate attack application and enrich the per-round reports.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .aggregators import DefenseError, SelectionReport, Submission, aggregate
from .attacks import attack_active, flip_labels, apply_attack
from .config import ExperimentConfig, resolve_malicious_ids, validate_config
from .datasets import Dataset, load_idx, make_split, subsample_filter, synth_blobs
from .models import (
    Batch,
    ModelSpec,
    OptimizerState,
    accuracy,
    init_params,
    local_train,
    loss,
)
from .vectors import RngStream


@dataclass
class ClientState:
    client_id: int
    partition: np.ndarray  # index set into the training dataset
    malicious: bool
    optimizer: OptimizerState
    rng: RngStream  # local training stream
    attack_rng: RngStream  # model-poisoning noise stream


@dataclass
class RoundReport:
    round: int
    centralized_accuracy: float
    server_eval_loss: float
    selection: SelectionReport
    attack_active: bool
    wall_time: float
    per_client_loss: dict[int, float] | None = None  # v_t values when the defense computes them
    server_filter_loss: float | None = None  # f_S(x_{t+1}) when the defense computes v_t
    defense_failed: bool = False


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    reports: list[RoundReport]
    final_params: np.ndarray
    model_spec: ModelSpec


def _load_data(config: ExperimentConfig, server_rng: RngStream) -> tuple[Dataset, Dataset]:
    ds = config.dataset
    if ds.name == "synth":
        train = synth_blobs(server_rng, ds.train_size, ds.num_classes, ds.input_dim, ds.separation)
        test = synth_blobs(server_rng, ds.test_size, ds.num_classes, ds.input_dim, ds.separation)
    else:
        train = load_idx(ds.train_images, ds.train_labels, name=ds.name)
        test = load_idx(ds.test_images, ds.test_labels, name=ds.name)
    if ds.train_limit is not None and ds.train_limit < len(train):
        train = Dataset(
            train.features[: ds.train_limit],
            train.labels[: ds.train_limit],
            num_classes=train.num_classes,
            name=train.name,
        )
    return train, test


def _fresh_optimizer(config: ExperimentConfig) -> OptimizerState:
    o = config.optimizer
    return OptimizerState(
        kind=o.kind,
        learning_rate=o.learning_rate,
        momentum=o.momentum,
        beta2=o.beta2,
        epsilon=o.epsilon,
    )


def setup_experiment(config: ExperimentConfig):
    """Build datasets, split, clients and the initial model for a config.

    Returns (x0, clients, train, eval_batch, filter_batch, model_spec).
    Exposed separately from ``run_experiment`` so tests and diagnostics
    can drive rounds by hand.
    """
    validate_config(config)
    n = config.num_clients
    server_rng = RngStream(config.seed, n)
    train, test = _load_data(config, server_rng)
    split = make_split(train, test, n, server_rng)
    if config.filter_size is not None:
        filter_idx = subsample_filter(split, config.filter_size, server_rng)
    else:
        filter_idx = split.server_filter
    model_spec = ModelSpec(
        kind=config.model.kind,
        input_dim=train.input_dim,
        num_classes=train.num_classes,
        hidden_dim=config.model.hidden_dim,
        init_scale=config.model.init_scale,
    )
    x0 = init_params(model_spec, server_rng)
    malicious = set(resolve_malicious_ids(config))
    clients = [
        ClientState(
            client_id=i,
            partition=split.client_partitions[i],
            malicious=i in malicious,
            optimizer=_fresh_optimizer(config),
            rng=RngStream(config.seed, i),
            attack_rng=RngStream(config.seed, n + 1 + i),
        )
        for i in range(n)
    ]
    return x0, clients, train, test.batch(split.server_eval), test.batch(filter_idx), model_spec


def run_round(
    x_t: np.ndarray,
    round_index: int,
    clients: list[ClientState],
    train: Dataset,
    eval_batch: Batch,
    filter_batch: Batch,
    model_spec: ModelSpec,
    config: ExperimentConfig,
) -> tuple[np.ndarray, RoundReport]:
    """One communication round; advances client optimizer and rng state."""
    t0 = time.perf_counter()
    active = attack_active(config.attack, round_index)
    poison_labels = active and config.attack.kind == "label_flip"

    submissions = []
    for client in clients:
        part = train.batch(client.partition)
        if client.malicious and poison_labels:
            part = Batch(part.features, flip_labels(part.labels, train.num_classes))
        opt = _fresh_optimizer(config) if config.optimizer.reset_each_round else client.optimizer
        params, client.optimizer = local_train(
            x_t,
            part,
            config.local_steps,
            config.batch_size,
            opt,
            client.rng,
            model_spec,
        )
        if client.malicious:
            params = apply_attack(config.attack, round_index, params, client.attack_rng)
        submissions.append(
            Submission(client.client_id, params, num_samples=len(client.partition))
        )

    def filter_loss(p: np.ndarray) -> float:
        return loss(p, filter_batch, model_spec)

    defense_failed = False
    scores = None
    try:
        x_next, selection = aggregate(config.aggregator, submissions, filter_loss)
    except DefenseError as err:
        defense_failed = True
        scores = getattr(err, "scores", None)
        x_next = x_t
        selection = SelectionReport(selected_ids=(), k_t=0, scores=scores)

    is_defense = config.aggregator.kind == "loss_cluster"
    per_client = selection.scores if is_defense else None
    fs_next = filter_loss(x_next) if is_defense and not defense_failed else None
    report = RoundReport(
        round=round_index,
        centralized_accuracy=accuracy(x_next, eval_batch, model_spec),
        server_eval_loss=loss(x_next, eval_batch, model_spec),
        selection=selection,
        attack_active=active,
        wall_time=time.perf_counter() - t0,
        per_client_loss=per_client,
        server_filter_loss=fs_next,
        defense_failed=defense_failed,
    )
    return x_next, report


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run the full simulation; deterministic given the config."""
    x, clients, train, eval_batch, filter_batch, model_spec = setup_experiment(config)
    reports: list[RoundReport] = []
    for t in range(config.rounds):
        x, report = run_round(
            x, t, clients, train, eval_batch, filter_batch, model_spec, config
        )
        reports.append(report)
    return ExperimentResult(config, reports, x, model_spec)


def post_attack_mean_accuracy(result: ExperimentResult) -> float:
    """Mean centralized accuracy over rounds start_round..T-1 inclusive.

    The window is taken from the config's attack start round even for
    no-attack runs so baselines are compared over the same rounds.
    """
    start = config_window_start(result.config)
    window = [r.centralized_accuracy for r in result.reports if r.round >= start]
    if not window:
        raise ValueError("no rounds in the post-attack window")
    return float(np.mean(window))


def config_window_start(config: ExperimentConfig) -> int:
    return config.attack.start_round


@dataclass
class GridRow:
    """One summary line: a (defense, attack, dataset) cell over repeats."""

    aggregator: str
    attack: str
    dataset: str
    repeats: int
    mean_accuracy: float | None
    std_accuracy: float | None
    error: str | None = None


def run_grid(configs: list[ExperimentConfig], repeats: int = 1) -> list[GridRow]:
    """Run each config ``repeats`` times (seed, seed+1, ...) and summarize.

    A failing cell is recorded with its error and does not stop the
    grid. The std column is the sample standard deviation across
    repeats, 0 for a single repeat.
    """
    if not configs:
        raise ValueError("empty grid")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rows = []
    for config in configs:
        try:
            accs = []
            for r in range(repeats):
                result = run_experiment(replace(config, seed=config.seed + r))
                accs.append(post_attack_mean_accuracy(result))
            mean = float(np.mean(accs))
            std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
            rows.append(
                GridRow(
                    aggregator=config.aggregator.kind,
                    attack=config.attack.kind,
                    dataset=config.dataset.name,
                    repeats=repeats,
                    mean_accuracy=mean,
                    std_accuracy=std,
                )
            )
        except Exception as err:  # noqa: BLE001 - cell isolation is the contract
            rows.append(
                GridRow(
                    aggregator=config.aggregator.kind,
                    attack=config.attack.kind,
                    dataset=config.dataset.name,
                    repeats=repeats,
                    mean_accuracy=None,
                    std_accuracy=None,
                    error=str(err),
                )
            )
    return rows
