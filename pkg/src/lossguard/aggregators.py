"""Robust aggregation rules behind one uniform interface.

Six rules map a round's submissions to a new global model plus a
selection report: mean (FedAvg), trimmed mean, coordinate-wise median,
Krum, Multi-Krum, and the loss-clustering defense (score every
submission by its loss on the server's trusted data, split the scalar
losses into a low and high group with 2-means, average the low group).

All rules canonicalize submissions into client-id order first, so the
output is exactly invariant under permutations of the input list, and
every client-level tie breaks toward the lowest client id.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

AGGREGATOR_KINDS = ("mean", "trimmed_mean", "median", "krum", "multi_krum", "loss_cluster")

TWO_MEANS_MAX_ITER = 100


class ConfigError(ValueError):
    """An aggregator was configured outside its feasible parameter range."""


class DefenseError(RuntimeError):
    """The defense cannot act this round (e.g. every loss is non-finite)."""


@dataclass(frozen=True)
class AggregatorSpec:
    kind: str = "loss_cluster"
    beta: float = 0.2  # trimmed_mean: fraction trimmed per side
    f: int = 5  # krum / multi_krum: assumed malicious count
    k: int | None = None  # multi_krum: updates kept; None = N - f - 2 at run time
    k_t_override: int | None = None  # loss_cluster: fixed K_t diagnostic mode
    single_pass_cluster: bool = False  # loss_cluster: skip Lloyd iteration

    def __post_init__(self):
        if self.kind not in AGGREGATOR_KINDS:
            raise ConfigError(f"unknown aggregator kind {self.kind!r}")
        if not 0.0 <= self.beta < 0.5:
            raise ConfigError(f"beta must be in [0, 0.5), got {self.beta}")
        if self.f < 0:
            raise ConfigError("f must be >= 0")
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.k_t_override is not None and self.k_t_override < 1:
            raise ConfigError("k_t_override must be >= 1")


@dataclass(frozen=True)
class Submission:
    client_id: int
    model: np.ndarray
    num_samples: int = 1


@dataclass
class SelectionReport:
    """Which submissions made it into the aggregate, and why.

    ``scores`` maps client id to Krum score or server-side loss; it is
    None for rules without client-level scores (mean, trimmed mean,
    median -- trimming happens per coordinate, so no client-level
    selection exists there and selected_ids lists everyone).
    """

    selected_ids: tuple[int, ...]
    k_t: int
    scores: dict[int, float] | None = None

    def __post_init__(self):
        if self.k_t != len(self.selected_ids):
            raise ValueError("k_t must equal the number of selected ids")


def _canonical(subs: list[Submission]) -> list[Submission]:
    if not subs:
        raise ValueError("no submissions to aggregate")
    ids = [s.client_id for s in subs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate client ids in submissions")
    dim = subs[0].model.shape
    for s in subs:
        if s.model.shape != dim:
            raise ValueError("submissions have mixed dimensions")
    return sorted(subs, key=lambda s: s.client_id)


def _stack(subs: list[Submission]) -> np.ndarray:
    return np.stack([s.model for s in subs])


def _select_all(subs: list[Submission]) -> SelectionReport:
    ids = tuple(s.client_id for s in subs)
    return SelectionReport(selected_ids=ids, k_t=len(ids))


def agg_mean(subs: list[Submission]) -> tuple[np.ndarray, SelectionReport]:
    """FedAvg: element-wise average weighted by each client's data size."""
    subs = _canonical(subs)
    weights = np.array([s.num_samples for s in subs], dtype=np.float64)
    total = weights.sum()
    if total <= 0:
        raise ValueError("total sample count must be positive")
    out = (weights[:, None] / total * _stack(subs)).sum(axis=0)
    return out, _select_all(subs)


def agg_trimmed_mean(
    subs: list[Submission], beta: float
) -> tuple[np.ndarray, SelectionReport]:
    """Coordinate-wise mean after trimming floor(beta*N) values per tail."""
    subs = _canonical(subs)
    n = len(subs)
    if not 0.0 <= beta < 0.5:
        raise ConfigError(f"beta must be in [0, 0.5), got {beta}")
    t = int(np.floor(beta * n))
    if n - 2 * t < 1:
        raise ConfigError(f"trimming {t} per side leaves nothing of {n} submissions")
    ordered = np.sort(_stack(subs), axis=0)
    out = ordered[t : n - t].mean(axis=0)
    return out, _select_all(subs)


def agg_median(subs: list[Submission]) -> tuple[np.ndarray, SelectionReport]:
    """Coordinate-wise median; even N averages the two central values."""
    subs = _canonical(subs)
    n = len(subs)
    ordered = np.sort(_stack(subs), axis=0)
    if n % 2 == 1:
        out = ordered[n // 2].copy()
    else:
        out = (ordered[n // 2 - 1] + ordered[n // 2]) / 2.0
    return out, _select_all(subs)


def _check_krum_feasible(n: int, f: int) -> int:
    neighbors = n - f - 2
    if neighbors < 1:
        raise ConfigError(
            f"krum needs N - f - 2 >= 1, got N={n}, f={f}"
        )
    return neighbors


def krum_scores(subs: list[Submission], f: int) -> dict[int, float]:
    """Per-client sum of squared distances to the N-f-2 nearest others."""
    subs = _canonical(subs)
    n = len(subs)
    neighbors = _check_krum_feasible(n, f)
    models = _stack(subs)
    scores: dict[int, float] = {}
    for i in range(n):
        d = models - models[i]
        dists = np.sum(d * d, axis=1)
        dists = np.delete(dists, i)
        dists.sort(kind="stable")
        scores[subs[i].client_id] = float(np.sum(dists[:neighbors]))
    return scores


def agg_krum(subs: list[Submission], f: int) -> tuple[np.ndarray, SelectionReport]:
    """Return the single submission with the lowest Krum score."""
    subs = _canonical(subs)
    scores = krum_scores(subs, f)
    winner = min(subs, key=lambda s: (scores[s.client_id], s.client_id))
    report = SelectionReport(selected_ids=(winner.client_id,), k_t=1, scores=scores)
    return winner.model.copy(), report


def agg_multi_krum(
    subs: list[Submission], f: int, k: int
) -> tuple[np.ndarray, SelectionReport]:
    """Unweighted mean of the k submissions with the lowest Krum scores."""
    subs = _canonical(subs)
    n = len(subs)
    neighbors = _check_krum_feasible(n, f)
    if not 1 <= k <= neighbors:
        raise ConfigError(
            f"multi_krum requires k <= N - f - 2 (and k >= 1); got k={k}, N={n}, f={f}"
        )
    scores = krum_scores(subs, f)
    chosen = sorted(subs, key=lambda s: (scores[s.client_id], s.client_id))[:k]
    chosen.sort(key=lambda s: s.client_id)
    out = _stack(chosen).mean(axis=0)
    ids = tuple(s.client_id for s in chosen)
    return out, SelectionReport(selected_ids=ids, k_t=k, scores=scores)


def two_means_split(
    losses, single_pass: bool = False
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split scalar losses into a low and a high group.

    1-d 2-means with centers initialized at the min and max value;
    assignment ties go to the low cluster. Non-finite losses are
    pre-assigned to the high group and excluded from clustering. With
    ``single_pass`` the initial assignment is returned without Lloyd
    iteration (ablation mode).

    Returns (low_ids, high_ids) as sorted index tuples into ``losses``.
    """
    values = np.asarray(losses, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("losses must be a non-empty 1-d sequence")
    finite = np.isfinite(values)
    high_pre = [int(i) for i in np.flatnonzero(~finite)]
    idx = np.flatnonzero(finite)
    if idx.size == 0:
        raise DefenseError("every client loss is non-finite; cannot cluster")
    vals = values[idx]
    if idx.size == 1 or vals.min() == vals.max():
        return tuple(int(i) for i in idx), tuple(sorted(high_pre))

    c_low, c_high = float(vals.min()), float(vals.max())
    assign = np.abs(vals - c_low) <= np.abs(vals - c_high)  # True -> low
    if not single_pass:
        for _ in range(TWO_MEANS_MAX_ITER):
            c_low = float(vals[assign].mean())
            c_high = float(vals[~assign].mean())
            new_assign = np.abs(vals - c_low) <= np.abs(vals - c_high)
            if np.array_equal(new_assign, assign):
                break
            assign = new_assign
    low = tuple(int(i) for i in idx[assign])
    high = tuple(sorted(high_pre + [int(i) for i in idx[~assign]]))
    return low, high


def agg_loss_cluster(
    subs: list[Submission],
    server_filter_loss: Callable[[np.ndarray], float],
    k_t_override: int | None = None,
    single_pass: bool = False,
) -> tuple[np.ndarray, SelectionReport]:
    """Loss-clustering defense: keep the low-loss group, average it.

    Every submission is scored with the server-side trusted loss; the
    scalar scores are split by ``two_means_split`` and the low group is
    averaged without weights. With ``k_t_override`` the split is
    replaced by "take the k lowest-loss clients" (non-finite losses sort
    last). The report carries every client's loss.
    """
    subs = _canonical(subs)
    v = [float(server_filter_loss(s.model)) for s in subs]
    scores = {s.client_id: v[i] for i, s in enumerate(subs)}
    if k_t_override is not None:
        if not 1 <= k_t_override <= len(subs):
            raise ConfigError(
                f"k_t_override={k_t_override} out of range for {len(subs)} submissions"
            )
        order = sorted(
            range(len(subs)),
            key=lambda i: (not np.isfinite(v[i]), v[i] if np.isfinite(v[i]) else 0.0, subs[i].client_id),
        )
        keep = sorted(order[:k_t_override])
    else:
        low, _ = two_means_split(v, single_pass=single_pass)
        keep = list(low)
    chosen = [subs[i] for i in keep]
    out = _stack(chosen).mean(axis=0)
    ids = tuple(s.client_id for s in chosen)
    return out, SelectionReport(selected_ids=ids, k_t=len(ids), scores=scores)


def aggregate(
    spec: AggregatorSpec,
    subs: list[Submission],
    server_filter_loss: Callable[[np.ndarray], float] | None = None,
) -> tuple[np.ndarray, SelectionReport]:
    """Dispatch one round of aggregation according to ``spec``."""
    if spec.kind == "mean":
        return agg_mean(subs)
    if spec.kind == "trimmed_mean":
        return agg_trimmed_mean(subs, spec.beta)
    if spec.kind == "median":
        return agg_median(subs)
    if spec.kind == "krum":
        return agg_krum(subs, spec.f)
    if spec.kind == "multi_krum":
        k = spec.k if spec.k is not None else len(subs) - spec.f - 2
        return agg_multi_krum(subs, spec.f, k)
    if spec.kind == "loss_cluster":
        if server_filter_loss is None:
            raise ValueError("loss_cluster needs the server filter loss")
        return agg_loss_cluster(
            subs,
            server_filter_loss,
            k_t_override=spec.k_t_override,
            single_pass=spec.single_pass_cluster,
        )
    raise ConfigError(f"unknown aggregator kind {spec.kind!r}")  # pragma: no cover
