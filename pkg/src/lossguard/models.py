"""Differentiable classifiers with analytic gradients and local optimizers.

Two model kinds over flat parameter vectors:

* ``logistic``  -- multinomial logistic regression,
                   layout [W (input_dim x C, row-major), b (C)]
* ``mlp``       -- one tanh hidden layer,
                   layout [W1, b1, W2, b2]

The loss is mean softmax cross-entropy. The batch mean is accumulated
with ``math.fsum`` so the value is exactly invariant under row
permutations. tanh (rather than relu) keeps the loss smooth, which makes
finite-difference gradient checks tight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .vectors import RngStream

MODEL_KINDS = ("logistic", "mlp")
OPTIMIZER_KINDS = ("sgd", "adam")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    num_classes: int
    hidden_dim: int = 32
    init_scale: float = 0.05

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.kind == "mlp" and self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.init_scale < 0:
            raise ValueError("init_scale must be >= 0")


@dataclass
class Batch:
    """Feature matrix [n x input_dim] with integer class labels in [0, C)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise ValueError("labels must align with feature rows")

    def __len__(self) -> int:
        return self.features.shape[0]


def param_count(spec: ModelSpec) -> int:
    d_in, c, h = spec.input_dim, spec.num_classes, spec.hidden_dim
    if spec.kind == "logistic":
        return (d_in + 1) * c
    return (d_in + 1) * h + (h + 1) * c


def init_params(spec: ModelSpec, rng: RngStream) -> np.ndarray:
    """Weights uniform in [-init_scale, +init_scale], biases zero.

    Weight blocks are drawn in layout order so initialization is a pure
    function of (spec, stream state).
    """
    s = spec.init_scale
    d_in, c, h = spec.input_dim, spec.num_classes, spec.hidden_dim
    if spec.kind == "logistic":
        w = rng.uniform(-s, s, d_in * c)
        return np.concatenate([w, np.zeros(c)])
    w1 = rng.uniform(-s, s, d_in * h)
    w2 = rng.uniform(-s, s, h * c)
    return np.concatenate([w1, np.zeros(h), w2, np.zeros(c)])


def _unpack_logistic(params: np.ndarray, spec: ModelSpec):
    d_in, c = spec.input_dim, spec.num_classes
    w = params[: d_in * c].reshape(d_in, c)
    b = params[d_in * c :]
    return w, b


def _unpack_mlp(params: np.ndarray, spec: ModelSpec):
    d_in, c, h = spec.input_dim, spec.num_classes, spec.hidden_dim
    o = 0
    w1 = params[o : o + d_in * h].reshape(d_in, h)
    o += d_in * h
    b1 = params[o : o + h]
    o += h
    w2 = params[o : o + h * c].reshape(h, c)
    o += h * c
    b2 = params[o:]
    return w1, b1, w2, b2


def _check_params(params: np.ndarray, spec: ModelSpec) -> None:
    want = param_count(spec)
    if params.shape != (want,):
        raise ValueError(f"params have shape {params.shape}, spec needs ({want},)")


def logits(params: np.ndarray, features: np.ndarray, spec: ModelSpec) -> np.ndarray:
    _check_params(params, spec)
    if spec.kind == "logistic":
        w, b = _unpack_logistic(params, spec)
        return features @ w + b
    w1, b1, w2, b2 = _unpack_mlp(params, spec)
    return np.tanh(features @ w1 + b1) @ w2 + b2


def _row_cross_entropy(z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    # stable log-sum-exp per row; finite for finite logits
    zmax = np.max(z, axis=1)
    lse = zmax + np.log(np.sum(np.exp(z - zmax[:, None]), axis=1))
    return lse - z[np.arange(z.shape[0]), labels]


def loss(params: np.ndarray, batch: Batch, spec: ModelSpec) -> float:
    """Mean cross-entropy over the batch (exactly row-order invariant)."""
    if len(batch) == 0:
        raise ValueError("loss: empty batch")
    rows = _row_cross_entropy(logits(params, batch.features, spec), batch.labels)
    return math.fsum(rows.tolist()) / len(batch)


def _softmax(z: np.ndarray) -> np.ndarray:
    zmax = np.max(z, axis=1, keepdims=True)
    e = np.exp(z - zmax)
    return e / np.sum(e, axis=1, keepdims=True)


def grad(params: np.ndarray, batch: Batch, spec: ModelSpec) -> np.ndarray:
    """Analytic gradient of ``loss`` at ``params``."""
    if len(batch) == 0:
        raise ValueError("grad: empty batch")
    _check_params(params, spec)
    x, y = batch.features, batch.labels
    n = x.shape[0]
    if spec.kind == "logistic":
        w, b = _unpack_logistic(params, spec)
        dz = _softmax(x @ w + b)
        dz[np.arange(n), y] -= 1.0
        dz /= n
        return np.concatenate([(x.T @ dz).ravel(), dz.sum(axis=0)])
    w1, b1, w2, b2 = _unpack_mlp(params, spec)
    hid = np.tanh(x @ w1 + b1)
    dz = _softmax(hid @ w2 + b2)
    dz[np.arange(n), y] -= 1.0
    dz /= n
    dhid = (dz @ w2.T) * (1.0 - hid * hid)
    return np.concatenate(
        [(x.T @ dhid).ravel(), dhid.sum(axis=0), (hid.T @ dz).ravel(), dz.sum(axis=0)]
    )


def accuracy(params: np.ndarray, batch: Batch, spec: ModelSpec) -> float:
    """Fraction of argmax-correct predictions; ties go to the lowest class."""
    if len(batch) == 0:
        raise ValueError("accuracy: empty batch")
    pred = np.argmax(logits(params, batch.features, spec), axis=1)
    return float(np.sum(pred == batch.labels)) / len(batch)


@dataclass
class OptimizerState:
    """Value-semantics optimizer state; one step advances step_count by 1.

    ``momentum`` doubles as Adam's beta1. Moment buffers are allocated
    lazily on the first step.
    """

    kind: str = "adam"
    learning_rate: float = 1e-3
    momentum: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray | None = None
    second_moment: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")


def optimizer_step(
    state: OptimizerState, params: np.ndarray, g: np.ndarray
) -> tuple[np.ndarray, OptimizerState]:
    """One optimizer update; returns new params and advanced state."""
    lr = state.learning_rate
    t = state.step_count + 1
    if state.kind == "sgd":
        if state.momentum == 0.0:
            return params - lr * g, replace(state, step_count=t)
        m = state.first_moment if state.first_moment is not None else np.zeros_like(g)
        m = state.momentum * m + g
        return params - lr * m, replace(state, step_count=t, first_moment=m)
    b1, b2 = state.momentum, state.beta2
    m = state.first_moment if state.first_moment is not None else np.zeros_like(g)
    v = state.second_moment if state.second_moment is not None else np.zeros_like(g)
    m = b1 * m + (1.0 - b1) * g
    v = b2 * v + (1.0 - b2) * g * g
    mhat = m / (1.0 - b1**t)
    vhat = v / (1.0 - b2**t)
    new_params = params - lr * mhat / (np.sqrt(vhat) + state.epsilon)
    return new_params, replace(state, step_count=t, first_moment=m, second_moment=v)


def local_train(
    params: np.ndarray,
    data: Batch,
    steps: int,
    batch_size: int,
    opt: OptimizerState,
    rng: RngStream,
    spec: ModelSpec,
) -> tuple[np.ndarray, OptimizerState]:
    """Run ``steps`` optimizer steps on mini-batches from ``data``.

    The partition is shuffled once per local epoch with the caller's
    stream and consumed without replacement; ``steps`` counts optimizer
    steps, not epochs. The epoch cursor starts fresh on every call.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(data)
    if n == 0:
        raise ValueError("local_train: empty partition")
    order = rng.permutation(n)
    pos = 0
    for _ in range(steps):
        if pos >= n:
            order = rng.permutation(n)
            pos = 0
        idx = order[pos : pos + batch_size]
        pos += batch_size
        mb = Batch(data.features[idx], data.labels[idx])
        params, opt = optimizer_step(opt, params, grad(params, mb, spec))
    return params, opt
