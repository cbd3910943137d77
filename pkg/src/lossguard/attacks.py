"""The three independent Byzantine behaviors and their round gating.

* label flipping   -- data poisoning: label c becomes C - c - 1 on the
                      malicious client's partition before local training
* sign flipping    -- model poisoning: the submitted parameter vector is
                      negated
* gaussian noise   -- model poisoning: N(mu, sigma^2) noise added
                      coordinate-wise to the submitted parameters

All attacks activate at ``start_round`` (0-based round index) and stay
active; before that, malicious clients behave exactly like honest ones.
Each malicious client draws noise from its own stream, so attacks are
independent across clients and never touch honest clients' randomness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vectors import RngStream, gaussian_sample

ATTACK_KINDS = ("none", "label_flip", "sign_flip", "gaussian_noise")


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    mu: float = 0.25
    sigma: float = 1.0
    start_round: int = 15

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.start_round < 0:
            raise ValueError("start_round must be >= 0")


def attack_active(spec: AttackSpec, round_index: int) -> bool:
    return spec.kind != "none" and round_index >= spec.start_round


def flip_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Map every label c to C - c - 1 (an involution on [0, C))."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError("label out of range")
    return num_classes - 1 - labels


def sign_flip(update: np.ndarray) -> np.ndarray:
    """Negate the submitted parameter vector.

    With half the clients flipped, plain averaging collapses the global
    model toward zero, which is the attack's point.
    """
    return -update


def add_noise(update: np.ndarray, mu: float, sigma: float, rng: RngStream) -> np.ndarray:
    """update + eps with eps ~ N(mu, sigma^2 I), drawn coordinate-wise."""
    return update + gaussian_sample(rng, mu, sigma, update.shape[0])


def apply_attack(
    spec: AttackSpec, round_index: int, update: np.ndarray, rng: RngStream
) -> np.ndarray:
    """Transform a malicious client's submission for the given round.

    The caller guarantees the client is malicious. Label flipping is a
    data transform applied before local training, so it passes the
    already-poisoned update through unchanged here.
    """
    if round_index < 0:
        raise ValueError("round_index must be >= 0")
    if not attack_active(spec, round_index):
        return update
    if spec.kind == "label_flip":
        return update
    if spec.kind == "sign_flip":
        return sign_flip(update)
    if spec.kind == "gaussian_noise":
        return add_noise(update, spec.mu, spec.sigma, rng)
    raise ValueError(f"unknown attack kind {spec.kind!r}")  # pragma: no cover
