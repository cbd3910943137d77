"""Flat parameter-vector arithmetic and deterministic random streams.

Every model, update and attack payload in the simulator is a flat
float64 numpy array ("param vector"). Binary operations require equal
dimensions and raise ValueError otherwise. Non-finite entries are
propagated untouched; only the defense layer decides what to do with
them.
"""

from __future__ import annotations

import numpy as np

# A param vector is a plain 1-d float64 ndarray; alias kept for signatures.
ParamVector = np.ndarray


def as_vector(values) -> np.ndarray:
    """Coerce to a 1-d float64 array (copies only if needed)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"param vector must be 1-d, got shape {v.shape}")
    return v


def _check_same_dim(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")


def is_finite(x: np.ndarray) -> bool:
    """True iff every entry is finite (no NaN, no +/-inf)."""
    return bool(np.isfinite(x).all())


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """alpha * x + y, dimensions must match."""
    _check_same_dim(x, y)
    return alpha * x + y


def sq_euclidean(x: np.ndarray, y: np.ndarray) -> float:
    """Squared Euclidean distance sum_j (x_j - y_j)^2.

    Computed as an elementwise square followed by a sum so the result is
    bit-identical to a scalar loop for small dimensions (no FMA/BLAS
    reassociation).
    """
    _check_same_dim(x, y)
    d = x - y
    return float(np.sum(d * d))


def coordwise_sorted(vectors: list[np.ndarray], j: int) -> np.ndarray:
    """Values at coordinate j across all vectors, in non-decreasing order."""
    if len(vectors) == 0:
        raise ValueError("coordwise_sorted: empty vector list")
    dim = vectors[0].shape[0]
    for v in vectors:
        if v.shape[0] != dim:
            raise ValueError("coordwise_sorted: mixed dimensions")
    if not 0 <= j < dim:
        raise ValueError(f"coordinate {j} out of range for dimension {dim}")
    col = np.array([v[j] for v in vectors], dtype=np.float64)
    return np.sort(col, kind="stable")


class RngStream:
    """Deterministic random stream identified by (seed, stream_id).

    Backed by the counter-based Philox generator keyed on the pair, so
    streams with distinct stream_id never overlap and the draw sequence
    depends only on (seed, stream_id) and the order of calls on this
    stream -- never on what other streams do.
    """

    def __init__(self, seed: int, stream_id: int):
        if not (0 <= seed < 2**64 and 0 <= stream_id < 2**64):
            raise ValueError("seed and stream_id must be unsigned 64-bit")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.gen = np.random.Generator(np.random.Philox(key=[self.seed, self.stream_id]))

    def spawn(self, stream_id: int) -> "RngStream":
        """Fresh stream with the same seed and a different id."""
        return RngStream(self.seed, stream_id)

    # thin pass-throughs used across the simulator
    def normal(self, loc: float, scale: float, size) -> np.ndarray:
        return self.gen.normal(loc, scale, size)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self.gen.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def choice(self, a, size: int, replace: bool = False) -> np.ndarray:
        return self.gen.choice(a, size=size, replace=replace)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def gaussian_sample(rng: RngStream, mu: float, sigma: float, d: int) -> np.ndarray:
    """d independent draws from N(mu, sigma^2); sigma=0 gives the constant mu."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if d < 0:
        raise ValueError(f"dimension must be >= 0, got {d}")
    return rng.normal(mu, sigma, d)
