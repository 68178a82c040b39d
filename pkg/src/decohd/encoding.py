"""Fixed random-projection encoder with train-split standardization.

An input ``x`` is standardized with statistics fitted on the training
split only, then projected by a frozen random matrix into the
high-dimensional space: ``h = ((x - mean) / std) @ W``.  The projection
matrix is regenerated from its seed and never trained or stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import DEFAULT_TERNARY_ZERO_PROB, RandomMatrixSpec, derive_seed, generate_matrix

_ENCODE_CHUNK_ROWS = 1024


@dataclass
class Standardizer:
    """Per-feature mean and standard deviation of the training split."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, num_features: int) -> "Standardizer":
        """Pass-through standardizer (mean 0, std 1)."""
        return cls(np.zeros(num_features), np.ones(num_features))

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std


def fit_standardizer(train_features: np.ndarray) -> Standardizer:
    """Fit per-feature statistics; population std (ddof=0).

    Near-constant columns (std below 1e-9 relative to the mean scale)
    get their std clamped to 1 instead of raising, so tabular data with
    degenerate columns still encodes.
    """
    x = np.asarray(train_features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-d feature matrix, got shape {x.shape}")
    if x.shape[0] < 2:
        raise ValueError("standardizer needs at least 2 training rows")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    tiny = 1e-9 * np.maximum(1.0, np.abs(mean))
    std = np.where(std < tiny, 1.0, std)
    return Standardizer(mean=mean, std=std)


@dataclass(frozen=True)
class EncoderConfig:
    """Shape and seed of the frozen encoder.

    The matrix is regenerable from (seed, kind, num_features, dim) alone.
    ``normalize_output`` rescales each hypervector to unit L2 norm; a
    positive per-sample rescaling cannot change downstream argmax, and it
    bounds logit magnitude at large D.
    """

    num_features: int
    dim: int
    kind: str = "gaussian"
    seed: int = 0
    normalize_output: bool = True
    ternary_zero_prob: float = DEFAULT_TERNARY_ZERO_PROB

    def __post_init__(self):
        if self.num_features < 1:
            raise ValueError("num_features must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    def matrix_spec(self) -> RandomMatrixSpec:
        # 1/sqrt(num_features) keeps hypervector entries O(1) regardless
        # of the input feature count.
        return RandomMatrixSpec(
            rows=self.num_features,
            cols=self.dim,
            kind=self.kind,
            seed=derive_seed(self.seed, "encoder", self.num_features, self.dim),
            scale=1.0 / np.sqrt(self.num_features),
            ternary_zero_prob=self.ternary_zero_prob,
        )


class RandomProjectionEncoder:
    """Applies the frozen projection; immutable after construction.

    An explicit ``matrix`` can be passed to pin the projection in tests.
    """

    def __init__(self, config: EncoderConfig, matrix: np.ndarray | None = None):
        self.config = config
        if matrix is None:
            matrix = generate_matrix(config.matrix_spec(), dtype=np.float32)
        matrix = np.asarray(matrix)
        if matrix.shape != (config.num_features, config.dim):
            raise ValueError(
                f"encoder matrix shape {matrix.shape} does not match config "
                f"({config.num_features}, {config.dim})"
            )
        self.matrix = matrix

    def encode(self, x: np.ndarray, standardizer: Standardizer, dtype=np.float32) -> np.ndarray:
        """Encode a single sample into a hypervector."""
        h = self.encode_batch(np.asarray(x)[None, :], standardizer, dtype=dtype)
        return h[0]

    def encode_batch(
        self, features: np.ndarray, standardizer: Standardizer, dtype=np.float32
    ) -> np.ndarray:
        """Encode rows of *features*; projection runs in float64 chunks."""
        features = np.asarray(features)
        if features.ndim != 2 or features.shape[1] != self.config.num_features:
            raise ValueError(
                f"expected shape (n, {self.config.num_features}), got {features.shape}"
            )
        if not np.isfinite(features).all():
            raise ValueError("non-finite value in input features")
        z = standardizer.apply(features)
        w = self.matrix.astype(np.float64, copy=False)
        out = np.empty((features.shape[0], self.config.dim), dtype=dtype)
        for start in range(0, features.shape[0], _ENCODE_CHUNK_ROWS):
            stop = min(start + _ENCODE_CHUNK_ROWS, features.shape[0])
            block = z[start:stop] @ w
            if self.config.normalize_output:
                norms = np.linalg.norm(block, axis=1, keepdims=True)
                np.divide(block, norms, out=block, where=norms > 0.0)
            out[start:stop] = block
        return out
