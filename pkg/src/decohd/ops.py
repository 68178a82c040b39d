"""Primitive operations of the high-dimensional vector space.

Three algebraic primitives carry the whole model:

* binding -- elementwise multiplication; composes hypervectors into a
  quasi-orthogonal product,
* bundling -- weighted elementwise addition; superposes hypervectors,
* dot product -- the similarity measure used for scoring.

Frozen random matrices (the input encoder and the per-layer latent
projectors) are described by :class:`RandomMatrixSpec` and regenerated on
demand, so they never need to be stored.

Seed derivation
---------------
Every random stream in the package flows from one root seed through a
single fixed rule: ``derive_seed(root, *tokens)`` hashes the ASCII string
``"<root>:<token>:..."`` with SHA-256 and keeps the first 8 bytes
(big-endian) as the 64-bit key of a Philox counter-based generator.
Streams are therefore independent of generation order and bit-identical
across runs and platforms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

MATRIX_KINDS = ("gaussian", "ternary")

# Symmetric default: -1, 0, +1 each with probability 1/3.
DEFAULT_TERNARY_ZERO_PROB = 1.0 / 3.0


def derive_seed(root: int, *tokens: int | str) -> int:
    """Derive a 64-bit stream seed from a root seed and a token path.

    The rule (SHA-256 over ``"<root>:<t1>:<t2>:..."``, first 8 bytes,
    big-endian) is part of the reproducibility contract: manifests record
    only root seeds, and every substream is recoverable from them.
    """
    msg = ":".join([str(int(root))] + [str(t) for t in tokens])
    return int.from_bytes(hashlib.sha256(msg.encode("ascii")).digest()[:8], "big")


def rng_from_seed(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=seed))


@dataclass(frozen=True)
class RandomMatrixSpec:
    """Seeded description of a frozen random matrix.

    Regenerating from an equal spec is bit-identical, which is what lets
    models store seeds instead of the matrices themselves.
    """

    rows: int
    cols: int
    kind: str
    seed: int
    scale: float = 1.0
    ternary_zero_prob: float = DEFAULT_TERNARY_ZERO_PROB

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"matrix shape must be positive, got {self.rows}x{self.cols}")
        if self.kind not in MATRIX_KINDS:
            raise ValueError(f"unknown matrix kind {self.kind!r}; expected one of {MATRIX_KINDS}")
        if not 0.0 <= self.ternary_zero_prob < 1.0:
            raise ValueError("ternary_zero_prob must be in [0, 1)")


def generate_matrix(spec: RandomMatrixSpec, dtype=np.float32) -> np.ndarray:
    """Materialize the matrix described by *spec*.

    gaussian: i.i.d. normal(0, 1) entries times ``scale``.
    ternary:  i.i.d. over {-1, 0, +1} times ``scale``; zero carries
    ``ternary_zero_prob`` mass and the remainder splits evenly.

    Sampling is always performed in float64 and then cast, so the stream
    does not depend on the requested storage dtype.
    """
    rng = rng_from_seed(spec.seed)
    shape = (spec.rows, spec.cols)
    if spec.kind == "gaussian":
        mat = rng.standard_normal(shape)
    else:
        u = rng.random(shape)
        p0 = spec.ternary_zero_prob
        mat = np.where(u < p0, 0.0, np.where(u < p0 + (1.0 - p0) / 2.0, -1.0, 1.0))
    if spec.scale != 1.0:
        mat = mat * spec.scale
    return np.asarray(mat, dtype=dtype)


def _check_same_length(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise ValueError(f"hypervector shape mismatch: {x.shape} vs {y.shape}")


def bind(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bind two hypervectors: elementwise product."""
    x = np.asarray(x)
    y = np.asarray(y)
    _check_same_length(x, y)
    return x * y


def bundle_weighted(vectors, weights) -> np.ndarray:
    """Weighted superposition: ``out[j] = sum_m weights[m] * vectors[m][j]``.

    Reduction runs in float64 regardless of storage dtype; the result is
    cast back to the common dtype of the inputs.
    """
    vectors = [np.asarray(v) for v in vectors]
    if len(vectors) == 0:
        raise ValueError("bundle_weighted requires at least one vector")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(vectors),):
        raise ValueError(f"expected {len(vectors)} weights, got shape {weights.shape}")
    for v in vectors[1:]:
        _check_same_length(vectors[0], v)
    stacked = np.stack([v.astype(np.float64, copy=False) for v in vectors])
    out = weights @ stacked
    return out.astype(np.result_type(*vectors), copy=False)


def dot(x: np.ndarray, y: np.ndarray) -> float:
    """Dot-product similarity, accumulated in 64-bit precision.

    At D ~ 1e4 a 32-bit accumulator loses digits the gradient checks
    need, so the sum is always performed in float64.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    _check_same_length(x, y)
    return float(np.dot(x.astype(np.float64, copy=False), y.astype(np.float64, copy=False)))
