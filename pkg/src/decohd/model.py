"""Decomposed classifier parameterization.

Class prototypes are never stored directly.  Each layer ``i`` holds
``L_i`` trainable low-dimensional latents that a frozen random projector
expands into channel hypervectors.  Picking one channel per layer defines
a path; binding the input with the selected channels gives the path
hypervector, and a small per-class weight matrix (the bundling head)
aggregates all ``M = prod(L_i)`` paths into class vectors.  Scores are
dot products of class vectors with the input hypervector.

Because binding is elementwise, a score depends on the input only
through its elementwise square: ``score_c(h) = <P_c, h*h>`` with
``P_c = sum_m head[c, m] * basis_m``.  That identity is what the
streaming and prototype-materialization inference regimes exploit.

Path enumeration is row-major over the per-layer channel choices (the
last layer varies fastest).  The head's column order follows this flat
enumeration and is part of the serialized model format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .encoding import RandomProjectionEncoder, Standardizer
from .ops import RandomMatrixSpec, derive_seed, generate_matrix, rng_from_seed


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of the decomposed classifier."""

    channels_per_layer: tuple[int, ...]
    latent_dim: int
    dim: int
    num_classes: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels_per_layer", tuple(int(x) for x in self.channels_per_layer))
        if len(self.channels_per_layer) < 1:
            raise ValueError("need at least one layer")
        if any(l < 1 for l in self.channels_per_layer):
            raise ValueError("every layer needs at least one channel")
        if self.latent_dim < 1 or self.dim < 1:
            raise ValueError("latent_dim and dim must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")

    @property
    def num_layers(self) -> int:
        return len(self.channels_per_layer)

    @property
    def num_paths(self) -> int:
        return math.prod(self.channels_per_layer)

    def projector_specs(self) -> list[RandomMatrixSpec]:
        """One frozen latent_dim x dim projector per layer.

        Entries are normal(0, 1/latent_dim): with unit-variance latents
        the channel entries come out O(1) independent of latent_dim.
        """
        return [
            RandomMatrixSpec(
                rows=self.latent_dim,
                cols=self.dim,
                kind="gaussian",
                seed=derive_seed(self.seed, "projector", i),
                scale=1.0 / np.sqrt(self.latent_dim),
            )
            for i in range(self.num_layers)
        ]


def materialize_projectors(config: ModelConfig, dtype=np.float32) -> list[np.ndarray]:
    return [generate_matrix(spec, dtype=dtype) for spec in config.projector_specs()]


@dataclass
class ModelParams:
    """The only trainable state: per-layer latents and the bundling head."""

    latents: list[np.ndarray]  # layer i: (L_i, latent_dim)
    head: np.ndarray  # (num_classes, num_paths)

    def copy(self) -> "ModelParams":
        return ModelParams([a.copy() for a in self.latents], self.head.copy())

    def astype(self, dtype) -> "ModelParams":
        return ModelParams([a.astype(dtype) for a in self.latents], self.head.astype(dtype))

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"latents_{i}": a for i, a in enumerate(self.latents)}
        out["head"] = self.head
        return out

    def num_trainable(self) -> int:
        return sum(a.size for a in self.latents) + self.head.size


def check_param_shapes(params: ModelParams, config: ModelConfig) -> None:
    if len(params.latents) != config.num_layers:
        raise ValueError("latent layer count does not match config")
    for i, (a, l) in enumerate(zip(params.latents, config.channels_per_layer)):
        if a.shape != (l, config.latent_dim):
            raise ValueError(f"layer {i} latents have shape {a.shape}, expected ({l}, {config.latent_dim})")
    if params.head.shape != (config.num_classes, config.num_paths):
        raise ValueError(
            f"head has shape {params.head.shape}, expected "
            f"({config.num_classes}, {config.num_paths})"
        )


def init_params(config: ModelConfig, sigma: float = 1.0, dtype=np.float64) -> ModelParams:
    """Latents i.i.d. normal(0, sigma^2); every head entry exactly 1/M."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    latents = []
    for i, l in enumerate(config.channels_per_layer):
        rng = rng_from_seed(derive_seed(config.seed, "latents", i))
        latents.append((rng.standard_normal((l, config.latent_dim)) * sigma).astype(dtype))
    head = np.full((config.num_classes, config.num_paths), 1.0 / config.num_paths, dtype=dtype)
    return ModelParams(latents=latents, head=head)


# ---------------------------------------------------------------------------
# Path enumeration (row-major, last layer fastest)


def flat_to_multi(flat: int, channels_per_layer: tuple[int, ...]) -> tuple[int, ...]:
    num_paths = math.prod(channels_per_layer)
    if not 0 <= flat < num_paths:
        raise ValueError(f"flat path index {flat} out of range [0, {num_paths})")
    return tuple(int(i) for i in np.unravel_index(flat, channels_per_layer))


def multi_to_flat(multi, channels_per_layer: tuple[int, ...]) -> int:
    multi = tuple(int(m) for m in multi)
    if len(multi) != len(channels_per_layer):
        raise ValueError("path index has wrong number of layers")
    for i, (m, l) in enumerate(zip(multi, channels_per_layer)):
        if not 0 <= m < l:
            raise ValueError(f"channel index {m} out of range for layer {i} (size {l})")
    return int(np.ravel_multi_index(multi, channels_per_layer))


def layer_index_arrays(channels_per_layer: tuple[int, ...]) -> list[np.ndarray]:
    """For each layer, the channel chosen by every flat path index."""
    num_paths = math.prod(channels_per_layer)
    grids = np.unravel_index(np.arange(num_paths), channels_per_layer)
    return [np.asarray(g) for g in grids]


# ---------------------------------------------------------------------------
# Channels and forward pass


@dataclass
class ChannelBank:
    """Materialized channel hypervectors, one (L_i, dim) block per layer."""

    channels: list[np.ndarray]

    @property
    def dim(self) -> int:
        return self.channels[0].shape[1]

    @property
    def channels_per_layer(self) -> tuple[int, ...]:
        return tuple(c.shape[0] for c in self.channels)

    @property
    def num_paths(self) -> int:
        return math.prod(self.channels_per_layer)

    def copy(self) -> "ChannelBank":
        return ChannelBank([c.copy() for c in self.channels])


def materialize_channels(params: ModelParams, projectors: list[np.ndarray]) -> ChannelBank:
    """Expand each latent through its layer's frozen projector."""
    if len(projectors) != len(params.latents):
        raise ValueError("projector count does not match latent layer count")
    channels = []
    for i, (lat, proj) in enumerate(zip(params.latents, projectors)):
        if lat.shape[1] != proj.shape[0]:
            raise ValueError(
                f"layer {i}: latent dim {lat.shape[1]} does not match projector rows {proj.shape[0]}"
            )
        channels.append(lat @ proj)
    return ChannelBank(channels)


def path_basis(bank: ChannelBank) -> np.ndarray:
    """Input-independent bound-path factors, shape (num_paths, dim).

    Row m is the binding of the channels selected by flat path m.
    """
    idx = layer_index_arrays(bank.channels_per_layer)
    basis = bank.channels[0][idx[0]].copy()
    for i in range(1, len(bank.channels)):
        basis *= bank.channels[i][idx[i]]
    return basis


def compose_path(h: np.ndarray, bank: ChannelBank, path) -> np.ndarray:
    """Bind *h* with the channel selected in every layer along *path*."""
    h = np.asarray(h)
    if h.shape != (bank.dim,):
        raise ValueError(f"hypervector shape {h.shape} does not match bank dim {bank.dim}")
    path = tuple(int(m) for m in path)
    if len(path) != len(bank.channels):
        raise ValueError("path has wrong number of layers")
    z = h.copy()
    for i, m in enumerate(path):
        if not 0 <= m < bank.channels[i].shape[0]:
            raise ValueError(f"channel index {m} out of range for layer {i}")
        z = z * bank.channels[i][m]
    return z


def class_bundle(h: np.ndarray, bank: ChannelBank, head: np.ndarray, cls: int) -> np.ndarray:
    """Weighted superposition of all path hypervectors for one class."""
    if not 0 <= cls < head.shape[0]:
        raise ValueError(f"class index {cls} out of range")
    paths = path_basis(bank) * np.asarray(h)
    return head[cls] @ paths


def logits(h: np.ndarray, bank: ChannelBank, head: np.ndarray) -> np.ndarray:
    """Per-class scores: bundle every class, then dot with *h*.

    The final reduction runs in float64 (see :func:`decohd.ops.dot`).
    """
    h = np.asarray(h)
    paths = path_basis(bank) * h
    bundles = head @ paths  # (num_classes, dim)
    return bundles.astype(np.float64, copy=False) @ h.astype(np.float64, copy=False)


def pick_class(scores: np.ndarray) -> int:
    """Argmax with deterministic rules: NaN ranks below every finite
    score, ties break toward the lowest class index."""
    scores = np.asarray(scores, dtype=np.float64)
    scores = np.where(np.isnan(scores), -np.inf, scores)
    return int(np.argmax(scores))


# ---------------------------------------------------------------------------
# End-to-end classifier (encoder + standardizer + trained parameters)


@dataclass
class DecoHDClassifier:
    """A trained decomposed classifier over raw feature vectors."""

    encoder: RandomProjectionEncoder
    standardizer: Standardizer
    config: ModelConfig
    params: ModelParams
    kind: str = "decohd"
    _bank: ChannelBank | None = field(default=None, repr=False, compare=False)

    def channel_bank(self, dtype=np.float32) -> ChannelBank:
        """Materialized channels, cached; this plus the head is the
        inference-resident state of the model."""
        if self._bank is None or self._bank.channels[0].dtype != np.dtype(dtype):
            projectors = materialize_projectors(self.config, dtype=dtype)
            self._bank = materialize_channels(self.params.astype(dtype), projectors)
        return self._bank

    def head(self, dtype=np.float32) -> np.ndarray:
        return self.params.head.astype(dtype)

    def scores_batch(self, features: np.ndarray) -> np.ndarray:
        from .inference import score_batch  # local import avoids a cycle

        h = self.encoder.encode_batch(features, self.standardizer)
        return score_batch(h, self.channel_bank(), self.head())

    def predict(self, x: np.ndarray) -> int:
        return int(self.predict_batch(np.asarray(x)[None, :])[0])

    def predict_batch(self, features: np.ndarray) -> np.ndarray:
        scores = self.scores_batch(features)
        scores = np.where(np.isnan(scores), -np.inf, scores)
        return np.argmax(scores, axis=1)
