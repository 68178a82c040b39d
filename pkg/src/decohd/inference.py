"""Inference regimes for the decomposed classifier.

Three equivalent ways to score an encoded input, trading memory for
per-sample work:

* ``score_only``: stream over paths keeping one working hypervector and
  C scalar scores (``s_c += head[c,m] * <Z_m(h), h>``); peak auxiliary
  storage is O(dim) + C scalars.
* ``streamed_bundles``: stream over paths accumulating C class bundles,
  then score; peak auxiliary storage is (C+1) hypervectors.
* ``materialized_prototypes``: precompute the C input-independent
  prototypes ``P_c = sum_m head[c,m] * basis_m`` once, then score each
  input with C dot products against ``h*h``.

All modes must agree on argmax; scores agree within float32
reassociation tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelBank, ModelParams, layer_index_arrays, materialize_channels, path_basis
from .ops import dot

INFERENCE_MODES = ("streamed_bundles", "score_only", "materialized_prototypes")

# Allocation-counting hook: score-only streaming must get by with a
# single working hypervector no matter how many paths it visits.
_hv_allocs = 0


def _alloc_hypervector(dim: int, dtype) -> np.ndarray:
    global _hv_allocs
    _hv_allocs += 1
    return np.empty(dim, dtype=dtype)


def hv_alloc_count() -> int:
    return _hv_allocs


def reset_hv_alloc_count() -> None:
    global _hv_allocs
    _hv_allocs = 0


def _check_h(h: np.ndarray, bank: ChannelBank) -> np.ndarray:
    h = np.asarray(h)
    if h.shape != (bank.dim,):
        raise ValueError(f"hypervector shape {h.shape} does not match bank dim {bank.dim}")
    return h


def stream_scores(h: np.ndarray, bank: ChannelBank, head: np.ndarray) -> np.ndarray:
    """Score-only streaming: one path hypervector alive at a time.

    The working buffer is rebound from *h* on every path; scores
    accumulate in float64.
    """
    h = _check_h(h, bank)
    idx = layer_index_arrays(bank.channels_per_layer)
    num_paths = bank.num_paths
    scores = np.zeros(head.shape[0], dtype=np.float64)
    z = _alloc_hypervector(bank.dim, np.result_type(h, bank.channels[0]))
    for m in range(num_paths):
        z[:] = h
        for i, ch in enumerate(bank.channels):
            np.multiply(z, ch[idx[i][m]], out=z)
        scores += head[:, m].astype(np.float64) * dot(z, h)
    return scores


def stream_bundles(h: np.ndarray, bank: ChannelBank, head: np.ndarray) -> np.ndarray:
    """Stream paths into per-class bundles, then score the bundles."""
    h = _check_h(h, bank)
    idx = layer_index_arrays(bank.channels_per_layer)
    num_classes = head.shape[0]
    bundles = np.zeros((num_classes, bank.dim), dtype=np.float64)
    work_dtype = np.result_type(h, bank.channels[0])
    z = np.empty(bank.dim, dtype=work_dtype)
    scaled = np.empty(bank.dim, dtype=np.float64)
    for m in range(bank.num_paths):
        z[:] = h
        for i, ch in enumerate(bank.channels):
            np.multiply(z, ch[idx[i][m]], out=z)
        for c in range(num_classes):
            np.multiply(z, float(head[c, m]), out=scaled)
            bundles[c] += scaled
    return bundles @ h.astype(np.float64, copy=False)


def materialize_prototypes(bank: ChannelBank, head: np.ndarray) -> np.ndarray:
    """Collapse the decomposition into a conventional C x dim prototype
    table; input-independent, computed once per model."""
    basis = path_basis(bank)
    protos = head.astype(np.float64, copy=False) @ basis.astype(np.float64, copy=False)
    return protos.astype(np.result_type(head, bank.channels[0]), copy=False)


def materialized_scores(h: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    """Conventional scoring against a prototype table: the input enters
    only through its elementwise square."""
    h = np.asarray(h, dtype=np.float64)
    return prototypes.astype(np.float64, copy=False) @ (h * h)


def infer_scores(h: np.ndarray, bank: ChannelBank, head: np.ndarray, mode: str) -> np.ndarray:
    if mode == "score_only":
        return stream_scores(h, bank, head)
    if mode == "streamed_bundles":
        return stream_bundles(h, bank, head)
    if mode == "materialized_prototypes":
        return materialized_scores(h, materialize_prototypes(bank, head))
    raise ValueError(f"unknown inference mode {mode!r}; expected one of {INFERENCE_MODES}")


def score_batch(h: np.ndarray, bank: ChannelBank, head: np.ndarray) -> np.ndarray:
    """Batched scoring used for evaluation, shape (n, num_classes)."""
    h = np.asarray(h)
    basis = path_basis(bank)
    with np.errstate(over="ignore", invalid="ignore"):
        t = (h * h) @ basis.T
        return t @ head.T


def predict_batch(h: np.ndarray, bank: ChannelBank, head: np.ndarray) -> np.ndarray:
    scores = score_batch(h, bank, head)
    scores = np.where(np.isnan(scores), -np.inf, scores)
    return np.argmax(scores, axis=1)


def peak_memory_estimate(mode: str, num_classes: int, dim: int, itemsize: int = 4) -> int:
    """Auxiliary inference storage in bytes, by the analytic count of
    resident floats per mode."""
    if mode == "score_only":
        floats = dim + num_classes
    elif mode == "streamed_bundles":
        floats = (num_classes + 1) * dim
    elif mode == "materialized_prototypes":
        floats = num_classes * dim
    else:
        raise ValueError(f"unknown inference mode {mode!r}; expected one of {INFERENCE_MODES}")
    return floats * itemsize


def choose_mode(num_classes: int, dim: int, memory_cap_bytes: int | None, itemsize: int = 4) -> str:
    """Prefer the prototype table when it fits the cap, else stream."""
    if memory_cap_bytes is None:
        return "materialized_prototypes"
    if num_classes * dim * itemsize <= memory_cap_bytes:
        return "materialized_prototypes"
    return "score_only"


@dataclass
class DecomposedScorer:
    """Inference-resident state of a decomposed model: the materialized
    channel bank plus the bundling head.  This is the stored form that
    fault injection targets."""

    bank: ChannelBank
    head: np.ndarray

    @classmethod
    def from_params(
        cls, params: ModelParams, projectors: list[np.ndarray], dtype=np.float32
    ) -> "DecomposedScorer":
        params = params.astype(dtype)
        projectors = [p.astype(dtype, copy=False) for p in projectors]
        return cls(bank=materialize_channels(params, projectors), head=params.head)

    def scores(self, h: np.ndarray, mode: str = "score_only") -> np.ndarray:
        return infer_scores(h, self.bank, self.head, mode)

    def score_batch(self, h: np.ndarray) -> np.ndarray:
        return score_batch(h, self.bank, self.head)

    def predict_batch(self, h: np.ndarray) -> np.ndarray:
        return predict_batch(h, self.bank, self.head)

    def param_arrays(self) -> dict[str, np.ndarray]:
        out = {f"channels_{i}": c for i, c in enumerate(self.bank.channels)}
        out["head"] = self.head
        return out

    def copy(self) -> "DecomposedScorer":
        return DecomposedScorer(bank=self.bank.copy(), head=self.head.copy())
