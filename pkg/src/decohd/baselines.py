"""Comparison models sharing the decomposed model's encoder.

* prototype table: one dense hypervector per class, built by class-wise
  summation of the encoded training set;
* online refinement: sequential similarity-weighted updates of the table
  on misclassified samples;
* sparse masking: a matched-budget feature-axis reduction that keeps the
  top dimensions by aggregate prototype magnitude (a stand-in for
  retraining-based sparsification methods, hence "sparsehd-style" in all
  outputs).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .budget import footprint
from .encoding import RandomProjectionEncoder, Standardizer
from .model import DecoHDClassifier, ModelConfig


@dataclass
class PrototypeTable:
    """Dense class prototypes, shape (num_classes, dim)."""

    prototypes: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]

    def score_batch(self, h: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            return np.asarray(h) @ self.prototypes.T

    def predict_batch(self, h: np.ndarray) -> np.ndarray:
        scores = self.score_batch(h)
        scores = np.where(np.isnan(scores), -np.inf, scores)
        return np.argmax(scores, axis=1)

    def copy(self) -> "PrototypeTable":
        return PrototypeTable(self.prototypes.copy())


def build_prototype_table(h: np.ndarray, labels: np.ndarray, num_classes: int) -> PrototypeTable:
    """Class-wise summation of encoded hypervectors.

    Accumulates in float64, stores in the input dtype.  A class with no
    samples keeps a zero prototype and triggers a warning.
    """
    h = np.asarray(h)
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or (len(labels) and labels.max() >= num_classes):
        raise ValueError("labels out of range for num_classes")
    table = np.zeros((num_classes, h.shape[1]), dtype=np.float64)
    np.add.at(table, labels, h.astype(np.float64, copy=False))
    counts = np.bincount(labels, minlength=num_classes)
    for c in np.nonzero(counts == 0)[0]:
        warnings.warn(f"class {c} has no training samples; prototype left at zero")
    return PrototypeTable(table.astype(h.dtype, copy=False))


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b)) / (na * nb)


def onlinehd_refine(
    table: PrototypeTable,
    h: np.ndarray,
    labels: np.ndarray,
    epochs: int = 200,
    learning_rate: float = 0.1,
    seed: int = 0,
) -> PrototypeTable:
    """Sequential per-sample refinement of a prototype table.

    For each sample (shuffled every epoch), if the dot-product prediction
    is wrong, pull the true class's prototype toward the sample and push
    the predicted one away, each weighted by (1 - cosine similarity).
    With learning_rate 0 this is the identity.
    """
    from .ops import derive_seed, rng_from_seed

    h = np.asarray(h, dtype=np.float64)
    labels = np.asarray(labels)
    protos = table.prototypes.astype(np.float64)
    n = h.shape[0]
    for epoch in range(epochs):
        order = rng_from_seed(derive_seed(seed, "refine", epoch)).permutation(n)
        for j in order:
            hv = h[j]
            y = int(labels[j])
            scores = protos @ hv
            pred = int(np.argmax(np.where(np.isnan(scores), -np.inf, scores)))
            if pred == y:
                continue
            protos[y] += learning_rate * (1.0 - _cosine(protos[y], hv)) * hv
            protos[pred] -= learning_rate * (1.0 - _cosine(protos[pred], hv)) * hv
    return PrototypeTable(protos.astype(table.prototypes.dtype, copy=False))


@dataclass
class SparseScorer:
    """Prototype table restricted to a shared subset of dimensions.

    Only the retained columns count as stored parameters; scoring uses
    masked dot products.
    """

    prototypes: np.ndarray
    mask: np.ndarray  # bool, shape (dim,)
    budget: float

    def __post_init__(self):
        self.masked = self.prototypes * self.mask

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]

    @property
    def retained(self) -> int:
        return int(self.mask.sum())

    def score_batch(self, h: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            return np.asarray(h) @ self.masked.T

    def predict_batch(self, h: np.ndarray) -> np.ndarray:
        scores = self.score_batch(h)
        scores = np.where(np.isnan(scores), -np.inf, scores)
        return np.argmax(scores, axis=1)

    def copy(self) -> "SparseScorer":
        return SparseScorer(self.prototypes.copy(), self.mask.copy(), self.budget)


def sparsify_table(table: PrototypeTable, budget: float) -> SparseScorer:
    """Keep the top floor(budget * dim) dimensions by summed |prototype|
    magnitude across classes; the mask is shared by all classes.

    Ties break toward the lower dimension index, so the mask is a pure
    function of the table.
    """
    if not 0.0 < budget <= 1.0:
        raise ValueError("budget must be in (0, 1]")
    keep = int(np.floor(budget * table.dim))
    if keep < 1:
        raise ValueError(f"budget {budget} retains zero of {table.dim} dimensions")
    magnitude = np.abs(table.prototypes.astype(np.float64)).sum(axis=0)
    order = np.argsort(-magnitude, kind="stable")
    mask = np.zeros(table.dim, dtype=bool)
    mask[order[:keep]] = True
    return SparseScorer(prototypes=table.prototypes.copy(), mask=mask, budget=budget)


def budget_of(model) -> float:
    """Normalized memory footprint relative to a dense C x dim table."""
    from .inference import DecomposedScorer

    if isinstance(model, ModelConfig):
        return footprint(model.num_classes, model.dim, model.channels_per_layer)
    if isinstance(model, DecoHDClassifier):
        return budget_of(model.config)
    if isinstance(model, DecomposedScorer):
        return footprint(model.head.shape[0], model.bank.dim, model.bank.channels_per_layer)
    if isinstance(model, SparseScorer):
        return model.retained / model.dim
    if isinstance(model, PrototypeTable):
        return 1.0
    raise TypeError(f"cannot compute a budget for {type(model).__name__}")


@dataclass
class PrototypeClassifier:
    """End-to-end baseline classifier over raw features."""

    encoder: RandomProjectionEncoder
    standardizer: Standardizer
    table: PrototypeTable
    kind: str = "prototype"  # "prototype" or "onlinehd"

    def predict_batch(self, features: np.ndarray) -> np.ndarray:
        h = self.encoder.encode_batch(features, self.standardizer)
        return self.table.predict_batch(h)


@dataclass
class SparseClassifier:
    encoder: RandomProjectionEncoder
    standardizer: Standardizer
    scorer: SparseScorer
    kind: str = "sparsehd"

    def predict_batch(self, features: np.ndarray) -> np.ndarray:
        h = self.encoder.encode_batch(features, self.standardizer)
        return self.scorer.predict_batch(h)
