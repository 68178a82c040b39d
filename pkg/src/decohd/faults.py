"""Random bit-flip fault injection into 32-bit float parameters.

Each bit of each targeted float32 word flips independently with the
configured probability, from a seeded stream derived per parameter
array, so a given NoiseSpec always produces the same corrupted model.
Flips can produce NaN/Inf values; those are kept as stored, and scoring
treats NaN logits as minus infinity.

Targets are stored model parameters (the deployed inference state): for
a decomposed model the materialized channel bank plus the bundling head,
for baselines the prototype table (only the retained columns of a
sparsified table, since masked-out entries are not stored).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import PrototypeTable, SparseScorer
from .inference import DecomposedScorer
from .model import ChannelBank, ModelParams
from .ops import derive_seed, rng_from_seed


@dataclass(frozen=True)
class NoiseSpec:
    flip_probability: float
    seed: int = 0
    target: str = "model_parameters"

    def __post_init__(self):
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError("flip_probability must be in [0, 1]")
        if self.target != "model_parameters":
            raise ValueError(f"unsupported bit-flip target {self.target!r}")


def flip_float32_bits(a: np.ndarray, flip_probability: float, seed: int) -> np.ndarray:
    """Flip each of the 32 bits of each element independently."""
    a = np.asarray(a)
    if a.dtype != np.float32:
        raise TypeError(f"bit flips are defined on float32 storage, got {a.dtype}")
    bits = np.ascontiguousarray(a).view(np.uint32).reshape(-1)
    rng = rng_from_seed(seed)
    mask = np.zeros(bits.shape, dtype=np.uint32)
    for k in range(32):
        mask |= (rng.random(bits.shape[0]) < flip_probability).astype(np.uint32) << np.uint32(k)
    return (bits ^ mask).view(np.float32).reshape(a.shape).copy()


def count_bit_differences(a: np.ndarray, b: np.ndarray) -> int:
    """Number of differing bits between two float32 arrays."""
    ab = np.ascontiguousarray(a, dtype=np.float32).view(np.uint8)
    bb = np.ascontiguousarray(b, dtype=np.float32).view(np.uint8)
    return int(np.unpackbits(ab ^ bb).sum())


def inject_bitflips(model, spec: NoiseSpec):
    """Corrupt every stored float32 parameter array; returns the same
    type with fresh arrays.  p=0 is a bit-exact identity and p=1 inverts
    every bit (so applying it twice restores the model)."""
    p = spec.flip_probability

    def sub(*tokens):
        return derive_seed(spec.seed, "bits", *tokens)

    if isinstance(model, np.ndarray):
        return flip_float32_bits(model, p, sub("array"))
    if isinstance(model, ModelParams):
        return ModelParams(
            latents=[flip_float32_bits(a, p, sub("latents", i)) for i, a in enumerate(model.latents)],
            head=flip_float32_bits(model.head, p, sub("head")),
        )
    if isinstance(model, ChannelBank):
        return ChannelBank(
            [flip_float32_bits(c, p, sub("channels", i)) for i, c in enumerate(model.channels)]
        )
    if isinstance(model, DecomposedScorer):
        return DecomposedScorer(
            bank=ChannelBank(
                [
                    flip_float32_bits(c, p, sub("channels", i))
                    for i, c in enumerate(model.bank.channels)
                ]
            ),
            head=flip_float32_bits(model.head, p, sub("head")),
        )
    if isinstance(model, PrototypeTable):
        return PrototypeTable(flip_float32_bits(model.prototypes, p, sub("table")))
    if isinstance(model, SparseScorer):
        # Only retained entries are stored, so only they can be hit.
        protos = model.prototypes.copy()
        retained = np.ascontiguousarray(protos[:, model.mask])
        protos[:, model.mask] = flip_float32_bits(retained, p, sub("table"))
        return SparseScorer(prototypes=protos, mask=model.mask.copy(), budget=model.budget)
    raise TypeError(f"cannot inject bit flips into {type(model).__name__}")


def robustness_sweep(
    scorers: dict[str, object],
    h_test: np.ndarray,
    y_test: np.ndarray,
    p_grid,
    trials: int,
    seed: int = 0,
) -> list[dict]:
    """Accuracy-under-noise curves for several models on one test set.

    Every (p, trial) cell owns an independent stream derived from
    (seed, p index, trial index); all models in a cell share that stream
    root.  Returns one row per (model, p, trial), sorted.
    """
    y_test = np.asarray(y_test)
    rows = []
    for p_idx, p in enumerate(p_grid):
        for trial in range(trials):
            cell_seed = derive_seed(seed, "noise", p_idx, trial)
            for name in sorted(scorers):
                corrupted = inject_bitflips(scorers[name], NoiseSpec(p, seed=cell_seed))
                pred = corrupted.predict_batch(h_test)
                rows.append(
                    {
                        "model_kind": name,
                        "p_flip": float(p),
                        "trial": trial,
                        "test_accuracy": float((pred == y_test).mean()),
                    }
                )
    rows.sort(key=lambda r: (r["model_kind"], r["p_flip"], r["trial"]))
    return rows
