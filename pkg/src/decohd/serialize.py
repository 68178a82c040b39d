"""Model containers: deterministic npz files.

A container holds a JSON metadata record plus the stored parameter
arrays.  Frozen random matrices are never written; only their seeds and
shapes travel (inside the encoder/model configs), and the matrices are
regenerated on load.  Round-trips are bit-exact, and writing the same
model twice produces byte-identical files (entries are stored
uncompressed, sorted, with zeroed zip timestamps).
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict

import numpy as np

from .baselines import PrototypeClassifier, PrototypeTable, SparseClassifier, SparseScorer
from .encoding import EncoderConfig, RandomProjectionEncoder, Standardizer
from .model import DecoHDClassifier, ModelConfig, ModelParams

FORMAT_VERSION = 1


def save_arrays(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write a deterministic npz: same content, same bytes."""
    meta_json = json.dumps(meta, sort_keys=True)
    entries = dict(arrays)
    entries["__meta__"] = np.array(meta_json)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(entries):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(entries[name]), version=(1, 0))
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def load_arrays(path) -> tuple[dict, dict[str, np.ndarray]]:
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files if k != "__meta__"}
        meta = json.loads(str(data["__meta__"]))
    return meta, arrays


def _encoder_meta(enc: RandomProjectionEncoder) -> dict:
    return asdict(enc.config)


def _encoder_from_meta(meta: dict) -> RandomProjectionEncoder:
    return RandomProjectionEncoder(EncoderConfig(**meta))


def save_classifier(path, clf) -> None:
    """Serialize any supported classifier, tagged by model kind."""
    meta = {"format_version": FORMAT_VERSION, "kind": clf.kind, "encoder": _encoder_meta(clf.encoder)}
    arrays = {
        "standardizer_mean": clf.standardizer.mean,
        "standardizer_std": clf.standardizer.std,
    }
    if isinstance(clf, DecoHDClassifier):
        meta["model"] = asdict(clf.config)
        for i, a in enumerate(clf.params.latents):
            arrays[f"latents_{i}"] = a
        arrays["head"] = clf.params.head
    elif isinstance(clf, PrototypeClassifier):
        arrays["table"] = clf.table.prototypes
    elif isinstance(clf, SparseClassifier):
        meta["budget"] = clf.scorer.budget
        arrays["table"] = clf.scorer.prototypes
        arrays["mask"] = clf.scorer.mask
    else:
        raise TypeError(f"cannot serialize {type(clf).__name__}")
    save_arrays(path, meta, arrays)


def load_classifier(path):
    meta, arrays = load_arrays(path)
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported container version {meta.get('format_version')}")
    encoder = _encoder_from_meta(meta["encoder"])
    standardizer = Standardizer(mean=arrays["standardizer_mean"], std=arrays["standardizer_std"])
    kind = meta["kind"]
    if kind == "decohd":
        model_meta = dict(meta["model"])
        model_meta["channels_per_layer"] = tuple(model_meta["channels_per_layer"])
        config = ModelConfig(**model_meta)
        params = ModelParams(
            latents=[arrays[f"latents_{i}"] for i in range(config.num_layers)],
            head=arrays["head"],
        )
        return DecoHDClassifier(encoder=encoder, standardizer=standardizer, config=config, params=params)
    if kind in ("prototype", "onlinehd"):
        return PrototypeClassifier(
            encoder=encoder, standardizer=standardizer, table=PrototypeTable(arrays["table"]), kind=kind
        )
    if kind == "sparsehd":
        scorer = SparseScorer(prototypes=arrays["table"], mask=arrays["mask"], budget=float(meta["budget"]))
        return SparseClassifier(encoder=encoder, standardizer=standardizer, scorer=scorer)
    raise ValueError(f"unknown model kind {kind!r} in container")
