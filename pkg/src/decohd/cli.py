"""Command-line surface.

Subcommands: train, eval, sweep, robustness, budget, synth.  Relative
dataset paths resolve against $DECOHD_DATA_DIR.  Exit codes: 0 success,
1 config error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .baselines import budget_of
from .budget import BudgetQuery, enumerate_configs, trainable_param_savings
from .data import ParseError, load_csv, make_synthetic, save_csv
from .encoding import fit_standardizer
from .experiment import (
    ConfigError,
    DataSpec,
    ExperimentConfig,
    ModelSpec,
    build_encoder,
    fit_model,
    load_config,
    run_experiment,
    write_csv,
)
from .faults import robustness_sweep
from .inference import DecomposedScorer, choose_mode, infer_scores, peak_memory_estimate
from .model import DecoHDClassifier, materialize_projectors
from .precision import get_format, quantize_array, quantize_model
from .serialize import load_classifier, save_classifier
from .training import TrainConfig, TrainingDiverged


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _load_pair(train_csv: str, test_csv: str):
    train_ds = load_csv(train_csv, split="train")
    test_ds = load_csv(test_csv, split="test", num_classes=train_ds.num_classes)
    return train_ds, test_ds


def cmd_train(args) -> int:
    train_ds, test_ds = _load_pair(args.train_csv, args.test_csv)
    config = ExperimentConfig(
        name=args.name,
        root_seed=args.seed,
        data=DataSpec(name=train_ds.name, train_csv=args.train_csv, test_csv=args.test_csv),
        models=(
            ModelSpec(
                kind=args.model,
                channels=tuple(_int_list(args.channels)),
                latent_dim=args.latent_dim,
                epochs=args.refine_epochs,
                budget=args.sparse_budget,
            ),
        ),
        train=TrainConfig(
            learning_rate=args.learning_rate,
            weight_decay=args.weight_decay,
            epochs=args.epochs,
            batch_size=args.batch_size,
            microbatch_size=args.microbatch_size,
        ),
        dims=(args.dim,),
        encoder_kind=args.encoder,
    )
    standardizer = fit_standardizer(train_ds.features)
    encoder = build_encoder(config, train_ds.num_features, args.dim)
    h_train = encoder.encode_batch(train_ds.features, standardizer)
    h_test = encoder.encode_batch(test_ds.features, standardizer)
    clf, scorer, history = fit_model(
        config.models[0], args.model, config, encoder, standardizer,
        h_train, train_ds.labels, h_test, test_ds.labels, train_ds.num_classes,
    )
    save_classifier(args.output, clf)
    if history:
        hist_path = os.path.splitext(args.output)[0] + "_history.csv"
        write_csv(
            hist_path,
            ["epoch", "mean_loss", "train_accuracy", "test_accuracy", "wall_seconds"],
            [[h.epoch, h.mean_loss, h.train_accuracy, h.test_accuracy, h.wall_seconds] for h in history],
        )
        print(f"history written to {hist_path}")
    acc = float((scorer.predict_batch(h_test) == test_ds.labels).mean())
    print(f"model={args.model} D={args.dim} m_budget={budget_of(scorer):.4f} test_accuracy={acc:.4f}")
    print(f"saved {args.output}")
    return 0


def _deployed(clf):
    if isinstance(clf, DecoHDClassifier):
        return DecomposedScorer.from_params(
            clf.params, materialize_projectors(clf.config, dtype=np.float32)
        )
    if hasattr(clf, "table"):
        return clf.table
    return clf.scorer


def cmd_eval(args) -> int:
    clf = load_classifier(args.model)
    test_ds = load_csv(args.test_csv, split="test")
    h = clf.encoder.encode_batch(test_ds.features, clf.standardizer)
    scorer = _deployed(clf)
    if args.precision != "fp32":
        fmt = get_format(args.precision)
        scorer = quantize_model(scorer, fmt)
        h = quantize_array(h, fmt)
    mode = args.mode
    if isinstance(scorer, DecomposedScorer):
        num_classes = scorer.head.shape[0]
        dim = scorer.bank.dim
        if mode == "auto":
            mode = choose_mode(num_classes, dim, args.memory_cap_bytes)
        print(f"inference mode: {mode} "
              f"(aux memory ~{peak_memory_estimate(mode, num_classes, dim)} bytes)")
        scores = np.stack([infer_scores(hv, scorer.bank, scorer.head, mode) for hv in h])
        scores = np.where(np.isnan(scores), -np.inf, scores)
        pred = np.argmax(scores, axis=1)
    else:
        pred = scorer.predict_batch(h)
    acc = float((pred == test_ds.labels).mean())
    print(f"model={clf.kind} n={test_ds.num_samples} precision={args.precision} accuracy={acc:.4f}")
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    result = run_experiment(config, output_dir=args.output_dir)
    print(f"results written to {result.results_csv}")
    print(f"manifest written to {result.manifest_path}")
    return 0


def cmd_robustness(args) -> int:
    test_ds = load_csv(args.test_csv, split="test")
    scorers = {}
    encoder_key = None
    h = None
    for path in args.models:
        clf = load_classifier(path)
        key = (clf.encoder.config.seed, clf.encoder.config.dim)
        if encoder_key is None:
            encoder_key = key
            h = clf.encoder.encode_batch(test_ds.features, clf.standardizer)
        elif key != encoder_key:
            raise ConfigError("robustness comparisons require models sharing one encoder")
        scorers[os.path.splitext(os.path.basename(path))[0]] = _deployed(clf)
    rows = robustness_sweep(scorers, h, test_ds.labels, _float_list(args.p_grid), args.trials, args.seed)
    write_csv(
        args.output,
        ["model_kind", "p_flip", "trial", "test_accuracy"],
        [[r["model_kind"], r["p_flip"], r["trial"], r["test_accuracy"]] for r in rows],
    )
    print(f"robustness curves written to {args.output}")
    return 0


def cmd_budget(args) -> int:
    query = BudgetQuery(
        m_target=args.m,
        num_classes=args.classes,
        dim=args.dim,
        max_channels=args.max_channels,
        layer_counts=tuple(_int_list(args.layers)),
        latent_dims=tuple(_int_list(args.d)),
    )
    reports = enumerate_configs(query)
    header = ["layers", "channels", "latent_dim", "num_paths", "footprint", "trainable_params", "savings"]
    rows = []
    for r in reports:
        rows.append([
            r.num_layers,
            "x".join(str(c) for c in r.channels_per_layer),
            r.latent_dim,
            r.num_paths,
            r.footprint,
            r.trainable_params,
            trainable_param_savings(r.channels_per_layer, r.latent_dim, args.classes, args.dim),
        ])
    print(f"{len(rows)} configurations with footprint <= {args.m} (C={args.classes}, D={args.dim})")
    print(" ".join(f"{h:>16}" for h in header))
    for row in rows[: args.top]:
        print(" ".join(f"{v:>16.6g}" if isinstance(v, float) else f"{v!s:>16}" for v in row))
    if args.output:
        write_csv(args.output, header, rows)
        print(f"full table written to {args.output}")
    return 0


def cmd_synth(args) -> int:
    train_ds, test_ds = make_synthetic(
        args.classes, args.features, args.per_class, args.separation, seed=args.seed
    )
    save_csv(args.train_out, train_ds)
    save_csv(args.test_out, test_ds)
    print(f"wrote {train_ds.num_samples} train rows to {args.train_out}")
    print(f"wrote {test_ds.num_samples} test rows to {args.test_out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decohd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and save its container")
    p.add_argument("--train-csv", required=True)
    p.add_argument("--test-csv", required=True)
    p.add_argument("--model", default="decohd", choices=["decohd", "prototype", "onlinehd", "sparsehd"])
    p.add_argument("--output", required=True, help="model container path (.npz)")
    p.add_argument("--name", default="run")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=10000)
    p.add_argument("--encoder", default="gaussian", choices=["gaussian", "ternary"])
    p.add_argument("--channels", default="10", help="per-layer channel counts, e.g. 3,3")
    p.add_argument("--latent-dim", type=int, default=4096)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--microbatch-size", type=int, default=128)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=5e-5)
    p.add_argument("--refine-epochs", type=int, default=200)
    p.add_argument("--sparse-budget", type=float, default=0.5)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a test CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--test-csv", required=True)
    p.add_argument("--precision", default="fp32")
    p.add_argument("--mode", default="auto",
                   choices=["auto", "score_only", "streamed_bundles", "materialized_prototypes"])
    p.add_argument("--memory-cap-bytes", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a full experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("robustness", help="bit-flip robustness curves for saved models")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--test-csv", required=True)
    p.add_argument("--p-grid", default="0,1e-7,1e-6,1e-5,1e-4,1e-3")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="robustness.csv")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("budget", help="enumerate configurations under a memory budget")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--d", default="4096", help="latent-dim options, e.g. 256,1024,4096")
    p.add_argument("--layers", default="1,2,3")
    p.add_argument("--max-channels", type=int, default=5)
    p.add_argument("--top", type=int, default=20, help="rows printed to stdout")
    p.add_argument("--output", default=None, help="optional CSV path")
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("synth", help="generate a synthetic blob dataset")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--features", type=int, default=16)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-out", default="synthetic_train.csv")
    p.add_argument("--test-out", default="synthetic_test.csv")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ParseError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
