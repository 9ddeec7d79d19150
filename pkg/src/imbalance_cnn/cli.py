"""Command-line entry point: convert, weights, train, eval, sweep-beta, features.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.
``IMBCNN_OUTPUT_ROOT`` (if set) is prepended to relative output directories.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, features, imaging, trainer
from .dataset import Dataset, class_stats, scan_corpus, split_60_20_20, write_split_manifest, write_weights_csv
from .errors import DataError, DivergenceError, FormatError, InvalidArgument, InvalidState, ShapeError
from .imaging import MeanImage
from .nn import load_checkpoint
from .trainer import TrainConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
OUTPUT_ROOT_ENV = "IMBCNN_OUTPUT_ROOT"

log = logging.getLogger("imbalance_cnn")


class UsageError(ValueError):
    pass


def parse_beta(text):
    t = str(text).strip().lower()
    if t in ("inf", "infinity", "none"):
        return math.inf
    try:
        b = float(t)
    except ValueError:
        raise UsageError(f"invalid beta {text!r}") from None
    if not b > 0:
        raise UsageError(f"beta must be > 0, got {text}")
    return b


def beta_label(b):
    return "inf" if math.isinf(b) else f"{b:g}"


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _parse_size(text):
    parts = [p for p in str(text).replace("x", ",").split(",") if p.strip()]
    if len(parts) == 1:
        parts = parts * 2
    return tuple(int(p) for p in parts)


_CONVERTERS = {
    "learning_rate": float,
    "momentum": float,
    "weight_decay": float,
    "batch_size": int,
    "beta": parse_beta,
    "epochs": int,
    "seed": int,
    "input_size": _parse_size,
    "use_weighted_loss": _parse_bool,
    "architecture": str,
}


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONVERTERS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _CONVERTERS[key](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
    return values


def build_config(args):
    values = read_config(args.config) if getattr(args, "config", None) else {}
    for key in _CONVERTERS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if getattr(args, "weighted", None) is not None:
        values["use_weighted_loss"] = args.weighted
    try:
        return TrainConfig(**values)
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from None


def out_dir(path):
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    p.mkdir(parents=True, exist_ok=True)
    return p


def load_dataset(data_dir, input_size):
    corpus = scan_corpus(data_dir)
    return corpus, Dataset.from_corpus(corpus, input_size)


def write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def run_manifest(config, corpus, weights, artifacts):
    return {
        "toolkit_version": __version__,
        "config": config.echo(),
        "seed": config.seed,
        "corpus": corpus.fingerprint(),
        "weights": weights,
        "artifacts": {k: str(v) for k, v in artifacts.items()},
    }


# ---------------------------------------------------------------------------
# commands


def cmd_convert(args):
    table = imaging.load_width_table(args.width_table) if args.width_table else imaging.DEFAULT_WIDTH_TABLE
    src = Path(args.input)
    if not src.is_dir():
        raise DataError(f"input directory {src} does not exist")
    dest = out_dir(args.out)
    rows, failures = imaging.convert_tree(src, dest, table)
    for path, msg in failures:
        print(f"error: {path}: {msg}", file=sys.stderr)
    if not rows and not failures:
        raise DataError(f"no input files found in {src}")
    imaging.write_manifest(rows, dest / "manifest.csv")
    print(f"converted {len(rows)} file(s) into {dest}")
    return EXIT_DATA if failures else EXIT_OK


def cmd_weights(args):
    beta = parse_beta(args.beta)
    corpus = scan_corpus(args.data)
    stats = class_stats(corpus, split_60_20_20(corpus), beta)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_weights_csv(stats, fh)
    else:
        write_weights_csv(stats, sys.stdout)
    return EXIT_OK


def _train_one(config, corpus, dataset, dest, mean=None):
    result = trainer.train(config, dataset, mean)
    m = result.metrics
    paths = {
        "metrics": dest / "metrics.csv",
        "summary": dest / "summary.json",
        "checkpoint": dest / "checkpoint.bin",
        "manifest": dest / "manifest.json",
        "split": dest / "split.csv",
    }
    write_text(paths["metrics"], m.metrics_csv())
    write_text(paths["summary"], trainer.summary_json(m.summary(dataset.class_names)))
    result.checkpoint(paths["checkpoint"])
    write_split_manifest(dataset, paths["split"])
    write_text(paths["manifest"], trainer.summary_json(run_manifest(config, corpus, m.weights, paths)))
    return result


def cmd_train(args):
    config = build_config(args)
    corpus, dataset = load_dataset(args.data, config.input_size)
    dest = out_dir(args.out)
    result = _train_one(config, corpus, dataset, dest)
    m = result.metrics
    print(f"final val top-1 error {m.val_error[-1] if m.val_error else float('nan'):.4f}; "
          f"test top-1 error {m.test_report.top1_error:.4f}; artifacts in {dest}")
    return EXIT_OK


def _load_model(path):
    try:
        net, extra, arrays = load_checkpoint(path)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    mean = MeanImage(arrays["mean_image"], extra.get("mean_fingerprint", ""), extra.get("mean_count", 0))
    return net, extra, mean


def cmd_eval(args):
    net, extra, mean = _load_model(args.checkpoint)
    h, w = net.input_shape[1:]
    corpus, dataset = load_dataset(args.data, (h, w))
    k = net.output_shape[0]
    if k != dataset.K:
        raise DataError(f"checkpoint has {k} classes but corpus {args.data} has {dataset.K}")
    names = extra.get("class_names")
    if names and names != dataset.class_names:
        raise DataError(f"checkpoint classes {names} do not match corpus classes {dataset.class_names}")
    report = trainer.evaluate(net.eval(), dataset, args.split, mean)
    out = {"split": args.split, "class_names": dataset.class_names, **report.to_dict()}
    text = trainer.summary_json(out)
    if args.out:
        write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep_beta(args):
    config = build_config(args)
    betas = [parse_beta(b) for b in args.betas.split(",") if b.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not betas or not seeds:
        raise UsageError("need at least one beta and one seed")
    corpus, dataset = load_dataset(args.data, config.input_size)
    dest = out_dir(args.out)
    runs, baseline, rows = trainer.sweep_beta(config, dataset, betas, seeds)
    for (b, s), m in runs.items():
        write_text(dest / f"beta_{beta_label(b)}_seed_{s}.csv", m.metrics_csv())
    lines = ["beta,seeds,mean_val_error,std_val_error,mean_baseline_val_error,mean_delta"]
    for r in rows:
        lines.append(f"{beta_label(r['beta'])},{r['seeds']},{r['mean_val_error']!r},{r['std_val_error']!r},"
                     f"{r['mean_baseline_val_error']!r},{r['mean_delta']!r}")
    table = "\n".join(lines) + "\n"
    write_text(dest / "summary.csv", table)
    detail = {
        "config": config.echo(),
        "betas": [beta_label(b) for b in betas],
        "seeds": seeds,
        "corpus": corpus.fingerprint(),
        "baseline_val_error": {str(s): m.val_error for s, m in baseline.items()},
        "runs": {f"{beta_label(b)}/{s}": m.val_error for (b, s), m in runs.items()},
    }
    write_text(dest / "manifest.json", trainer.summary_json(detail))
    sys.stdout.write(table)
    return EXIT_OK


def cmd_features(args):
    net, extra, mean = _load_model(args.checkpoint)
    h, w = net.input_shape[1:]
    corpus = scan_corpus(args.data)
    wanted = [c.strip() for c in args.classes.split(",") if c.strip()] if args.classes else corpus.names
    unknown = [c for c in wanted if c not in corpus.names]
    if unknown:
        raise UsageError(f"unknown class(es) {unknown}; valid names: {corpus.names}")
    dest = out_dir(args.out)
    net.eval()
    rows = []
    for name in wanted:
        paths = dict(corpus.classes)[name]
        imgs = np.stack([imaging.resize(imaging.read_pgm(p), h, w).pixels for p in paths])[:, None]
        fm = features.FeatureMap(name, features.extract_features(net, imgs - mean.mean))
        safe = "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in name)
        rows.append(features.export_feature_map(fm, dest / f"{safe}.pgm"))
    features.write_feature_manifest(rows, dest / "manifest.csv")
    print(f"wrote {len(rows)} feature map(s) to {dest}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_train_flags(p):
    p.add_argument("--data", required=True, help="corpus root: <root>/<class>/*.pgm")
    p.add_argument("--config", help="flat key = value config file (flags override it)")
    p.add_argument("--seed", type=int, help="run seed (default 0)")
    p.add_argument("--epochs", type=int, help="number of epochs")
    p.add_argument("--beta", type=parse_beta, help="weight scaling parameter (default 20; 'inf' disables)")
    p.add_argument("--learning-rate", dest="learning_rate", type=float, help="default 0.0001")
    p.add_argument("--momentum", type=float, help="default 0.9")
    p.add_argument("--weight-decay", dest="weight_decay", type=float, help="default 0.0005")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="default 80")
    p.add_argument("--input-size", dest="input_size", type=_parse_size, help="HxW, e.g. 64x64")
    p.add_argument("--architecture", help="network preset (vgg_tiny, vgg_micro)")
    p.add_argument("--out", required=True, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="imbalance-cnn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert binaries to grayscale PGM images")
    p.add_argument("--in", dest="input", required=True, help="directory of binary files")
    p.add_argument("--out", required=True, help="output directory for PGMs and manifest.csv")
    p.add_argument("--width-table", help="file of '<upper KB> <width>' lines ('*' for the last bracket)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("weights", help="print per-class weights as CSV")
    p.add_argument("--data", required=True, help="corpus root")
    p.add_argument("--beta", default="20", help="scaling parameter (> 0, or 'inf')")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("train", help="train a network")
    _add_train_flags(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--weighted", dest="weighted", action="store_const", const=True, help="weighted loss (default)")
    g.add_argument("--unweighted", dest="weighted", action="store_const", const=False, help="plain softmax loss")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-beta", help="paired weighted runs over several beta values")
    _add_train_flags(p)
    p.add_argument("--betas", default="10,20,40", help="comma-separated betas; 'inf' equals the baseline")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.set_defaults(func=cmd_sweep_beta)

    p = sub.add_parser("features", help="export per-class feature-map images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--classes", help="comma-separated class names (default: all)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, FormatError, InvalidState, ShapeError, InvalidArgument, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
