"""SGD-with-momentum training, top-1 evaluation, and weighted-vs-plain comparisons."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import nn
from .errors import DivergenceError, InvalidArgument, InvalidState, ShapeError
from .imaging import MeanImage, compute_mean_image
from .loss import DEFAULT_BETA, class_weights, softmax_loss, weighted_softmax_loss
from .nn import LayerSpec, Network

log = logging.getLogger(__name__)

PRESETS = {
    # name: (conv widths, fully connected hidden widths)
    "vgg_tiny": ((16, 32, 64), (256, 128)),
    "vgg_micro": ((2, 3, 4), (8, 6)),
}


@dataclass
class TrainConfig:
    learning_rate: float = 0.0001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 80
    beta: float = DEFAULT_BETA
    epochs: int = 10
    seed: int = 0
    input_size: tuple = (64, 64)
    use_weighted_loss: bool = True
    architecture: str = "vgg_tiny"

    def __post_init__(self):
        self.input_size = tuple(int(v) for v in self.input_size)
        if self.learning_rate < 0 or self.momentum < 0 or self.weight_decay < 0:
            raise InvalidArgument("learning_rate, momentum and weight_decay must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise InvalidArgument("batch_size must be >= 1 and epochs >= 0")
        if not self.beta > 0:
            raise InvalidArgument(f"beta must be > 0, got {self.beta}")
        if self.architecture not in PRESETS:
            raise InvalidArgument(f"unknown architecture {self.architecture!r}; choose from {sorted(PRESETS)}")

    def echo(self):
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        if math.isinf(self.beta):
            d["beta"] = "inf"
        return d


def vgg_specs(conv_widths, fc_widths, num_classes, dropout=0.5):
    """Layer list: 3x3 conv blocks with BN after every conv except the first,
    2x2 pooling after each block, then FC layers separated by ReLU + dropout."""
    specs = []
    for i, c in enumerate(conv_widths):
        specs.append(LayerSpec("conv3x3", units=c))
        if i > 0:
            specs.append(LayerSpec("batchnorm"))
        specs.append(LayerSpec("relu"))
        specs.append(LayerSpec("maxpool2x2"))
    for u in fc_widths:
        specs += [LayerSpec("fully_connected", units=u), LayerSpec("relu"), LayerSpec("dropout", p=dropout)]
    specs.append(LayerSpec("fully_connected", units=num_classes))
    return specs


def build_preset(name, num_classes, input_size, seed=0, channels=1):
    if name not in PRESETS:
        raise InvalidArgument(f"unknown preset {name!r}")
    convs, fcs = PRESETS[name]
    h, w = input_size
    div = 2 ** len(convs)
    if h % div or w % div:
        raise InvalidArgument(f"input size {h}x{w} must be divisible by {div} for preset {name!r}")
    if num_classes < 1:
        raise InvalidArgument("num_classes must be >= 1")
    return Network(vgg_specs(convs, fcs, num_classes), (channels, h, w), seed=seed).train()


def sgd_step(net, grads, config, velocity):
    """Classical momentum with L2 decay on conv/FC weights only.

    ``v <- momentum * v - lr * (g + decay * theta)``; ``theta <- theta + v``.
    ``velocity`` is a dict updated in place (missing entries start at zero).
    """
    for key, layer, name, theta in net.named_params():
        g = grads[key]
        if g.shape != theta.shape:
            raise ShapeError(f"gradient {key} has shape {g.shape}, parameter {theta.shape}")
        if (layer.spec.kind, name) in nn.DECAYED and config.weight_decay:
            g = g + config.weight_decay * theta
        v = velocity.get(key)
        if v is None:
            v = velocity[key] = np.zeros_like(theta)
        v *= config.momentum
        v -= config.learning_rate * g
        theta += v
    return net


@dataclass
class EvalReport:
    top1_error: float
    accuracy: float
    recall: list
    confusion: list  # rows: true class, columns: predicted class

    def to_dict(self):
        return asdict(self)


def predict(net, x, batch_size=256):
    prev = net.mode
    net.eval()
    try:
        out = [net.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
    finally:
        net.mode = prev
    return np.concatenate(out) if out else np.zeros((0,) + net.output_shape)


def evaluate_predictions(pred, labels, num_classes):
    """Top-1 error, per-class recall and confusion from predicted/true labels (1..K)."""
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size == 0:
        raise InvalidState("cannot evaluate an empty split")
    pred = np.asarray(pred, dtype=np.intp)
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(conf, (labels - 1, pred - 1), 1)
    support = conf.sum(axis=1)
    recall = [float(conf[k, k] / support[k]) if support[k] else None for k in range(num_classes)]
    err = float(np.count_nonzero(pred != labels) / labels.size)
    return EvalReport(err, 1.0 - err, recall, conf.tolist())


def evaluate(net, dataset, which, mean):
    idx = dataset.indices(which)
    if idx.size == 0:
        raise InvalidState(f"split {which!r} is empty")
    m = mean.mean if isinstance(mean, MeanImage) else np.asarray(mean)
    logits = predict(net, dataset.images[idx] - m)
    return evaluate_predictions(logits.argmax(axis=1) + 1, dataset.labels[idx], dataset.K)


@dataclass
class RunMetrics:
    config: dict
    weights: list
    train_loss: list = field(default_factory=list)
    val_error: list = field(default_factory=list)
    val_report: EvalReport = None
    test_report: EvalReport = None

    def metrics_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_top1_error"])
        for i, (l, e) in enumerate(zip(self.train_loss, self.val_error), start=1):
            w.writerow([i, repr(l), repr(e)])
        return buf.getvalue()

    def summary(self, class_names=None):
        return {
            "config": self.config,
            "class_names": class_names,
            "weights": self.weights,
            "final_val_top1_error": self.val_error[-1] if self.val_error else None,
            "val_recall": self.val_report.recall if self.val_report else None,
            "test_top1_error": self.test_report.top1_error if self.test_report else None,
            "test_accuracy": self.test_report.accuracy if self.test_report else None,
            "test_recall": self.test_report.recall if self.test_report else None,
            "test_confusion": self.test_report.confusion if self.test_report else None,
        }


@dataclass
class TrainResult:
    metrics: RunMetrics
    net: Network
    mean: object
    class_names: list

    def checkpoint(self, path=None):
        extra = {"class_names": self.class_names, "config": self.metrics.config,
                 "weights": self.metrics.weights, "mean_fingerprint": self.mean.fingerprint,
                 "mean_count": self.mean.count}
        return nn.save_checkpoint(self.net, path, extra=extra, extra_arrays={"mean_image": self.mean.mean})


def _batches_for(train_idx, config, epoch, needs_pairs):
    from .dataset import make_batches

    batches = make_batches(train_idx, config.batch_size, config.seed, epoch)
    # batchnorm cannot normalise a lone sample: fold it into the previous batch
    if needs_pairs and len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


def train(config, dataset, mean=None, on_epoch=None):
    """Train a fresh preset network on ``dataset``'s training split.

    Validation top-1 error is measured after every epoch in eval mode; the
    test split is evaluated once at the end.
    """
    train_idx = dataset.indices("train")
    if mean is None:
        mean = compute_mean_image(dataset.images, train_idx)
    x = dataset.images - mean.mean
    y = dataset.labels
    net = build_preset(config.architecture, dataset.K, config.input_size, seed=config.seed,
                       channels=dataset.images.shape[1])
    weights = class_weights(dataset.train_sizes(), config.beta) if config.use_weighted_loss else None
    metrics = RunMetrics(config.echo(), None if weights is None else weights.tolist())
    needs_pairs = any(s.kind == "batchnorm" for s in net.specs)
    velocity = {}
    for epoch in range(config.epochs):
        net.train()
        losses = []
        for b, batch in enumerate(_batches_for(train_idx, config, epoch, needs_pairs)):
            logits = net.forward(x[batch])
            if not np.all(np.isfinite(logits)):
                raise DivergenceError(epoch + 1, b + 1, float("nan"))
            if weights is None:
                out = softmax_loss(logits, y[batch])
            else:
                out = weighted_softmax_loss(logits, y[batch], weights)
            if not math.isfinite(out.loss):
                raise DivergenceError(epoch + 1, b + 1, out.loss)
            net.backward(out.grad_logits)
            sgd_step(net, net.gradients(), config, velocity)
            losses.append(out.loss)
        metrics.train_loss.append(float(np.mean(losses)))
        metrics.val_report = evaluate(net, dataset, "val", mean)
        metrics.val_error.append(metrics.val_report.top1_error)
        log.info("epoch %d loss %.6f val_err %.4f", epoch + 1, metrics.train_loss[-1], metrics.val_error[-1])
        if on_epoch is not None:
            on_epoch(epoch + 1, metrics)
    if metrics.val_report is None:
        metrics.val_report = evaluate(net, dataset, "val", mean)
    metrics.test_report = evaluate(net, dataset, "test", mean)
    net.eval()
    return TrainResult(metrics, net, mean, list(dataset.class_names))


def minority_classes(dataset, count=2):
    """Labels (1..K) of the ``count`` smallest classes by training size."""
    sizes = np.asarray(dataset.train_sizes())
    return [int(k) + 1 for k in np.argsort(sizes, kind="stable")[:count]]


def _arm_summary(runs, minority):
    final = np.array([r.val_error[-1] for r in runs])
    mrec = np.array([np.mean([r.val_report.recall[k - 1] for k in minority]) for r in runs])
    return {
        "final_val_error_mean": float(final.mean()),
        "final_val_error_std": float(final.std()),
        "minority_recall_mean": float(mrec.mean()),
        "minority_recall_std": float(mrec.std()),
        "final_val_error": final.tolist(),
        "minority_recall": mrec.tolist(),
    }


def compare_losses(config, dataset, n_seeds=1, seeds=None):
    """Paired weighted/unweighted runs sharing seed, init and batch order."""
    if seeds is None:
        if n_seeds < 1:
            raise InvalidArgument("n_seeds must be >= 1")
        seeds = [config.seed + i for i in range(n_seeds)]
    minority = minority_classes(dataset)
    mean = compute_mean_image(dataset.images, dataset.indices("train"))
    arms = {"weighted": [], "unweighted": []}
    for s in seeds:
        for arm, flag in (("weighted", True), ("unweighted", False)):
            cfg = replace(config, seed=s, use_weighted_loss=flag)
            arms[arm].append(train(cfg, dataset, mean).metrics)
    summary = {arm: _arm_summary(runs, minority) for arm, runs in arms.items()}
    summary["seeds"] = list(seeds)
    summary["minority_classes"] = [dataset.class_names[k - 1] for k in minority]
    summary["paired_val_error_delta"] = [
        w.val_error[-1] - u.val_error[-1] for w, u in zip(arms["weighted"], arms["unweighted"])]
    summary["paired_minority_recall_delta"] = [
        a - b for a, b in zip(summary["weighted"]["minority_recall"], summary["unweighted"]["minority_recall"])]
    return arms, summary


def sweep_beta(config, dataset, betas, seeds):
    """One weighted run per (beta, seed) plus one unweighted baseline per seed."""
    if not betas or not seeds:
        raise InvalidArgument("sweep needs at least one beta and one seed")
    mean = compute_mean_image(dataset.images, dataset.indices("train"))
    baseline = {s: train(replace(config, seed=s, use_weighted_loss=False), dataset, mean).metrics
                for s in seeds}
    runs = {}
    for b in betas:
        for s in seeds:
            runs[(b, s)] = train(replace(config, seed=s, beta=b, use_weighted_loss=True), dataset, mean).metrics
    rows = []
    for b in betas:
        errs = np.array([runs[(b, s)].val_error[-1] for s in seeds])
        base = np.array([baseline[s].val_error[-1] for s in seeds])
        rows.append({
            "beta": b,
            "seeds": len(seeds),
            "mean_val_error": float(errs.mean()),
            "std_val_error": float(errs.std()),
            "mean_baseline_val_error": float(base.mean()),
            "mean_delta": float((errs - base).mean()),
        })
    return runs, baseline, rows


def summary_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=False) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def config_fields():
    return {f.name: f for f in fields(TrainConfig)}
