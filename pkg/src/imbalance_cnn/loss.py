"""Softmax, cross-entropy and the class-size-weighted softmax loss.

Labels are class ids in ``1..K``; column ``k - 1`` of a logits matrix holds
class ``k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

DEFAULT_BETA = 20.0


@dataclass
class LossOutput:
    loss: float
    probabilities: np.ndarray
    grad_logits: np.ndarray


def _check_logits(logits):
    a = np.asarray(logits, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise InvalidArgument(f"logits must be (N, K), got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgument("logits contain non-finite values")
    return a


def _label_index(labels, k):
    y = np.asarray(labels)
    if y.ndim == 0:
        y = y[None]
    if not np.issubdtype(y.dtype, np.integer):
        raise InvalidArgument("labels must be integers in 1..K")
    if y.size and (y.min() < 1 or y.max() > k):
        raise InvalidArgument(f"labels must lie in 1..{k}")
    return y.astype(np.intp) - 1


def log_softmax(logits):
    a = _check_logits(logits)
    shifted = a - a.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_probs(logits):
    """Row-wise softmax with max-shift; output rows sum to one."""
    a = _check_logits(logits)
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_loss(probs, labels):
    """Mean negative log-probability of the true class."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim == 1:
        p = p[None, :]
    idx = _label_index(labels, p.shape[1])
    if idx.shape[0] != p.shape[0]:
        raise InvalidArgument(f"{idx.shape[0]} labels for {p.shape[0]} rows")
    return float(-np.mean(np.log(p[np.arange(p.shape[0]), idx])))


def class_weights(sizes, beta=DEFAULT_BETA):
    """Per-class weight ``1 + (S_max - S_k) / (beta * S_max)``.

    ``beta=math.inf`` is accepted and yields all-ones weights.
    """
    s = np.asarray(sizes)
    if s.size == 0:
        raise InvalidArgument("class_weights needs at least one class size")
    if np.any(s < 1):
        raise InvalidArgument("class sizes must be >= 1")
    if not beta > 0:
        raise InvalidArgument(f"beta must be > 0, got {beta}")
    s = s.astype(np.float64)
    s_max = s.max()
    return 1.0 + (s_max - s) / (beta * s_max)


def _softmax_core(logits, labels):
    a = _check_logits(logits)
    idx = _label_index(labels, a.shape[1])
    m = a.shape[0]
    if idx.shape[0] != m:
        raise InvalidArgument(f"{idx.shape[0]} labels for {m} logit rows")
    rows = np.arange(m)
    top = a.argmax(axis=1)
    shifted = a - a[rows, top][:, None]
    e = np.exp(shifted)
    # the max term is exactly 1; log1p over the rest keeps confident rows accurate
    e[rows, top] = 0.0
    rest = e.sum(axis=1)
    e[rows, top] = 1.0
    z = 1.0 + rest
    probs = e / z[:, None]
    true_logp = shifted[rows, idx] - np.log1p(rest)
    delta = probs.copy()
    delta[rows, idx] -= 1.0
    return probs, true_logp, delta, idx, m


def softmax_loss(logits, labels):
    """Unweighted softmax loss straight from logits (log-sum-exp path)."""
    probs, true_logp, delta, _, m = _softmax_core(logits, labels)
    return LossOutput(float(-np.sum(true_logp) / m), probs, delta / m)


def weighted_softmax_loss(logits, labels, weights):
    """Softmax loss with each sample scaled by the weight of its true class.

    ``loss = -(1/m) sum_i w[y_i] log p_i[y_i]`` and the gradient row i is
    ``w[y_i] * (p_i - onehot(y_i)) / m``.
    """
    w = np.asarray(weights, dtype=np.float64)
    a = np.asarray(logits)
    k = a.shape[-1]
    if w.shape != (k,):
        raise InvalidArgument(f"expected {k} class weights, got {w.shape[0] if w.ndim else 0}")
    probs, true_logp, delta, idx, m = _softmax_core(logits, labels)
    ws = w[idx]
    loss = float(-np.sum(ws * true_logp) / m)
    return LossOutput(loss, probs, (ws[:, None] * delta) / m)


def weight_sensitivity_table(sizes, beta_list):
    """One row of class weights per beta, as a ``(len(beta_list), K)`` array."""
    return np.stack([class_weights(sizes, b) for b in beta_list])


def max_weight_bound(beta):
    """Supremum of any class weight for a given beta (never attained)."""
    return 1.0 + 1.0 / beta if math.isfinite(beta) else 1.0
