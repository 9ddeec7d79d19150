"""Procedurally generated corpora for tests, demos and the acceptance suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import Dataset
from .imaging import GrayImage, write_pgm


def texture_images(class_id, count, size, rng, noise=15.0, num_classes=5):
    """Oriented sinusoidal gratings; orientation and frequency identify the class.

    Each image gets a random phase and additive Gaussian noise, then is
    quantised to uint8.
    """
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    angle = np.pi * (class_id - 1) / num_classes
    freq = 2 * np.pi * (3 + 2 * ((class_id - 1) % 3)) / max(h, w)
    proj = np.cos(angle) * xx + np.sin(angle) * yy
    phase = rng.uniform(0, 2 * np.pi, size=(count, 1, 1))
    imgs = 128.0 + 70.0 * np.sin(freq * proj[None] + phase)
    imgs += rng.normal(0.0, noise, size=imgs.shape)
    return np.clip(np.rint(imgs), 0, 255).astype(np.uint8)


def texture_dataset(sizes=(1000, 100, 50, 25, 10), size=(64, 64), seed=0, noise=15.0):
    rng = np.random.default_rng(seed)
    k = len(sizes)
    imgs = np.concatenate([texture_images(c + 1, n, size, rng, noise, k) for c, n in enumerate(sizes)])
    labels = np.repeat(np.arange(1, k + 1), sizes)
    names = [f"class{c + 1:02d}" for c in range(k)]
    return Dataset.from_arrays(imgs.astype(np.float64), labels, names)


def separable_dataset(per_class=40, size=(32, 32), seed=0):
    """Two classes: dark images (mean 64) and bright images (mean 192)."""
    rng = np.random.default_rng(seed)
    h, w = size
    dark = rng.normal(64.0, 12.0, size=(per_class, h, w))
    bright = rng.normal(192.0, 12.0, size=(per_class, h, w))
    imgs = np.clip(np.rint(np.concatenate([dark, bright])), 0, 255)
    labels = np.repeat([1, 2], per_class)
    return Dataset.from_arrays(imgs, labels, ["dark", "bright"])


def write_corpus(dataset, root):
    """Store a dataset as ``root/<class>/<index>.pgm`` (pixels must be 0..255 integers)."""
    root = Path(root)
    off = dataset.offsets
    counts = np.bincount(dataset.labels, minlength=dataset.K + 1)[1:]
    for k, name in enumerate(dataset.class_names):
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for j in range(counts[k]):
            px = dataset.images[off[k] + j, 0].astype(np.uint8)
            write_pgm(GrayImage(px), d / f"{j:05d}.pgm")
    return root
