"""Penultimate-layer features and per-class feature-map images."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, InvalidState
from .imaging import GrayImage, write_pgm

MANIFEST_FIELDS = ("class", "n", "D", "min", "max", "output_path", "warning")


@dataclass
class FeatureMap:
    name: str
    matrix: np.ndarray  # (n, D)

    @property
    def vmin(self):
        return float(self.matrix.min())

    @property
    def vmax(self):
        return float(self.matrix.max())


def feature_layer_index(net):
    """Index one past the activation that follows the second FC layer."""
    fc = [i for i, layer in enumerate(net.layers) if layer.spec.kind == "fully_connected"]
    if len(fc) < 3:
        raise InvalidArgument(f"feature extraction needs three fully connected layers, found {len(fc)}")
    i = fc[1] + 1
    if i < len(net.layers) and net.layers[i].spec.kind == "relu":
        i += 1
    return i


def extract_features(net, images, batch_size=256):
    """Post-ReLU activations of the second FC layer, one row per image."""
    if net.mode != "eval":
        raise InvalidState("extract_features requires the network in eval mode")
    upto = feature_layer_index(net)
    x = np.asarray(images, dtype=np.float64)
    rows = [net.forward(x[i:i + batch_size], upto=upto) for i in range(0, len(x), batch_size)]
    width = net.layers[upto - 1].out_shape[0]
    return np.concatenate(rows) if rows else np.zeros((0, width))


def scale_to_uint8(matrix):
    """Min-max scale to 0..255 with round-half-up. Returns (pixels, degenerate)."""
    m = np.asarray(matrix, dtype=np.float64)
    lo, hi = m.min(), m.max()
    if hi == lo:
        return np.zeros(m.shape, dtype=np.uint8), True
    return np.floor((m - lo) / (hi - lo) * 255.0 + 0.5).astype(np.uint8), False


def export_feature_map(fm, path):
    """Write ``fm`` as an n x D PGM; returns its manifest row."""
    if fm.matrix.ndim != 2 or fm.matrix.size == 0:
        raise InvalidArgument("feature map must be a non-empty 2-D matrix")
    pixels, degenerate = scale_to_uint8(fm.matrix)
    write_pgm(GrayImage(pixels), path)
    n, d = fm.matrix.shape
    return {"class": fm.name, "n": n, "D": d, "min": repr(fm.vmin), "max": repr(fm.vmax),
            "output_path": str(path), "warning": "constant" if degenerate else ""}


def write_feature_manifest(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
