"""
Turning a binary into a grayscale image
=======================================

Each byte becomes one pixel. The row width depends on the file size and the
last row is zero padded.
"""

import tempfile
from pathlib import Path

import numpy as np

from imbalance_cnn import imaging

rng = np.random.default_rng(0)

# a fake executable: a header, a zero-filled section, then noisy code bytes
blob = b"MZ" + bytes(1022) + rng.integers(0, 256, size=40_000, dtype=np.uint8).tobytes()
img = imaging.binary_to_image(blob)
print("bytes", len(blob), "-> image", img.height, "x", img.width)

# the zero section shows up as black rows at the top
head = 1024 // img.width
print(f"mean of first {head} rows:", img.pixels[:head].mean(), " rest:", img.pixels[head:].mean().round(1))

# PGM files round-trip bit for bit
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "sample.pgm"
    nbytes = imaging.write_pgm(img, path)
    assert imaging.read_pgm(path) == img
    print("wrote", nbytes, "bytes")

# the network sees fixed-size inputs, so images are resized bilinearly
small = imaging.resize(img, 64, 64)
print("resized to", small.pixels.shape, "range", small.pixels.min(), small.pixels.max())
