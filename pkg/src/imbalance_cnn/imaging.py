"""Binary-to-grayscale conversion, bilinear resize, PGM I/O and mean images."""

from __future__ import annotations

import csv
import hashlib
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument, InvalidState

KB = 1024

# (exclusive upper bound in KB, width); the last entry covers everything else
DEFAULT_WIDTH_TABLE = (
    (10, 32),
    (30, 64),
    (60, 128),
    (100, 256),
    (200, 384),
    (500, 512),
    (1000, 768),
    (None, 1024),
)


@dataclass
class GrayImage:
    """Row-major single-channel image. ``pixels`` has shape (height, width)."""

    pixels: np.ndarray

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return (self.pixels.shape == other.pixels.shape
                and self.pixels.dtype == other.pixels.dtype
                and np.array_equal(self.pixels, other.pixels))


def width_for_size(filesize, table=DEFAULT_WIDTH_TABLE):
    for bound, width in table:
        if bound is None or filesize < bound * KB:
            return width
    return table[-1][1]


def load_width_table(path):
    """Read ``<upper_kb> <width>`` lines; the upper bound ``*`` means "else"."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        bound, width = re.split(r"[\s,]+", line)
        rows.append((None if bound in ("*", "inf") else float(bound), int(width)))
    if not rows:
        raise InvalidArgument(f"width table {path} is empty")
    if rows[-1][0] is not None:
        rows.append((None, rows[-1][1]))
    return tuple(rows)


def binary_to_image(data, width=None, table=DEFAULT_WIDTH_TABLE):
    """Lay bytes out row-major at ``width``; the last row is zero-padded."""
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    if buf.size == 0:
        raise InvalidArgument("cannot convert an empty file")
    if width is None:
        width = width_for_size(buf.size, table)
    if width < 1:
        raise InvalidArgument(f"width must be >= 1, got {width}")
    height = -(-buf.size // width)
    pixels = np.zeros(height * width, dtype=np.uint8)
    pixels[:buf.size] = buf
    return GrayImage(pixels.reshape(height, width))


def resize(img, target_h, target_w):
    """Bilinear resample with corner pixels aligned; returns float64 pixels."""
    if target_h < 1 or target_w < 1:
        raise InvalidArgument("resize targets must be >= 1")
    src = np.asarray(img.pixels if isinstance(img, GrayImage) else img, dtype=np.float64)
    h, w = src.shape
    if (h, w) == (target_h, target_w):
        return GrayImage(src.copy())

    def axis(n_in, n_out):
        if n_out == 1 or n_in == 1:
            pos = np.zeros(n_out)
        else:
            pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        lo = np.minimum(np.floor(pos).astype(np.intp), n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis(h, target_h)
    x0, x1, fx = axis(w, target_w)
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return GrayImage(top * (1 - fy)[:, None] + bot * fy[:, None])


# ---------------------------------------------------------------------------
# PGM


def encode_pgm(img):
    px = img.pixels if isinstance(img, GrayImage) else np.asarray(img)
    if px.ndim != 2:
        raise InvalidArgument(f"PGM needs a 2-D image, got shape {px.shape}")
    if px.dtype != np.uint8:
        if np.any((px < 0) | (px > 255)) or np.any(px != np.round(px)):
            raise InvalidArgument("PGM pixels must be integers in 0..255")
        px = px.astype(np.uint8)
    h, w = px.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(px).tobytes()


def write_pgm(img, path):
    data = encode_pgm(img)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def decode_pgm(data):
    """Parse a binary (P5, maxval <= 255) PGM, tolerating header comments."""
    if data[:2] != b"P5":
        raise FormatError(f"bad magic {bytes(data[:2])!r}, expected b'P5'", offset=0)
    pos = 2
    fields = []
    while len(fields) < 3:
        start = pos
        while pos < len(data):
            c = data[pos:pos + 1]
            if c == b"#":
                nl = data.find(b"\n", pos)
                pos = len(data) if nl < 0 else nl + 1
            elif c.isspace():
                pos += 1
            else:
                break
        if pos == start:
            raise FormatError("expected whitespace between header fields", offset=pos)
        tok_start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if pos == tok_start:
            raise FormatError("malformed or truncated header field", offset=pos)
        fields.append(int(data[tok_start:pos]))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after maxval", offset=pos)
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"invalid dimensions {width}x{height}", offset=tok_start)
    if not 0 < maxval <= 255:
        raise FormatError(f"unsupported maxval {maxval}", offset=tok_start)
    need = width * height
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise FormatError(f"truncated payload: {len(payload)} of {need} bytes", offset=pos + len(payload))
    return GrayImage(np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy())


def read_pgm(path):
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


# ---------------------------------------------------------------------------
# conversion pipeline

MANIFEST_FIELDS = ("source_path", "bytes", "width", "height", "output_path")


def convert_file(src, out_dir, table=DEFAULT_WIDTH_TABLE):
    data = Path(src).read_bytes()
    img = binary_to_image(data, table=table)
    out = Path(out_dir) / (Path(src).name + ".pgm")
    write_pgm(img, out)
    return {"source_path": str(src), "bytes": len(data), "width": img.width,
            "height": img.height, "output_path": str(out)}


def convert_tree(in_dir, out_dir, table=DEFAULT_WIDTH_TABLE):
    """Convert every regular file under ``in_dir``, mirroring subdirectories.

    Returns ``(manifest_rows, failures)`` where failures are ``(path, message)``.
    """
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    rows, failures = [], []
    for src in sorted(p for p in in_dir.rglob("*") if p.is_file()):
        dest = out_dir / src.parent.relative_to(in_dir)
        dest.mkdir(parents=True, exist_ok=True)
        try:
            rows.append(convert_file(src, dest, table))
        except (OSError, InvalidArgument) as exc:
            failures.append((str(src), str(exc)))
    return rows, failures


def write_manifest(rows, path, fields=MANIFEST_FIELDS):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# mean image


@dataclass
class MeanImage:
    """Per-pixel training mean plus a fingerprint of the samples it came from."""

    mean: np.ndarray
    fingerprint: str
    count: int


def split_fingerprint(indices):
    h = hashlib.sha256()
    h.update(np.asarray(sorted(int(i) for i in indices), dtype="<i8").tobytes())
    return h.hexdigest()


def compute_mean_image(images, indices=None):
    """Mean over ``images[indices]`` (all images if ``indices`` is None).

    Accumulates in index order so the result is reproducible bit-for-bit.
    """
    stack = np.asarray(images, dtype=np.float64)
    idx = np.arange(len(stack)) if indices is None else np.asarray(indices, dtype=np.intp)
    if idx.size == 0:
        raise InvalidState("cannot compute a mean image from an empty training set")
    total = np.zeros(stack.shape[1:])
    for i in idx:
        total += stack[i]
    return MeanImage(total / idx.size, split_fingerprint(idx), int(idx.size))


def subtract_mean(img, mean):
    m = mean.mean if isinstance(mean, MeanImage) else mean
    px = img.pixels if isinstance(img, GrayImage) else img
    return np.asarray(px, dtype=np.float64) - m


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def iter_files(root):
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            yield Path(dirpath) / name
