"""Class-folder corpora, the per-class 60/20/20 split, batching, class stats."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging
from .errors import DataError, InvalidArgument
from .loss import DEFAULT_BETA, class_weights

IMAGE_SUFFIXES = (".pgm",)

# Malimg families: (type, name, image count)
MALIMG_TABLE = (
    ("Worm", "Allaple.L", 1591),
    ("Worm", "Allaple.A", 2949),
    ("Worm", "Yuner.A", 800),
    ("PWS", "lolyda.AA 1", 213),
    ("PWS", "lolyda.AA 2", 184),
    ("PWS", "lolyda.AA 3", 123),
    ("Trojan", "C2Lop.P", 146),
    ("Trojan", "C2Lop.gen!G", 200),
    ("Dialer", "Instantaccess", 431),
    ("Trojan Downloader", "Swizzor.gen!I", 132),
    ("Trojan Downloader", "Swizzor.gen!E", 128),
    ("Worm", "VB.AT", 408),
    ("Rogue", "Fakerean", 381),
    ("Trojan", "Alueron.gen!J", 198),
    ("Trojan", "Malex.gen!J", 136),
    ("PWS", "Lolyda.AT", 159),
    ("Dialer", "Adialer.C", 125),
    ("Trojan Downloader", "Wintrim.BX", 97),
    ("Dialer", "Dialplatform.B", 177),
    ("Trojan Downloader", "Dontovo.A", 162),
    ("Trojan Downloader", "Obfuscator.AD", 142),
    ("Backdoor", "Agent.FYI", 116),
    ("Worm:AutoIT", "Autorun.K", 106),
    ("Backdoor", "Rbot!gen", 158),
    ("Trojan", "Skintrim.N", 80),
)


def malimg_fixture():
    """The 25 Malimg ``(family name, image count)`` pairs in table order."""
    return [(name, size) for _, name, size in MALIMG_TABLE]


@dataclass
class Corpus:
    """Ordered classes, each with its image paths in lexicographic order."""

    classes: list  # [(name, [paths...])]

    @property
    def K(self):
        return len(self.classes)

    @property
    def names(self):
        return [name for name, _ in self.classes]

    @property
    def sizes(self):
        return [len(paths) for _, paths in self.classes]

    @classmethod
    def from_sizes(cls, pairs):
        """Path-less corpus from ``(name, count)`` pairs; useful for split arithmetic."""
        return cls([(name, [None] * int(n)) for name, n in pairs])

    def fingerprint(self):
        """sha256 over class names, counts, relative paths and file contents."""
        h = hashlib.sha256()
        for name, paths in self.classes:
            h.update(f"{name}\0{len(paths)}\0".encode())
            for p in paths:
                if p is not None:
                    h.update(Path(p).name.encode() + b"\0")
                    h.update(Path(p).read_bytes())
        return {"classes": {n: len(p) for n, p in self.classes}, "sha256": h.hexdigest()}


def scan_corpus(root):
    """Read ``root/<class>/*.pgm``; class and path order are lexicographic."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"corpus root {root} is not a directory")
    classes = []
    for entry in sorted(root.iterdir()):
        if not entry.is_dir():
            raise DataError(f"unexpected non-directory entry in corpus root: {entry}")
        paths = []
        for p in sorted(entry.iterdir()):
            if not p.is_file() or p.suffix.lower() not in IMAGE_SUFFIXES:
                raise DataError(f"non-image file in class {entry.name!r}: {p}")
            paths.append(p)
        if not paths:
            raise DataError(f"class {entry.name!r} has no images")
        classes.append((entry.name, paths))
    if not classes:
        raise DataError(f"no class directories under {root}")
    return Corpus(classes)


@dataclass
class SplitIndices:
    """Per-class within-class index lists, keyed by class name."""

    train: dict = field(default_factory=dict)
    val: dict = field(default_factory=dict)
    test: dict = field(default_factory=dict)

    def sizes(self, name):
        return len(self.train[name]), len(self.val[name]), len(self.test[name])

    def part(self, which):
        if which not in ("train", "val", "test"):
            raise InvalidArgument(f"unknown split {which!r}")
        return getattr(self, which)


def split_sizes(n):
    n_train = (6 * n) // 10
    n_val = (2 * n) // 10
    return n_train, n_val, n - n_train - n_val


def split_60_20_20(corpus, min_size=5):
    """First 60% of each class to train, next 20% to val, the rest to test."""
    if not isinstance(corpus, Corpus):
        corpus = Corpus.from_sizes(corpus)
    split = SplitIndices()
    for name, paths in corpus.classes:
        n = len(paths)
        if n < min_size:
            raise DataError(f"class {name!r} has {n} images; at least {min_size} needed for a 60/20/20 split")
        a, b, _ = split_sizes(n)
        split.train[name] = list(range(0, a))
        split.val[name] = list(range(a, a + b))
        split.test[name] = list(range(a + b, n))
    return split


def make_batches(indices, batch_size, run_seed=0, epoch=0):
    """Shuffle ``indices`` with a (run_seed, epoch)-seeded permutation and chunk.

    The final short batch is kept.
    """
    if batch_size < 1:
        raise InvalidArgument(f"batch_size must be >= 1, got {batch_size}")
    idx = np.asarray(indices, dtype=np.intp)
    perm = np.random.default_rng([int(run_seed), int(epoch)]).permutation(idx.size)
    shuffled = idx[perm]
    return [shuffled[i:i + batch_size] for i in range(0, idx.size, batch_size)]


@dataclass
class ClassStats:
    class_id: int
    name: str
    size: int
    weight: float


def class_stats(corpus, split, beta=DEFAULT_BETA):
    """Weights from training-split class sizes."""
    names = corpus.names if isinstance(corpus, Corpus) else list(corpus)
    sizes = [len(split.train[n]) for n in names]
    w = class_weights(sizes, beta)
    return [ClassStats(i + 1, n, s, float(wk)) for i, (n, s, wk) in enumerate(zip(names, sizes, w))]


def write_weights_csv(stats, fh):
    fh.write("class_id,name,size,omega\n")
    writer = csv.writer(fh, lineterminator="\n")
    for s in stats:
        writer.writerow([s.class_id, s.name, s.size, f"{s.weight:.9f}"])


@dataclass
class Dataset:
    """In-memory images ``(N, 1, H, W)`` (raw 0..255 scale) with labels 1..K.

    Samples are grouped by class in corpus order, so sample ``offsets[k] + j``
    is image ``j`` of class ``k``.
    """

    images: np.ndarray
    labels: np.ndarray
    class_names: list
    split: SplitIndices
    paths: list = None

    @property
    def K(self):
        return len(self.class_names)

    @property
    def input_size(self):
        return self.images.shape[2:]

    @property
    def offsets(self):
        counts = np.bincount(self.labels, minlength=self.K + 1)[1:]
        return np.concatenate([[0], np.cumsum(counts)[:-1]])

    def indices(self, which):
        part = self.split.part(which)
        off = self.offsets
        return np.concatenate([off[k] + np.asarray(part[name], dtype=np.intp)
                               for k, name in enumerate(self.class_names)]).astype(np.intp)

    def train_sizes(self):
        return [len(self.split.train[n]) for n in self.class_names]

    @classmethod
    def from_arrays(cls, images, labels, class_names, paths=None):
        """Build from class-grouped arrays; split per class in given order."""
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[:, None]
        labels = np.asarray(labels, dtype=np.intp)
        if np.any(np.diff(labels) < 0):
            raise InvalidArgument("samples must be grouped by class in ascending label order")
        counts = np.bincount(labels, minlength=len(class_names) + 1)[1:]
        split = split_60_20_20(list(zip(class_names, counts)))
        return cls(images, labels, list(class_names), split, paths)

    @classmethod
    def from_corpus(cls, corpus, input_size):
        h, w = input_size
        imgs, labels, paths = [], [], []
        for k, (name, class_paths) in enumerate(corpus.classes, start=1):
            for p in class_paths:
                img = imaging.read_pgm(p)
                imgs.append(imaging.resize(img, h, w).pixels)
                labels.append(k)
                paths.append(str(p))
        ds = cls.from_arrays(np.stack(imgs), labels, corpus.names, paths)
        return ds


def write_split_manifest(dataset, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", "split", "path"])
        off = dataset.offsets
        for which in ("train", "val", "test"):
            part = dataset.split.part(which)
            for k, name in enumerate(dataset.class_names):
                for j in part[name]:
                    p = dataset.paths[off[k] + j] if dataset.paths else f"{name}/{j}"
                    writer.writerow([name, which, p])
