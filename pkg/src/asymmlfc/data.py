"""Synthetic generators and on-disk formats (dataset CSV, IDX)."""

from __future__ import annotations

import csv
import gzip
import struct
from pathlib import Path

import numpy as np

from .problem import Dataset

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


# --- digit-like blobs -----------------------------------------------------------

def blob_means(n_classes: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.2, 0.8, size=(n_classes, dim))


def sample_blobs(means, classes, sigma: float, rng: np.random.Generator) -> np.ndarray:
    classes = np.asarray(classes, dtype=int)
    X = means[classes] + sigma * rng.standard_normal((len(classes), means.shape[1]))
    return np.clip(X, 0.0, 1.0)


# --- bag-of-words documents ----------------------------------------------------

DOC_CLASSES = ("clothing", "politics", "running", "shoes", "sport", "wrestling")

# label sets consistent with the document knowledge base: politics is disjoint
# from everything, running and wrestling imply sport, running shoes are clothing
DOC_TYPES = (
    ({"politics"}, 0.22),
    ({"sport"}, 0.14),
    ({"sport", "wrestling"}, 0.14),
    ({"sport", "running"}, 0.12),
    ({"clothing"}, 0.12),
    ({"shoes"}, 0.08),
    ({"shoes", "clothing"}, 0.08),
    ({"running", "shoes", "clothing", "sport"}, 0.10),
)


def sample_documents(n: int, rng: np.random.Generator, words_per_class: int = 8,
                     n_common: int = 12, rate: float = 1.2, noise: float = 0.15):
    """Sparse term-frequency vectors in [0, 1] and multi-hot labels.

    Every class owns a block of topic words; a document draws Poisson counts
    on the blocks of its classes plus a little background mass everywhere.
    """
    k = len(DOC_CLASSES)
    vocab = k * words_per_class + n_common
    probs = np.array([p for _, p in DOC_TYPES])
    kinds = rng.choice(len(DOC_TYPES), size=n, p=probs / probs.sum())
    Y = np.zeros((n, k))
    lam = np.full((n, vocab), noise)
    lam[:, k * words_per_class:] = 0.8
    for r, t in enumerate(kinds):
        for name in DOC_TYPES[t][0]:
            c = DOC_CLASSES.index(name)
            Y[r, c] = 1.0
            lam[r, c * words_per_class:(c + 1) * words_per_class] += rate
    counts = rng.poisson(lam)
    X = np.minimum(1.0, counts / 3.0)
    return X, Y


# --- CSV ---------------------------------------------------------------------

def write_dataset_csv(path, data: Dataset, label_key=None) -> None:
    """``f0,...,f{d-1},label``; an empty label marks an unsupervised row."""
    X = data.features
    y = data.labels.get(label_key) if label_key is not None else None
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([f"f{k}" for k in range(X.shape[1])] + ["label"])
        for r in range(len(X)):
            lab = "" if y is None or np.isnan(y[r]) else str(int(y[r]))
            wr.writerow([repr(float(v)) for v in X[r]] + [lab])


def read_dataset_csv(path, label_key: str) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][-1] != "label" or any(h != f"f{k}" for k, h in enumerate(rows[0][:-1])):
        raise ValueError(f"{path}: header must be f0,...,f{{d-1}},label")
    body = rows[1:]
    X = np.array([[float(v) for v in r[:-1]] for r in body]).reshape(len(body), len(rows[0]) - 1)
    y = np.array([float(r[-1]) if r[-1].strip() else np.nan for r in body])
    return Dataset(X, {label_key: y})


# --- IDX ---------------------------------------------------------------------

def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _header(fh, fmt, path):
    size = struct.calcsize(fmt)
    raw = fh.read(size)
    if len(raw) != size:
        raise ValueError(f"{path}: truncated header")
    return struct.unpack(fmt, raw)


def read_idx_images(path) -> np.ndarray:
    """Images as ``(count, rows * cols)`` floats in [0, 1]."""
    with _open(path) as fh:
        magic, n, rows, cols = _header(fh, ">IIII", path)
        if magic != IDX_IMAGES:
            raise ValueError(f"{path}: bad image magic 0x{magic:08x}")
        raw = np.frombuffer(fh.read(n * rows * cols), dtype=np.uint8)
    if raw.size != n * rows * cols:
        raise ValueError(f"{path}: truncated pixel data")
    return raw.reshape(n, rows * cols).astype(float) / 255.0


def read_idx_labels(path) -> np.ndarray:
    with _open(path) as fh:
        magic, n = _header(fh, ">II", path)
        if magic != IDX_LABELS:
            raise ValueError(f"{path}: bad label magic 0x{magic:08x}")
        raw = np.frombuffer(fh.read(n), dtype=np.uint8)
    if raw.size != n:
        raise ValueError(f"{path}: truncated label data")
    return raw.astype(int)


def write_idx_images(path, images) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS, len(labels)))
        fh.write(labels.tobytes())
