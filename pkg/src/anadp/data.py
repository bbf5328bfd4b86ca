"""Dataset ingestion and synthetic generators."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from anadp.errors import ConfigurationError
from anadp.models import Batch

# '^' pads the left edge of every line; it is never a prediction target
VOCAB = "^ abcdefghijklmnopqrstuvwxyz0123456789"
PAD = "^"


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    num_classes: int

    def __len__(self):
        return self.y.size

    def as_batch(self) -> Batch:
        return Batch(self.X, self.y)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.num_classes)


def make_blobs(n: int, dim: int, separation: float, seed: int) -> Dataset:
    """Two unit-variance Gaussian clusters ``separation`` apart.

    Centers sit at +-separation/2 along the diagonal; the first ``n // 2``
    rows are class 0.
    """
    if n < 2 or dim < 1:
        raise ConfigurationError("blobs need n >= 2 and dim >= 1")
    rng = np.random.default_rng(seed)
    y = (np.arange(n) >= n // 2).astype(np.int64)
    direction = np.ones(dim) / np.sqrt(dim)
    X = rng.standard_normal((n, dim)) + np.outer(2 * y - 1, direction) * (separation / 2.0)
    return Dataset(X, y, 2)


def make_separable(n: int, dim: int, margin: float, seed: int) -> Dataset:
    """Points labeled by the sign of a random hyperplane, with a margin gap."""
    if n < 2 or dim < 1:
        raise ConfigurationError("separable data needs n >= 2 and dim >= 1")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(dim)
    w /= np.linalg.norm(w)
    X = rng.standard_normal((n, dim))
    y = (X @ w > 0).astype(np.int64)
    X += np.outer(2 * y - 1, w) * (margin / 2.0)
    return Dataset(X, y, 2)


def load_csv(path: str | Path, num_classes: Optional[int] = None) -> Dataset:
    """Header ``f0,...,fk,label``; floats then an integer label per row."""
    path = Path(path)
    rows, labels = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1].strip() != "label":
            raise ConfigurationError(f"{path}:1: header must end with 'label'")
        expect = [f"f{i}" for i in range(len(header) - 1)]
        if [h.strip() for h in header[:-1]] != expect:
            raise ConfigurationError(f"{path}:1: feature columns must be named f0..f{len(header) - 2}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ConfigurationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                feats = [float(v) for v in row[:-1]]
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{lineno}: bad float ({exc})") from None
            if not all(np.isfinite(feats)):
                raise ConfigurationError(f"{path}:{lineno}: non-finite feature")
            try:
                label = int(row[-1])
            except ValueError:
                raise ConfigurationError(f"{path}:{lineno}: label {row[-1]!r} is not an integer") from None
            if label < 0 or (num_classes is not None and label >= num_classes):
                raise ConfigurationError(f"{path}:{lineno}: label {label} out of range")
            rows.append(feats)
            labels.append(label)
    if not rows:
        raise ConfigurationError(f"{path}: no data rows")
    y = np.array(labels, dtype=np.int64)
    k = num_classes if num_classes is not None else max(2, int(y.max()) + 1)
    return Dataset(np.array(rows, dtype=np.float64), y, k)


def random_text(n_tokens: int, seed: int, line_len: int = 48) -> list[str]:
    """Lines of random lowercase words, about ``n_tokens`` characters total."""
    rng = np.random.default_rng(seed)
    letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
    lines, total = [], 0
    while total < n_tokens:
        words, length = [], 0
        while length < line_len:
            w = "".join(rng.choice(letters, size=int(rng.integers(2, 9))))
            words.append(w)
            length += len(w) + 1
        line = " ".join(words)[: max(1, min(line_len, n_tokens - total))]
        lines.append(line)
        total += len(line)
    return lines


def encode(text: str) -> np.ndarray:
    try:
        return np.array([VOCAB.index(c) for c in text], dtype=np.int64)
    except ValueError:
        bad = next(c for c in text if c not in VOCAB)
        raise ConfigurationError(f"character {bad!r} not in vocabulary") from None


def windows(lines: list[str], context_len: int) -> Dataset:
    """Next-character examples: left-padded context window -> next token."""
    xs, ys = [], []
    pad = np.zeros(context_len, dtype=np.int64)
    for line in lines:
        ids = np.concatenate([pad, encode(line)])
        n = ids.size - context_len
        if n <= 0:
            continue
        idx = np.arange(n)[:, None] + np.arange(context_len)[None, :]
        xs.append(ids[idx])
        ys.append(ids[context_len:])
    return Dataset(np.concatenate(xs), np.concatenate(ys), len(VOCAB))


def train_val_split(ds: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not (0.0 < val_fraction < 1.0):
        raise ConfigurationError("val_fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(len(ds))
    n_val = max(1, int(round(val_fraction * len(ds))))
    return ds.subset(np.sort(perm[n_val:])), ds.subset(np.sort(perm[:n_val]))
