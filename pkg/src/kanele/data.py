"""Datasets: the synthetic two-moons generator and a small CSV loader.

Everything lands in a Dataset of float64 features and int64 class labels.
The loader maps label tokens to ids in order of first appearance so label
columns may hold strings or numbers.
"""

from __future__ import annotations

import csv as _csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Malformed dataset input; message carries file and line context."""


@dataclass
class Dataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray    # (n,) int64
    label_names: list[str]

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    def stats(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-feature mean and standard deviation."""
        return self.features.mean(axis=0), self.features.std(axis=0)


def gen_moons(n: int, noise: float = 0.1, seed: int = 0) -> Dataset:
    """Two interleaving half circles, n//2 points on each arc.

    The upper arc traces (cos t, sin t) and the lower (1 - cos t, 1/2 - sin t)
    for t in [0, pi], plus isotropic Gaussian noise.
    """
    if n < 2:
        raise DataError(f"need at least 2 samples, got {n}")
    if noise < 0:
        raise DataError(f"noise must be >= 0, got {noise}")
    n_out = n // 2
    n_in = n - n_out
    t_out = np.linspace(0.0, np.pi, n_out)
    t_in = np.linspace(0.0, np.pi, n_in)
    x = np.concatenate(
        [
            np.stack([np.cos(t_out), np.sin(t_out)], axis=1),
            np.stack([1.0 - np.cos(t_in), 0.5 - np.sin(t_in)], axis=1),
        ]
    )
    y = np.concatenate([np.zeros(n_out, dtype=np.int64), np.ones(n_in, dtype=np.int64)])
    rng = np.random.default_rng(seed)
    x = x + rng.normal(0.0, noise, size=x.shape)
    return Dataset(features=x, labels=y, label_names=["0", "1"])


def save_csv(ds: Dataset, path: str | Path) -> None:
    """feature columns then the label token, no header."""
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        for row, lab in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [ds.label_names[lab]])


def load_csv(
    path: str | Path,
    label_column: int = -1,
    delimiter: str = ",",
    has_header: bool = False,
) -> Dataset:
    """Read a delimited file of numeric features plus one label column."""
    rows: list[list[str]] = []
    with open(path, newline="") as fh:
        for rec in _csv.reader(fh, delimiter=delimiter):
            if rec and any(cell.strip() for cell in rec):
                rows.append([c.strip() for c in rec])
    if has_header and rows:
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 2:
        raise DataError(f"{path}: rows need at least one feature and a label")
    lab_idx = label_column if label_column >= 0 else width + label_column
    if not 0 <= lab_idx < width:
        raise DataError(f"{path}: label column {label_column} outside of {width} columns")
    feats = []
    toks = []
    offset = 2 if has_header else 1
    for i, rec in enumerate(rows):
        line = i + offset
        if len(rec) != width:
            raise DataError(f"{path}:{line}: expected {width} columns, got {len(rec)}")
        toks.append(rec[lab_idx])
        try:
            feats.append([float(c) for j, c in enumerate(rec) if j != lab_idx])
        except ValueError as e:
            raise DataError(f"{path}:{line}: non-numeric feature: {e}") from e
    names: list[str] = []
    ids = {}
    for t in toks:
        if t not in ids:
            ids[t] = len(names)
            names.append(t)
    labels = np.array([ids[t] for t in toks], dtype=np.int64)
    return Dataset(features=np.array(feats, dtype=np.float64), labels=labels, label_names=names)


def split(ds: Dataset, train_fraction: float, seed: int = 0, stratified: bool = True) -> tuple[Dataset, Dataset]:
    """Shuffle and split; stratified keeps per-class proportions."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    if stratified:
        train_idx, test_idx = [], []
        for c in range(ds.n_classes):
            idx = np.flatnonzero(ds.labels == c)
            idx = idx[rng.permutation(idx.size)]
            k = int(round(idx.size * train_fraction))
            k = min(max(k, 1), idx.size - 1) if idx.size > 1 else idx.size
            train_idx.append(idx[:k])
            test_idx.append(idx[k:])
        tr = np.sort(np.concatenate(train_idx))
        te = np.sort(np.concatenate(test_idx))
    else:
        perm = rng.permutation(ds.n)
        k = int(round(ds.n * train_fraction))
        tr, te = np.sort(perm[:k]), np.sort(perm[k:])
    mk = lambda idx: Dataset(features=ds.features[idx], labels=ds.labels[idx], label_names=ds.label_names)
    return mk(tr), mk(te)
