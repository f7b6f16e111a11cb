"""Synthetic and file-backed datasets with controlled spectral structure.

Synthetic generators produce either uniform-on-the-sphere rows (incoherent
with high probability) or a matrix with a prescribed singular spectrum, which
gives exact control over the Gram matrix condition number. File ingestion
covers small CSV and IDX datasets, normalized so that every row has unit
Euclidean norm, the setting all kernel results here assume.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import (
    BadSpectrum,
    EmptyDataset,
    LabelOutOfRange,
    ParseError,
    RankInfeasible,
    UnsupportedFormat,
)
from .validation import as_matrix, check_data_matrix


@dataclass(frozen=True)
class LabeledDataset:
    """Unit-norm data matrix with integer class ids in [0, num_classes)."""

    X: np.ndarray
    y: np.ndarray
    num_classes: int

    def __post_init__(self):
        X = as_matrix(self.X)
        y = np.asarray(self.y, dtype=np.int64)
        if y.shape != (X.shape[0],):
            raise ParseError(0, f"labels shape {y.shape} does not match {X.shape[0]} rows")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise LabelOutOfRange(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{y.min()}, {y.max()}]"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class IncoherenceReport:
    """Estimated incoherence level of a unit-norm data matrix."""

    mu_hat: float
    nu: float
    max_offdiag: float
    satisfied: bool | None = None
    mu_target: float | None = field(default=None)


def generate_sphere_data(n: int, d: int, seed: int) -> np.ndarray:
    """Draw n rows i.i.d. uniform on the unit sphere in R^d.

    Deterministic for a fixed seed.
    """
    if n < 1 or d < 1:
        raise EmptyDataset(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    # Gaussian rows are nonzero almost surely; resample the measure-zero case.
    while np.any(norms == 0.0):
        bad = norms[:, 0] == 0.0
        X[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(X, axis=1, keepdims=True)
    return X / norms


def generate_spectrum_data(
    n: int,
    d: int,
    singular_values: Sequence[float],
    seed: int,
    normalize: bool = False,
) -> np.ndarray:
    """Build X = U diag(s) V^T with seeded random orthogonal factors.

    The Gram matrix X X^T then has eigenvalues equal to the squared singular
    values, so the condition number is prescribed exactly. With ``normalize``
    the rows are rescaled to unit norm afterwards, which trades the exact
    spectrum for the unit-row assumption.
    """
    s = np.asarray(singular_values, dtype=np.float64)
    if n > d:
        raise RankInfeasible(f"prescribed spectrum needs n <= d, got n={n}, d={d}")
    if s.shape != (n,):
        raise BadSpectrum(f"need exactly n={n} singular values, got {s.shape}")
    if np.any(s <= 0):
        raise BadSpectrum("singular values must be strictly positive")
    if np.any(np.diff(s) > 0):
        raise BadSpectrum("singular values must be non-increasing")
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((d, n)))
    X = (U * s) @ V.T
    if normalize:
        X = X / np.linalg.norm(X, axis=1, keepdims=True)
    return X


def one_hot(labels: Sequence[int], num_classes: int) -> np.ndarray:
    """Encode class ids as an n x C matrix of {0,1} rows summing to 1."""
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1:
        raise LabelOutOfRange(f"labels must be 1-D, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise LabelOutOfRange(
            f"labels must lie in [0, {num_classes}), got range [{y.min()}, {y.max()}]"
        )
    Y = np.zeros((y.size, num_classes))
    Y[np.arange(y.size), y] = 1.0
    return Y


def check_incoherence(X: np.ndarray, mu_target: float | None = None) -> IncoherenceReport:
    """Estimate the incoherence level mu of a unit-norm data matrix.

    mu_hat is the smallest mu for which max_{i != j} |x_i^T x_j| <= mu/sqrt(d)
    holds, and nu = 1 + (n-1) mu_hat^2 / d bounds the row energy
    sum_k (x_i^T x_k)^2.
    """
    X = check_data_matrix(X, unit_rows=True)
    n, d = X.shape
    if n == 1:
        max_offdiag = 0.0
    else:
        G = X @ X.T
        np.fill_diagonal(G, 0.0)
        max_offdiag = float(np.max(np.abs(G)))
    max_offdiag = min(max_offdiag, 1.0)
    mu_hat = max_offdiag * np.sqrt(d)
    nu = 1.0 + (n - 1) * mu_hat**2 / d
    satisfied = None if mu_target is None else bool(mu_hat <= mu_target)
    return IncoherenceReport(
        mu_hat=float(mu_hat),
        nu=float(nu),
        max_offdiag=max_offdiag,
        satisfied=satisfied,
        mu_target=mu_target,
    )


def _normalize_rows(X: np.ndarray, mean: float | None, std: float | None) -> np.ndarray:
    if mean is not None:
        X = X - mean
    if std is not None:
        X = X / std
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        row = int(np.argmin(norms[:, 0]))
        raise ParseError(row, "zero row cannot be unit-normalized")
    return X / norms


def _relabel(y: np.ndarray, class_filter: Sequence[int] | None) -> tuple[np.ndarray, int]:
    if class_filter is None:
        classes = np.unique(y)
        num_classes = int(classes.max()) + 1 if classes.size else 0
        return y, num_classes
    kept = sorted(class_filter)
    remap = {c: i for i, c in enumerate(kept)}
    return np.array([remap[c] for c in y], dtype=np.int64), len(kept)


def _load_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    rows, labels = [], []
    with open(path, newline="") as fh:
        for i, rec in enumerate(csv.reader(fh)):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            try:
                labels.append(int(float(rec[0])))
                rows.append([float(v) for v in rec[1:]])
            except ValueError as exc:
                raise ParseError(i, str(exc)) from exc
            if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
                raise ParseError(i, f"expected {len(rows[0])} features, got {len(rows[-1])}")
    if not rows:
        raise EmptyDataset(f"{path} contains no samples")
    return np.asarray(rows, dtype=np.float64), np.asarray(labels, dtype=np.int64)


_IDX_UBYTE = 0x08


def _read_idx(path: Path, expect_dims: tuple[int, ...]) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < 4:
        raise UnsupportedFormat(f"{path} too short for an IDX header")
    zero1, zero2, dtype, ndim = struct.unpack(">BBBB", raw[:4])
    if zero1 != 0 or zero2 != 0 or dtype != _IDX_UBYTE or ndim not in expect_dims:
        raise UnsupportedFormat(
            f"{path}: only unsigned-byte IDX with {expect_dims} dimensions is supported"
        )
    shape = struct.unpack(f">{ndim}I", raw[4 : 4 + 4 * ndim])
    data = np.frombuffer(raw, dtype=np.uint8, offset=4 + 4 * ndim)
    if data.size != int(np.prod(shape)):
        raise UnsupportedFormat(f"{path}: payload size does not match header {shape}")
    return data.reshape(shape)


def _load_idx(path: Path, labels_path: Path | None) -> tuple[np.ndarray, np.ndarray]:
    if labels_path is None:
        raise UnsupportedFormat("IDX loading needs labels_path alongside the image file")
    images = _read_idx(path, expect_dims=(3,))
    labels = _read_idx(labels_path, expect_dims=(1,))
    if images.shape[0] != labels.shape[0]:
        raise UnsupportedFormat(
            f"image count {images.shape[0]} != label count {labels.shape[0]}"
        )
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return X, labels.astype(np.int64)


def load_dataset(
    path: str | Path,
    format: str = "csv",
    class_filter: Sequence[int] | None = None,
    max_per_class: int | None = None,
    mean: float | None = None,
    std: float | None = None,
    labels_path: str | Path | None = None,
) -> LabeledDataset:
    """Load a small labeled dataset from CSV or IDX files.

    CSV rows carry the label in the first column; IDX needs the separate
    ``labels_path`` file. Preprocessing applies the optional scalar mean/std
    shift first and unit-normalizes rows afterwards, so the loaded matrix
    satisfies the unit-norm assumption exactly. The class filter (applied
    before ``max_per_class`` truncation) relabels the kept classes to a
    contiguous {0, 1, ...} range.
    """
    path = Path(path)
    if format == "csv":
        X, y = _load_csv(path)
    elif format == "idx":
        X, y = _load_idx(path, None if labels_path is None else Path(labels_path))
    else:
        raise UnsupportedFormat(f"unknown format {format!r}; expected 'csv' or 'idx'")

    if class_filter is not None:
        keep = np.isin(y, list(class_filter))
        X, y = X[keep], y[keep]
        if X.shape[0] == 0:
            raise EmptyDataset(f"class filter {sorted(class_filter)} kept no samples")
    y, num_classes = _relabel(y, class_filter)

    if max_per_class is not None:
        keep_idx = []
        counts: dict[int, int] = {}
        for i, c in enumerate(y):
            if counts.get(int(c), 0) < max_per_class:
                counts[int(c)] = counts.get(int(c), 0) + 1
                keep_idx.append(i)
        X, y = X[keep_idx], y[keep_idx]

    X = _normalize_rows(X, mean, std)
    return LabeledDataset(X=X, y=y, num_classes=num_classes)
