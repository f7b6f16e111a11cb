"""JSON and CSV serialization for reports, kernels, and datasets.

All writers are deterministic: keys sorted, full float precision, no
timestamps, so re-running a pipeline byte-reproduces its artifacts.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np


def to_jsonable(obj):
    """Recursively convert dataclasses and numpy values to plain JSON types."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, float) and (np.isnan(obj) or np.isinf(obj)):
        return repr(obj)
    return obj


def write_json(path: str | Path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(to_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_matrix_csv(path: str | Path, M: np.ndarray) -> None:
    """Row-major full-precision CSV of a matrix (symmetric storage kept full)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.atleast_2d(M), delimiter=",", fmt="%.17g")


def load_matrix_csv(path: str | Path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))


def save_dataset_csv(path: str | Path, X: np.ndarray, y: np.ndarray) -> None:
    """Label-first CSV rows, the same layout load_dataset parses."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for label, row in zip(y, X):
            writer.writerow([int(label)] + [f"{v:.17g}" for v in row])


def save_records_csv(path: str | Path, records: list[dict], fieldnames: list[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for rec in records:
            writer.writerow({k: rec.get(k) for k in fieldnames})
