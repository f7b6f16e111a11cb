"""Input validation helpers.

Every public entry point funnels array arguments through these, so shape and
norm contracts fail early with a consistent message.
"""

from __future__ import annotations

import numpy as np

from .exceptions import EmptyDataset, NotSymmetric, ShapeError

UNIT_NORM_TOL = 1e-10
SYMMETRY_TOL = 1e-8


def as_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float64 array with at least one row and column."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyDataset(f"{name} must have n >= 1 rows and d >= 1 columns")
    return X


def as_vector(y, name: str = "y") -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {y.shape}")
    return y


def check_data_matrix(X, unit_rows: bool = False, name: str = "X") -> np.ndarray:
    """Validate a data matrix; optionally require unit-norm rows."""
    X = as_matrix(X, name)
    if unit_rows:
        norms = np.linalg.norm(X, axis=1)
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst > UNIT_NORM_TOL:
            raise ValueError(
                f"{name} rows must have unit norm (worst deviation {worst:.3e})"
            )
    return X


def check_symmetric(M, tol: float = SYMMETRY_TOL, name: str = "M") -> np.ndarray:
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {M.shape}")
    asym = float(np.max(np.abs(M - M.T)))
    if asym > tol:
        raise NotSymmetric(f"{name} asymmetric: max |M - M^T| = {asym:.3e} > {tol:.1e}")
    return M


def check_same_shape(a, b, name_a: str = "a", name_b: str = "b") -> None:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"{name_a} and {name_b} must share a shape: {a.shape} vs {b.shape}")


def check_rng_seed(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
