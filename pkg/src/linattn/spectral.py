"""Spectral transfer, condition-number amplification, and width formulas.

Stacking k linearized-attention layers turns the Gram matrix G into G^(2k+1),
so the condition number is raised to the same power. The helpers here verify
that numerically, compute (rank-restricted) condition numbers, and evaluate
the nominal width-requirement and concentration formulas with all unstated
absolute constants set to 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import BadTolerance, ZeroMatrix
from .validation import as_matrix, check_symmetric

SPECTRAL_TRANSFER_MAX_POWER = 4
RANK_DEFICIENT_TOL = 1e-10


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted non-increasing, with the numerical rank."""

    values: np.ndarray
    effective_rank: int
    tol: float


@dataclass(frozen=True)
class ConditioningReport:
    """Measured vs predicted condition number of the powered Gram matrix."""

    kappa_G: float
    kappa_Gtilde: float
    predicted: float
    layers: int
    relative_error: float
    rank_deficient: bool = False

    def to_dict(self) -> dict:
        return {
            "kappa_G": self.kappa_G,
            "kappa_Gtilde": self.kappa_Gtilde,
            "predicted": self.predicted,
            "layers": self.layers,
            "relative_error": self.relative_error,
            "rank_deficient": self.rank_deficient,
        }


def spectrum(M: np.ndarray, tol: float = 1e-10) -> Spectrum:
    """Eigenvalues of a symmetric matrix, sorted descending.

    Negative values within roundoff of zero (relative to the top eigenvalue)
    are clamped to 0. The effective rank counts values above tol * max.
    """
    M = check_symmetric(M)
    vals = np.linalg.eigvalsh(M)[::-1].copy()
    top = float(vals[0]) if vals.size else 0.0
    if top > 0:
        vals[(vals < 0) & (vals >= -tol * top)] = 0.0
    effective_rank = int(np.sum(vals > tol * max(top, 0.0))) if top > 0 else 0
    return Spectrum(values=vals, effective_rank=effective_rank, tol=tol)


def condition_number(s: Spectrum, restrict_to_rank: int | None = None) -> float:
    """Ratio of the largest eigenvalue to the r-th largest.

    Without a restriction this is the plain condition number over the full
    spectrum, with an infinity sentinel when the smallest eigenvalue is zero.
    Passing ``restrict_to_rank`` (e.g. the effective rank) gives the ratio of
    the largest to the smallest retained eigenvalue, the effective condition
    number of the restriction onto the top-r eigenspace.
    """
    vals = s.values
    if vals.size == 0 or float(vals[0]) <= 0.0:
        raise ZeroMatrix("condition number undefined for an all-zero spectrum")
    if restrict_to_rank is not None:
        if restrict_to_rank < 1 or restrict_to_rank > vals.size:
            raise ValueError(f"restrict_to_rank must be in [1, {vals.size}]")
        denom = float(vals[restrict_to_rank - 1])
    else:
        denom = float(vals[-1])
    if denom <= 0.0:
        return float("inf")
    return float(vals[0]) / denom


def verify_spectral_transfer(X: np.ndarray, k: int) -> float:
    """Max-abs residual of X (X^T X)^k X^T - (X X^T)^(k+1)."""
    X = as_matrix(X)
    if k < 0 or k > SPECTRAL_TRANSFER_MAX_POWER:
        raise ValueError(f"k must be in [0, {SPECTRAL_TRANSFER_MAX_POWER}], got {k}")
    left = X @ np.linalg.matrix_power(X.T @ X, k) @ X.T
    right = np.linalg.matrix_power(X @ X.T, k + 1)
    return float(np.max(np.abs(left - right)))


def verify_cubic_conditioning(X: np.ndarray, layers: int = 1) -> ConditioningReport:
    """Compare the measured condition number of G^(2k+1) with kappa(G)^(2k+1).

    Full-rank inputs use the plain condition number; rank-deficient Gram
    matrices (smallest eigenvalue <= 1e-10 * largest) fall back to the
    effective condition number over the numerical rank and flag the report.
    """
    if layers < 1:
        raise ValueError(f"layers must be >= 1, got {layers}")
    X = as_matrix(X)
    G = X @ X.T
    exponent = 2 * layers + 1
    s_G = spectrum(G)
    rank_deficient = (
        s_G.values[-1] <= RANK_DEFICIENT_TOL * s_G.values[0] or X.shape[0] > X.shape[1]
    )
    restrict = s_G.effective_rank if rank_deficient else None
    kappa_G = condition_number(s_G, restrict_to_rank=restrict)
    Gt = np.linalg.matrix_power(G, exponent)
    # force exact symmetry; repeated products accumulate tiny asymmetry
    Gt = 0.5 * (Gt + Gt.T)
    kappa_Gt = condition_number(spectrum(Gt), restrict_to_rank=restrict)
    predicted = kappa_G**exponent
    rel = abs(kappa_Gt - predicted) / predicted
    return ConditioningReport(
        kappa_G=float(kappa_G),
        kappa_Gtilde=float(kappa_Gt),
        predicted=float(predicted),
        layers=layers,
        relative_error=float(rel),
        rank_deficient=bool(rank_deficient),
    )


def width_requirement(kappa_G: float, n: int, eps: float) -> float:
    """Nominal width needed for the attention NTK to concentrate:
    kappa^6 * n * ln(n) / eps^2 (absolute constant taken as 1)."""
    if not 0.0 < eps < 1.0:
        raise BadTolerance(f"eps must lie in (0, 1), got {eps}")
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if kappa_G < 1.0:
        raise ValueError(f"condition number must be >= 1, got {kappa_G}")
    return float(kappa_G**6 * n * np.log(n) / eps**2)


def bernstein_deviation(lambda1: float, n: int, m: int) -> float:
    """Nominal matrix-concentration deviation of a width-m empirical NTK:
    lambda1^3 (sqrt(n ln n / m) + ln(n) / m)."""
    if m < 1:
        raise ValueError(f"width must be >= 1, got {m}")
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    logn = np.log(n)
    return float(lambda1**3 * np.sqrt(n * logn / m) + lambda1**3 * logn / m)
