"""Empirical and infinite-width neural tangent kernels.

Only the first layer of the two-layer ReLU network trains (the sign outputs
are fixed), so the NTK is the Gram matrix of first-layer gradient features:
K_ij = (1/m) sum_r 1[w_r.f_i > 0] 1[w_r.f_j > 0] <f_i, f_j>. As the width
grows this converges to the arc-cosine expression <f_i, f_j> (pi - theta_ij)
/ (2 pi); a Monte Carlo estimator of the Gaussian expectation is kept
alongside as the independent check of that closed form. The sequential kernel
is the same expectation evaluated on linearized-attention features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import LinearizedAttention
from .exceptions import DegenerateRow, ShapeError
from .validation import as_matrix


@dataclass(frozen=True)
class NetworkParams:
    """First-layer weights plus fixed sign outputs of the two-layer network."""

    W: np.ndarray
    a: np.ndarray
    init_scale: float

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        a = np.asarray(self.a, dtype=np.float64)
        if W.ndim != 2:
            raise ShapeError(f"W must be 2-D, got shape {W.shape}")
        if a.shape[0] != W.shape[0]:
            raise ShapeError(f"a has {a.shape[0]} entries for width {W.shape[0]}")
        if not np.all(np.abs(a) == 1.0):
            raise ValueError("output signs must be exactly +1 or -1")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "a", a)

    @property
    def width(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @property
    def n_outputs(self) -> int:
        return 1 if self.a.ndim == 1 else self.a.shape[1]


@dataclass(frozen=True)
class NTKDistanceCurve:
    """Prediction distance between finite-width nets and the kernel predictor."""

    widths: list[int]
    distances: list[float]
    architecture: str
    dataset: str = ""
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.widths) != len(self.distances):
            raise ShapeError("widths and distances must have equal length")
        if any(b <= a for a, b in zip(self.widths, self.widths[1:])):
            raise ValueError("widths must be strictly increasing")

    def to_records(self) -> list[dict]:
        return [
            {
                "width": w,
                "distance": d,
                "architecture": self.architecture,
                "dataset": self.dataset,
                "seed": self.seed,
            }
            for w, d in zip(self.widths, self.distances)
        ]


def _activation_indicators(W: np.ndarray, F: np.ndarray) -> np.ndarray:
    # sigma'(0) := 0, so the indicator is strict
    return (F @ W.T > 0.0).astype(np.float64)


def empirical_ntk(
    params: NetworkParams, F: np.ndarray, F2: np.ndarray | None = None
) -> np.ndarray:
    """Finite-width NTK block between feature rows F and F2 (default F).

    Entries are (1/m) sum_r 1[w_r.f > 0] 1[w_r.f' > 0] <f, f'>; the fixed
    signs enter squared and drop out.
    """
    F = as_matrix(F, "F")
    if F.shape[1] != params.dim:
        raise ShapeError(f"feature dim {F.shape[1]} != weight dim {params.dim}")
    F2 = F if F2 is None else as_matrix(F2, "F2")
    if F2.shape[1] != params.dim:
        raise ShapeError(f"feature dim {F2.shape[1]} != weight dim {params.dim}")
    Z1 = _activation_indicators(params.W, F)
    Z2 = Z1 if F2 is F else _activation_indicators(params.W, F2)
    return (Z1 @ Z2.T) * (F @ F2.T) / params.width


def infinite_relu_ntk(F: np.ndarray, F2: np.ndarray | None = None) -> np.ndarray:
    """Closed-form infinite-width NTK: <f, f'> (pi - theta) / (2 pi).

    theta is the angle between the feature rows, with cosines clamped to
    [-1, 1] before arccos to absorb roundoff. The expression is the Gaussian
    expectation of the indicator product; validated against :func:`mc_ntk`.
    """
    F = as_matrix(F, "F")
    G = F if F2 is None else as_matrix(F2, "F2")
    if G.shape[1] != F.shape[1]:
        raise ShapeError(f"feature dims differ: {F.shape[1]} vs {G.shape[1]}")
    norms_f = np.linalg.norm(F, axis=1)
    norms_g = np.linalg.norm(G, axis=1)
    if np.any(norms_f == 0.0) or np.any(norms_g == 0.0):
        raise DegenerateRow("zero feature rows have no angle")
    inner = F @ G.T
    cos = np.clip(inner / np.outer(norms_f, norms_g), -1.0, 1.0)
    theta = np.arccos(cos)
    return inner * (np.pi - theta) / (2.0 * np.pi)


def mc_ntk(
    F: np.ndarray, samples: int, seed: int, F2: np.ndarray | None = None
) -> np.ndarray:
    """Monte Carlo estimate of the infinite-width NTK from fresh Gaussian weights."""
    F = as_matrix(F, "F")
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((samples, F.shape[1]))
    a = np.ones(samples)
    a[1::2] = -1.0
    return empirical_ntk(NetworkParams(W=W, a=a, init_scale=1.0), F, F2)


def sequential_ntk(
    X: np.ndarray, normalize: bool = True, X_query: np.ndarray | None = None
) -> np.ndarray:
    """Infinite-width NTK of the attention-then-MLP architecture.

    Features are the transductive linearized-attention rows (optionally
    row-normalized, the form the MLP consumes). With ``X_query`` the cross
    block between query and training features is returned.
    """
    fmap = LinearizedAttention(normalize=normalize).fit(X)
    F = fmap.transform(X)
    if X_query is None:
        return infinite_relu_ntk(F)
    return infinite_relu_ntk(fmap.transform(X_query), F)


def ntk_distance(pred_finite: np.ndarray, pred_kernel: np.ndarray) -> float:
    """Frobenius distance between two prediction matrices of equal shape."""
    a = np.asarray(pred_finite, dtype=np.float64)
    b = np.asarray(pred_kernel, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"prediction shapes differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))
