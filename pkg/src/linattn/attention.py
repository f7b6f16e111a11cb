"""Linearized attention and its exact Gram-induced kernel.

The central objects: the parameter-free transform X -> X X^T X, whose induced
kernel on unit-norm rows is the matrix cube G^3 of the Gram matrix G = X X^T,
the elementwise polynomial kernel it is often confused with, the QKV-projected
generalization, and a softmax reference for measuring how good the first-order
approximation actually is.

All transforms are transductive: a query point's feature is built from inner
products against the full training matrix, never against a mini-batch.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import BadDegree, DegenerateRow, OracleSizeExceeded, RankWarning, ShapeError
from .validation import as_matrix, check_data_matrix

BRUTE_FORCE_MAX_N = 256


def linearized_attention(X: np.ndarray, scale: float | None = None) -> np.ndarray:
    """Apply the transform whose row i is sum_k (x_i^T x_k) x_k.

    In matrix form this is (X X^T) X. ``scale`` optionally multiplies the
    output (e.g. 1/(n sqrt(d)) recovers the constants dropped when reading
    the transform off the softmax expansion); default is the raw product.
    """
    X = as_matrix(X)
    out = (X @ X.T) @ X
    if scale is not None:
        out = scale * out
    return out


def row_normalize(F: np.ndarray) -> np.ndarray:
    """Rescale every row to unit Euclidean norm."""
    F = as_matrix(F, "F")
    norms = np.linalg.norm(F, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        row = int(np.argmin(norms[:, 0]))
        raise DegenerateRow(f"row {row} has zero norm and cannot be normalized")
    return F / norms


def gram(X: np.ndarray) -> np.ndarray:
    """Gram matrix G = X X^T of pairwise inner products."""
    X = as_matrix(X)
    return X @ X.T


def attention_kernel(X: np.ndarray) -> np.ndarray:
    """Kernel induced by linearized attention on unit-norm rows: K = G^3."""
    X = check_data_matrix(X, unit_rows=True)
    G = X @ X.T
    return G @ G @ G


def attention_kernel_bruteforce(X: np.ndarray) -> np.ndarray:
    """Literal double sum sum_{k,l} (x_i.x_k)(x_k.x_l)(x_l.x_j).

    O(n^4) oracle for :func:`attention_kernel`; guarded to small n.
    """
    X = check_data_matrix(X, unit_rows=True)
    n = X.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise OracleSizeExceeded(f"brute-force kernel limited to n <= {BRUTE_FORCE_MAX_N}")
    dots = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            dots[i, j] = float(np.dot(X[i], X[j]))
    K = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                for l in range(n):
                    acc += dots[i, k] * dots[k, l] * dots[l, j]
            K[i, j] = acc
    return K


def polynomial_kernel(X: np.ndarray, p: int) -> np.ndarray:
    """Elementwise polynomial kernel K_ij = (x_i^T x_j)^p (Hadamard power)."""
    if not isinstance(p, (int, np.integer)) or p < 1:
        raise BadDegree(f"degree must be a positive integer, got {p!r}")
    X = as_matrix(X)
    return (X @ X.T) ** p


def qkv_attention_kernel(
    X: np.ndarray, Wq: np.ndarray, Wk: np.ndarray, Wv: np.ndarray
) -> np.ndarray:
    """Kernel of linearized attention with query/key/value projections.

    K_ij = sum_{k,l} (x_i^T M_QK x_k)(x_j^T M_QK x_l)(x_k^T M_VV x_l) with
    M_QK = Wq Wk^T and M_VV = Wv Wv^T; identity projections recover
    :func:`attention_kernel`. Rank-deficient projections only warn.
    """
    X = as_matrix(X)
    d = X.shape[1]
    for name, W in (("Wq", Wq), ("Wk", Wk), ("Wv", Wv)):
        W = np.asarray(W, dtype=np.float64)
        if W.shape != (d, d):
            raise ShapeError(f"{name} must be {d}x{d}, got {W.shape}")
        if np.linalg.matrix_rank(W) < d:
            warnings.warn(f"{name} is rank deficient", RankWarning, stacklevel=2)
    Wq, Wk, Wv = (np.asarray(W, dtype=np.float64) for W in (Wq, Wk, Wv))
    A = X @ (Wq @ Wk.T) @ X.T
    B = X @ (Wv @ Wv.T) @ X.T
    return A @ B @ A.T


def softmax_attention(X: np.ndarray, scale: float | None = None) -> np.ndarray:
    """Softmax attention rows: softmax(scale * X X^T) X.

    ``scale`` defaults to 1/sqrt(d). The weight matrix is row-stochastic.
    """
    X = as_matrix(X)
    if scale is None:
        scale = 1.0 / np.sqrt(X.shape[1])
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    A = scale * (X @ X.T)
    A = A - A.max(axis=1, keepdims=True)
    W = np.exp(A)
    W /= W.sum(axis=1, keepdims=True)
    return W @ X


def taylor_error(X: np.ndarray, scale: float) -> float:
    """Frobenius gap between softmax attention and its first-order expansion.

    The expansion keeps the mean-centering term: row i of the approximation is
    (1/n) sum_j (1 + A_ij - rowmean(A)_i) x_j with A = scale * X X^T. The gap
    shrinks quadratically in the attention-score magnitude.
    """
    X = as_matrix(X)
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    n = X.shape[0]
    A = scale * (X @ X.T)
    weights = (1.0 + A - A.mean(axis=1, keepdims=True)) / n
    approx = weights @ X
    exact = softmax_attention(X, scale)
    return float(np.linalg.norm(exact - approx))


class LinearizedAttention(TransformerMixin, BaseEstimator):
    """Transductive linearized-attention feature map.

    ``fit`` memorizes the training matrix; ``transform`` maps any query rows
    to sum_k (q^T x_k) x_k over the stored training rows, so transforming the
    training matrix itself reproduces (X X^T) X exactly.

    Parameters
    ----------
    normalize : bool, default=True
        Rescale transformed rows to unit norm, the form consumed by the MLP.
    scale : float or None, default=None
        Optional multiplier on the raw transform (applied before
        normalization, where it cancels).
    """

    def __init__(self, normalize: bool = True, scale: float | None = None):
        self.normalize = normalize
        self.scale = scale

    def fit(self, X, y=None):
        self.X_fit_ = check_data_matrix(X)
        return self

    def transform(self, X) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != self.X_fit_.shape[1]:
            raise ShapeError(
                f"query dimension {X.shape[1]} != training dimension {self.X_fit_.shape[1]}"
            )
        out = (X @ self.X_fit_.T) @ self.X_fit_
        if self.scale is not None:
            out = self.scale * out
        if self.normalize:
            out = row_normalize(out)
        return out
