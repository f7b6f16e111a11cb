"""Kernel ridge regression, leave-one-out influence, and stability bounds.

Influence of a training point is the change in squared test loss caused by
retraining without it. The leave-one-out solution is obtained exactly from
the cached inverse of (K + lambda I) by block elimination (no
refactorization): with B = (K + lambda I)^-1 and alpha = B y, the coefficient
vector after deleting row and column i is alpha - B[:, i] (alpha_i / B_ii)
restricted off i. Every numerical claim about the regularized solve is
guarded by the four-assertion stability report (min eigenvalue, conditioning,
inversion accuracy, symmetry).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator

from .exceptions import (
    BadLambda,
    BoundInapplicable,
    CannotLeaveOneOut,
    IllConditioned,
    ShapeError,
)
from .ntk import infinite_relu_ntk
from .validation import as_matrix

STABILITY_MIN_EIG = -1e-12
STABILITY_MAX_COND = 1e12
STABILITY_RESIDUAL_TOL = 1e-12  # relative to ||K||_F


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of the four numerical-stability assertions on a kernel."""

    min_eig: float
    cond_number: float
    inversion_residual: float
    symmetry_residual: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "min_eig": self.min_eig,
            "cond_number": self.cond_number,
            "inversion_residual": self.inversion_residual,
            "symmetry_residual": self.symmetry_residual,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class BoundCheck:
    """A measured quantity against its theoretical bound."""

    measured: float
    bound: float
    holds: bool


def stability_check(K: np.ndarray, lam: float) -> StabilityReport:
    """Evaluate the four stability assertions for a regularized kernel solve.

    Checks min eigenvalue > -1e-12, condition number of K + lambda I below
    1e12, inversion residual and asymmetry below 1e-12 relative to ||K||_F.
    Failures are reported, not raised.
    """
    K = as_matrix(K, "K")
    if K.shape[0] != K.shape[1]:
        raise ShapeError(f"kernel must be square, got {K.shape}")
    scale = float(np.linalg.norm(K))
    symmetry_residual = float(np.linalg.norm(K - K.T))
    sym_ok = symmetry_residual < STABILITY_RESIDUAL_TOL * scale

    Ks = 0.5 * (K + K.T)
    eigs = np.linalg.eigvalsh(Ks)
    min_eig = float(eigs[0])
    reg = eigs + lam
    cond = float(reg[-1] / reg[0]) if reg[0] > 0 else float("inf")

    A = Ks + lam * np.eye(K.shape[0])
    try:
        B = scipy.linalg.inv(A)
        inversion_residual = float(np.linalg.norm(B @ A - np.eye(K.shape[0])))
    except scipy.linalg.LinAlgError:
        inversion_residual = float("inf")

    passed = (
        min_eig > STABILITY_MIN_EIG
        and cond < STABILITY_MAX_COND
        and inversion_residual < STABILITY_RESIDUAL_TOL * scale
        and sym_ok
    )
    return StabilityReport(
        min_eig=min_eig,
        cond_number=cond,
        inversion_residual=inversion_residual,
        symmetry_residual=symmetry_residual,
        passed=bool(passed),
    )


class KernelRidge(BaseEstimator):
    """Ridge regression on a precomputed kernel matrix.

    Solves (K + lam I) alpha = Y columnwise, so multi-class one-hot targets
    are handled by the same factorization as a single target vector. The
    inverse of the regularized kernel is cached for exact leave-one-out
    influence computation.

    Parameters
    ----------
    lam : float, default=1e-3
        Regularization strength (must be positive).
    kernel_kind : str, default="precomputed"
        Tag describing where the kernel came from; carried into reports.
    check_stability : bool, default=True
        Run the stability assertions before solving and refuse to fit an
        unstable system.

    Attributes
    ----------
    alpha_ : ndarray of shape (n,) or (n, C)
        Solution of the regularized system.
    K_reg_inverse_ : ndarray of shape (n, n)
        Cached (K + lam I)^-1.
    stability_ : StabilityReport
        Report of the pre-solve assertions.
    y_norm_ : float
        Euclidean (Frobenius) norm of the training targets.
    """

    def __init__(self, lam: float = 1e-3, kernel_kind: str = "precomputed",
                 check_stability: bool = True):
        self.lam = lam
        self.kernel_kind = kernel_kind
        self.check_stability = check_stability

    def fit(self, K, y):
        if self.lam <= 0:
            raise BadLambda(f"lam must be positive, got {self.lam}")
        K = as_matrix(K, "K")
        if K.shape[0] != K.shape[1]:
            raise ShapeError(f"kernel must be square, got {K.shape}")
        y = np.asarray(y, dtype=np.float64)
        if y.shape[0] != K.shape[0]:
            raise ShapeError(f"targets have {y.shape[0]} rows for kernel size {K.shape[0]}")
        self.stability_ = stability_check(K, self.lam)
        if self.check_stability and not self.stability_.passed:
            raise IllConditioned(
                f"kernel failed stability checks: {self.stability_.to_dict()}"
            )
        A = K + self.lam * np.eye(K.shape[0])
        cho = scipy.linalg.cho_factor(0.5 * (A + A.T), lower=True)
        self.alpha_ = scipy.linalg.cho_solve(cho, y)
        self.K_reg_inverse_ = scipy.linalg.cho_solve(cho, np.eye(K.shape[0]))
        self.y_fit_ = y
        self.y_norm_ = float(np.linalg.norm(y))
        self.n_samples_ = K.shape[0]
        return self

    def predict(self, k_test) -> np.ndarray:
        """Predict from cross-kernel rows k(x, x_train): k_test @ alpha."""
        k_test = np.asarray(k_test, dtype=np.float64)
        if k_test.ndim == 1:
            k_test = k_test[None, :]
        if k_test.shape[1] != self.n_samples_:
            raise ShapeError(
                f"cross-kernel has {k_test.shape[1]} columns for {self.n_samples_} samples"
            )
        return k_test @ self.alpha_

    def loo_influence(self, k_test, y_test) -> np.ndarray:
        """Influence of each training point on the loss at one test point.

        Returns I_i = 0.5 [ (f_wo_i(x) - y)^2 - (f(x) - y)^2 ] with f_wo_i the
        exact leave-one-out predictor; positive scores mark points whose
        removal increases test loss (helpful examples). Vector targets use the
        summed squared error over components.
        """
        if self.n_samples_ < 2:
            raise CannotLeaveOneOut("need at least two training points")
        k_test = np.asarray(k_test, dtype=np.float64).reshape(-1)
        if k_test.shape[0] != self.n_samples_:
            raise ShapeError(
                f"cross-kernel row has {k_test.shape[0]} entries for {self.n_samples_} samples"
            )
        alpha = self.alpha_ if self.alpha_.ndim == 2 else self.alpha_[:, None]
        y_test = np.atleast_1d(np.asarray(y_test, dtype=np.float64))
        if y_test.shape[0] != alpha.shape[1]:
            raise ShapeError(
                f"test target has {y_test.shape[0]} components for "
                f"{alpha.shape[1]} fitted outputs"
            )
        B = self.K_reg_inverse_
        diag = np.diag(B)
        # c_i = k_test^T B[:, i]; deleting i shifts the prediction by
        # -c_i * alpha_i / B_ii (block elimination on the cached inverse).
        c = B @ k_test
        f_full = alpha.T @ k_test
        f_loo = f_full[None, :] - (c / diag)[:, None] * alpha
        loss_full = float(np.sum((f_full - y_test) ** 2))
        loss_loo = np.sum((f_loo - y_test[None, :]) ** 2, axis=1)
        return 0.5 * (loss_loo - loss_full)


def krr_fit(K: np.ndarray, y: np.ndarray, lam: float,
            kernel_kind: str = "precomputed") -> KernelRidge:
    """Fit a precomputed-kernel ridge model (see :class:`KernelRidge`)."""
    return KernelRidge(lam=lam, kernel_kind=kernel_kind).fit(K, y)


def krr_predict(k_test: np.ndarray, model: KernelRidge) -> np.ndarray:
    """Predict from cross-kernel rows with a fitted model."""
    return model.predict(k_test)


def loo_influence(K: np.ndarray, y: np.ndarray, lam: float,
                  k_test: np.ndarray, y_test) -> np.ndarray:
    """One-shot leave-one-out influence scores (see KernelRidge.loo_influence)."""
    return krr_fit(K, y, lam).loo_influence(k_test, y_test)


def loo_influence_refit(K: np.ndarray, y: np.ndarray, lam: float,
                        k_test: np.ndarray, y_test) -> np.ndarray:
    """Brute-force influence oracle: rebuild each (n-1)-point system explicitly.

    Slow path used to validate the block-elimination route; kept independent
    of the cached-inverse shortcut.
    """
    K = as_matrix(K, "K")
    n = K.shape[0]
    if n < 2:
        raise CannotLeaveOneOut("need at least two training points")
    y = np.asarray(y, dtype=np.float64)
    k_test = np.asarray(k_test, dtype=np.float64).reshape(-1)
    y_test = np.atleast_1d(np.asarray(y_test, dtype=np.float64))
    full = KernelRidge(lam=lam, check_stability=False).fit(K, y)
    f_full = np.atleast_1d(full.predict(k_test)[0])
    loss_full = float(np.sum((f_full - y_test) ** 2))
    scores = np.empty(n)
    for i in range(n):
        keep = np.arange(n) != i
        sub = KernelRidge(lam=lam, check_stability=False).fit(
            K[np.ix_(keep, keep)], y[keep]
        )
        f_wo = np.atleast_1d(sub.predict(k_test[keep])[0])
        scores[i] = 0.5 * (float(np.sum((f_wo - y_test) ** 2)) - loss_full)
    return scores


def resolvent_bound_check(K: np.ndarray, dK: np.ndarray, lam: float) -> BoundCheck:
    """Check the resolvent perturbation bound eps / (lam (lam - eps)).

    ``measured`` is the spectral norm of the inverse difference
    (K + lam I)^-1 - (K + dK + lam I)^-1 and ``eps`` the spectral norm of the
    perturbation; the bound is void once eps reaches lam.
    """
    K = as_matrix(K, "K")
    dK = as_matrix(dK, "dK")
    if K.shape != dK.shape or K.shape[0] != K.shape[1]:
        raise ShapeError(f"K and dK must be square and matched: {K.shape} vs {dK.shape}")
    if lam <= 0:
        raise BadLambda(f"lam must be positive, got {lam}")
    eps = float(np.linalg.norm(dK, 2))
    if eps >= lam:
        raise BoundInapplicable(f"||dK||_2 = {eps:.3e} >= lam = {lam:.3e}")
    n = K.shape[0]
    inv_a = scipy.linalg.inv(K + lam * np.eye(n))
    inv_b = scipy.linalg.inv(K + dK + lam * np.eye(n))
    measured = float(np.linalg.norm(inv_a - inv_b, 2))
    bound = eps / (lam * (lam - eps))
    return BoundCheck(measured=measured, bound=bound, holds=bool(measured <= bound))


def intrinsic_sensitivity(L_K: float, y_norm: float, lam: float) -> float:
    """Protocol-free influence sensitivity L_K ||y||_2 / lam^2."""
    if lam <= 0:
        raise BadLambda(f"lam must be positive, got {lam}")
    if L_K < 0 or y_norm < 0:
        raise ValueError("L_K and y_norm must be non-negative")
    return float(L_K * y_norm / lam**2)


# --- kernel evaluators -----------------------------------------------------
#
# A kernel evaluator is a pairwise callable (U, V) -> block of kernel values,
# with the training set frozen into the function. This is the object the
# Lipschitz and sensitivity checks perturb: the kernel *function* stays fixed
# while its argument moves.


def attention_kernel_fn(X: np.ndarray) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Evaluator of the Gram-induced attention kernel K(u, v) = u^T (X^T X)^2 v.

    On training rows this reproduces the matrix cube: K(x_i, x_j) = [G^3]_ij.
    """
    X = as_matrix(X)
    M = np.linalg.matrix_power(X.T @ X, 2)

    def evaluate(U: np.ndarray, V: np.ndarray) -> np.ndarray:
        return np.atleast_2d(U) @ M @ np.atleast_2d(V).T

    return evaluate


def linear_kernel_fn() -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Plain inner-product (Gram) kernel evaluator."""

    def evaluate(U: np.ndarray, V: np.ndarray) -> np.ndarray:
        return np.atleast_2d(U) @ np.atleast_2d(V).T

    return evaluate


def arccos_kernel_fn() -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Infinite-width ReLU NTK evaluator (see :func:`infinite_relu_ntk`)."""

    def evaluate(U: np.ndarray, V: np.ndarray) -> np.ndarray:
        return infinite_relu_ntk(np.atleast_2d(U), np.atleast_2d(V))

    return evaluate


_ANALYTIC_KINDS = ("attention", "gram", "arccos")


def analytic_lipschitz_bound(kind: str, X: np.ndarray) -> float:
    """Analytic bound on the kernel-vector Lipschitz constant L_K.

    Attention: n ||G||_2, the data-dependent constant driving the sensitivity
    gap. Gram and arc-cosine kernels have a per-entry constant of 1 on
    unit-norm data, aggregating to sqrt(n) over the kernel vector.
    """
    if kind not in _ANALYTIC_KINDS:
        raise ValueError(f"kind must be one of {_ANALYTIC_KINDS}, got {kind!r}")
    X = as_matrix(X)
    n = X.shape[0]
    if kind == "attention":
        lam1 = float(np.linalg.eigvalsh(X @ X.T)[-1])
        return n * lam1
    return float(np.sqrt(n))


@dataclass(frozen=True)
class LipschitzEstimate:
    empirical_L: float
    analytic_bound: float


def kernel_lipschitz(
    kernel_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    X: np.ndarray,
    eps: float,
    trials: int,
    seed: int,
    kind: str = "attention",
) -> LipschitzEstimate:
    """Sample the kernel-vector Lipschitz constant against its analytic bound.

    Each trial perturbs a random training row by a random direction of norm
    eps and records ||k(x + delta) - k(x)||_2 / eps, where k(x) is the
    cross-kernel vector against the training set.
    """
    X = as_matrix(X)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    rng = np.random.default_rng(seed)
    n, d = X.shape
    worst = 0.0
    for _ in range(trials):
        i = int(rng.integers(n))
        delta = rng.standard_normal(d)
        delta *= eps / np.linalg.norm(delta)
        k0 = kernel_fn(X[i], X).reshape(-1)
        k1 = kernel_fn(X[i] + delta, X).reshape(-1)
        worst = max(worst, float(np.linalg.norm(k1 - k0)) / eps)
    return LipschitzEstimate(
        empirical_L=worst, analytic_bound=analytic_lipschitz_bound(kind, X)
    )


def attention_entry_bound(X: np.ndarray, j: int) -> float:
    """Per-entry sensitivity constant of the attention kernel at column j.

    |K(x_i + delta, x_j) - K(x_i, x_j)| <= ||G (X x_j)||_1 * ||delta||_2; on
    training rows X x_j is the j-th Gram column, so the constant is
    ||G^2 e_j||_1.
    """
    X = as_matrix(X)
    G = X @ X.T
    return float(np.linalg.norm(G @ (X @ X[j]), 1))


def prediction_sensitivity_check(
    model: KernelRidge,
    kernel_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    X_train: np.ndarray,
    x: np.ndarray,
    eps: float,
    trials: int,
    L_K: float,
    seed: int,
) -> BoundCheck:
    """Check |f(x + delta) - f(x)| <= eps L_K ||y||_2 / lam over sampled deltas."""
    X_train = as_matrix(X_train)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    rng = np.random.default_rng(seed)
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    f0 = model.predict(kernel_fn(x, X_train))
    measured = 0.0
    for _ in range(trials):
        delta = rng.standard_normal(x.shape[0])
        if eps > 0:
            delta *= eps / np.linalg.norm(delta)
        else:
            delta[:] = 0.0
        f1 = model.predict(kernel_fn(x + delta, X_train))
        measured = max(measured, float(np.linalg.norm(f1 - f0)))
    bound = eps * L_K * model.y_norm_ / model.lam
    return BoundCheck(measured=measured, bound=float(bound), holds=bool(measured <= bound))


def influence_vector_sensitivity_check(
    K: np.ndarray,
    y: np.ndarray,
    lam: float,
    kernel_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    X_train: np.ndarray,
    index: int,
    eps: float,
    trials: int,
    L_K: float,
    seed: int,
) -> BoundCheck:
    """Check the influence-vector bound ||Delta I||_inf <= 2 eps L_K ||y||_2 / lam^2.

    The influence vector here is (K + lam I)^-1 y; perturbing training row
    ``index`` rebuilds its kernel row, column, and diagonal entry through the
    frozen kernel function.
    """
    K = as_matrix(K, "K")
    X_train = as_matrix(X_train)
    y = np.asarray(y, dtype=np.float64)
    if lam <= 0:
        raise BadLambda(f"lam must be positive, got {lam}")
    n = K.shape[0]
    rng = np.random.default_rng(seed)
    A = K + lam * np.eye(n)
    base = scipy.linalg.solve(A, y, assume_a="pos")
    measured = 0.0
    for _ in range(trials):
        delta = rng.standard_normal(X_train.shape[1])
        if eps > 0:
            delta *= eps / np.linalg.norm(delta)
        else:
            delta[:] = 0.0
        x_new = X_train[index] + delta
        K_pert = K.copy()
        row = kernel_fn(x_new, X_train).reshape(-1)
        K_pert[index, :] = row
        K_pert[:, index] = row
        K_pert[index, index] = float(kernel_fn(x_new, x_new).reshape(()))
        pert = scipy.linalg.solve(K_pert + lam * np.eye(n), y, assume_a="pos")
        measured = max(measured, float(np.max(np.abs(pert - base))))
    bound = 2.0 * eps * L_K * float(np.linalg.norm(y)) / lam**2
    return BoundCheck(measured=measured, bound=float(bound), holds=bool(measured <= bound))


def bias_decomposition(K: np.ndarray, target: np.ndarray, lam: float) -> float:
    """Squared bias of kernel ridge regression on the given target.

    Eigendecomposes K and evaluates sum_k lam^2 w_k^2 / (mu_k + lam)^2 with
    w_k the target's coefficient along eigenvector k.
    """
    K = as_matrix(K, "K")
    if K.shape[0] != K.shape[1]:
        raise ShapeError(f"kernel must be square, got {K.shape}")
    if lam < 0:
        raise BadLambda(f"lam must be non-negative, got {lam}")
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if target.shape[0] != K.shape[0]:
        raise ShapeError(f"target length {target.shape[0]} != kernel size {K.shape[0]}")
    mu, V = np.linalg.eigh(0.5 * (K + K.T))
    mu = np.clip(mu, 0.0, None)
    w = V.T @ target
    return float(np.sum(lam**2 * w**2 / (mu + lam) ** 2))
