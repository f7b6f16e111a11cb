"""Influence-malleability metrics and data-intervention strategies.

The protocol: score every training point's influence on held-out loss,
select the high-influence set above the (1 - tau) quantile, perturb those
points within an L-infinity budget, recompute influence, and measure how the
scores moved: the sign flip rate over the selected set, Spearman correlation
of the full rankings, top-K overlap, and the Monte Carlo malleability mean
|I(x) - I(x + delta)|.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.stats

from .attacks import AttackConfig, GradientProvider, run_attack
from .datasets import LabeledDataset
from .exceptions import (
    BadK,
    BadLambda,
    BadThreshold,
    DegenerateRanking,
    EmptySelection,
    ShapeError,
)
from .validation import as_vector, check_data_matrix

INTERVENTION_KINDS = ("curated", "transformed", "adversarial")


@dataclass(frozen=True)
class HighInfluenceSet:
    """Indices whose influence strictly exceeds the selection quantile."""

    indices: np.ndarray
    tau: float
    quantile_value: float

    def __len__(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class MalleabilityReport:
    flip_rate: float
    spearman_rho: float
    topk_stability: float
    mu_M: float
    intrinsic_S: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "flip_rate": self.flip_rate,
            "spearman_rho": self.spearman_rho,
            "topk_stability": self.topk_stability,
            "mu_M": self.mu_M,
            "intrinsic_S": self.intrinsic_S,
            "metadata": self.metadata,
        }


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo mean with its standard error."""

    value: float
    stderr: float
    trials: int


@dataclass(frozen=True)
class SensitivityGap:
    s_att: float
    s_relu: float
    ratio: float


def select_high_influence(scores: np.ndarray, tau: float) -> HighInfluenceSet:
    """Points whose influence strictly exceeds the nearest-rank (1-tau) quantile.

    Ties at the cut are excluded, so a constant score vector selects nothing.
    """
    if not 0.0 < tau < 1.0:
        raise BadThreshold(f"tau must lie in (0, 1), got {tau}")
    scores = as_vector(scores, "scores")
    n = scores.size
    rank = int(np.ceil((1.0 - tau) * n))
    rank = min(max(rank, 1), n)
    cut = float(np.sort(scores)[rank - 1])
    indices = np.flatnonzero(scores > cut)
    return HighInfluenceSet(indices=indices, tau=tau, quantile_value=cut)


def flip_rate(I_orig: np.ndarray, I_adv: np.ndarray, H: HighInfluenceSet) -> float:
    """Fraction of the selected set whose influence sign strictly reversed.

    A flip means the product of signs is negative; exact zeros never flip.
    """
    I_orig = as_vector(I_orig, "I_orig")
    I_adv = as_vector(I_adv, "I_adv")
    if I_orig.shape != I_adv.shape:
        raise ShapeError(f"score vectors differ in length: {I_orig.shape} vs {I_adv.shape}")
    if len(H) == 0:
        raise EmptySelection("flip rate needs a nonempty high-influence set")
    flips = np.sign(I_orig[H.indices]) * np.sign(I_adv[H.indices]) < 0
    return float(np.mean(flips))


def spearman(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman rank correlation with average-rank tie handling.

    Reduces to 1 - 6 sum d_i^2 / (n (n^2 - 1)) on tie-free inputs. A constant
    vector has no ranking; that degenerate case warns and returns 0.
    """
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"vectors differ in length: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ValueError("rank correlation needs at least two entries")
    ra = scipy.stats.rankdata(a)
    rb = scipy.stats.rankdata(b)
    if np.std(ra) == 0.0 or np.std(rb) == 0.0:
        warnings.warn("constant score vector has no ranking", DegenerateRanking,
                      stacklevel=2)
        return 0.0
    ca = ra - ra.mean()
    cb = rb - rb.mean()
    return float(np.dot(ca, cb) / (np.linalg.norm(ca) * np.linalg.norm(cb)))


def topk_stability(a: np.ndarray, b: np.ndarray, K: int) -> float:
    """Overlap fraction of the two top-K index sets (ties to the lower index)."""
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"vectors differ in length: {a.shape} vs {b.shape}")
    if K < 1:
        raise BadK(f"K must be >= 1, got {K}")
    if K > a.size:
        raise BadK(f"K = {K} exceeds n = {a.size}")
    top_a = set(np.argsort(-a, kind="stable")[:K].tolist())
    top_b = set(np.argsort(-b, kind="stable")[:K].tolist())
    return len(top_a & top_b) / K


def malleability_measure(
    influence_fn: Callable[[np.ndarray, int], float],
    dataset: LabeledDataset,
    eps: float,
    trials: int,
    seed: int,
) -> MCEstimate:
    """Monte Carlo estimate of E |I(x, y) - I(x + delta, y)|.

    Each trial draws a training point uniformly and a perturbation uniform in
    the L-infinity ball of radius eps. ``influence_fn(x, i)`` evaluates the
    influence of training point i when moved to position x.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    rng = np.random.default_rng(seed)
    n, d = dataset.X.shape
    base: dict[int, float] = {}
    diffs = np.empty(trials)
    for t in range(trials):
        i = int(rng.integers(n))
        if i not in base:
            base[i] = float(influence_fn(dataset.X[i], i))
        delta = rng.uniform(-eps, eps, size=d)
        diffs[t] = abs(base[i] - float(influence_fn(dataset.X[i] + delta, i)))
    stderr = float(np.std(diffs, ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return MCEstimate(value=float(np.mean(diffs)), stderr=stderr, trials=trials)


def run_intervention(
    dataset: LabeledDataset,
    scores: np.ndarray,
    kind: str,
    attack_cfg: AttackConfig,
    tau: float,
    grad_factory: Callable[[int], GradientProvider],
    targets: np.ndarray | None = None,
) -> LabeledDataset:
    """Apply one of the three data interventions.

    curated removes the high-influence set; transformed replaces those rows by
    attacked versions (labels unchanged); adversarial attacks every row.
    ``grad_factory(i)`` must yield the gradient provider for training row i,
    and ``targets`` the encoded per-row attack targets (defaults to the raw
    labels).
    """
    if kind not in INTERVENTION_KINDS:
        raise ValueError(f"kind must be one of {INTERVENTION_KINDS}, got {kind!r}")
    if targets is None:
        targets = dataset.y
    if kind == "adversarial":
        attacked = np.arange(dataset.n)
    else:
        H = select_high_influence(scores, tau)
        if len(H) == 0:
            raise EmptySelection(f"intervention {kind!r} selected no points")
        if kind == "curated":
            keep = np.setdiff1d(np.arange(dataset.n), H.indices)
            return LabeledDataset(
                X=dataset.X[keep], y=dataset.y[keep], num_classes=dataset.num_classes
            )
        attacked = H.indices
    X_new = dataset.X.copy()
    for i in attacked:
        X_new[i] = run_attack(grad_factory(int(i)), dataset.X[i], targets[i], attack_cfg)
    return LabeledDataset(X=X_new, y=dataset.y, num_classes=dataset.num_classes)


def sensitivity_gap(X: np.ndarray, y: np.ndarray, lam: float) -> SensitivityGap:
    """Intrinsic sensitivity of the attention kernel versus the ReLU kernel.

    S_att = n ||G||_2 ||y||_2 / lam^2, S_relu = ||y||_2 / lam^2; their ratio
    n lambda_1(G) is independent of the targets and the regularization.
    """
    X = check_data_matrix(X, unit_rows=True)
    if lam <= 0:
        raise BadLambda(f"lam must be positive, got {lam}")
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    lam1 = float(np.linalg.eigvalsh(X @ X.T)[-1])
    y_norm = float(np.linalg.norm(y))
    s_relu = y_norm / lam**2
    s_att = n * lam1 * y_norm / lam**2
    return SensitivityGap(s_att=s_att, s_relu=s_relu, ratio=n * lam1)
