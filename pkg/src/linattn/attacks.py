"""L-infinity bounded adversarial perturbations against a per-example loss.

All attacks are deterministic (no random starts) and respect the budget
exactly: every output satisfies ||x_adv - x||_inf <= eps. Inputs are
normalized feature vectors, not raw pixels, so no value clipping is applied
and attacked points are intentionally *not* re-normalized to unit norm.

A gradient provider is any callable (x, y) -> (loss, grad) exposing the loss
surface being ascended; for the trained networks here that surface is the
per-example loss of the fitted model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .networks import per_example_loss_and_grad
from .ntk import NetworkParams

GradientProvider = Callable[[np.ndarray, object], tuple[float, np.ndarray]]

ATTACK_KINDS = ("fgsm", "pgd", "mim")


@dataclass(frozen=True)
class AttackConfig:
    """Attack hyperparameters; defaults follow the standard protocol
    (eps 0.3, step 0.01, 40 iterations, momentum decay 0.9)."""

    eps: float = 0.3
    alpha: float = 0.01
    iters: int = 40
    decay: float = 0.9
    kind: str = "pgd"

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"kind must be one of {ATTACK_KINDS}, got {self.kind!r}")
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if self.kind != "fgsm" and self.alpha <= 0:
            raise ValueError(f"alpha must be positive for {self.kind}, got {self.alpha}")
        if self.iters < 1:
            raise ValueError(f"iters must be >= 1, got {self.iters}")
        if not 0.0 <= self.decay <= 1.0:
            raise ValueError(f"decay must lie in [0, 1], got {self.decay}")


def fgsm(g: GradientProvider, x: np.ndarray, y, eps: float) -> np.ndarray:
    """Single sign-gradient step of size eps; sign(0) = 0 leaves coordinates."""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    _, grad = g(x, y)
    return x + eps * np.sign(grad)


def pgd(g: GradientProvider, x: np.ndarray, y, cfg: AttackConfig) -> np.ndarray:
    """Iterated sign-gradient ascent projected onto the eps ball each step.

    Starts at the clean point; deterministic.
    """
    x0 = np.asarray(x, dtype=np.float64)
    lo, hi = x0 - cfg.eps, x0 + cfg.eps
    x_adv = x0.copy()
    for _ in range(cfg.iters):
        _, grad = g(x_adv, y)
        x_adv = np.clip(x_adv + cfg.alpha * np.sign(grad), lo, hi)
    return x_adv


def mim(g: GradientProvider, x: np.ndarray, y, cfg: AttackConfig) -> np.ndarray:
    """Momentum iterative method: accumulate L1-normalized gradients before
    taking the sign step; zero gradients contribute nothing."""
    x0 = np.asarray(x, dtype=np.float64)
    lo, hi = x0 - cfg.eps, x0 + cfg.eps
    x_adv = x0.copy()
    momentum = np.zeros_like(x0)
    for _ in range(cfg.iters):
        _, grad = g(x_adv, y)
        l1 = float(np.sum(np.abs(grad)))
        normalized = grad / l1 if l1 > 0 else np.zeros_like(grad)
        momentum = cfg.decay * momentum + normalized
        x_adv = np.clip(x_adv + cfg.alpha * np.sign(momentum), lo, hi)
    return x_adv


def run_attack(g: GradientProvider, x: np.ndarray, y, cfg: AttackConfig) -> np.ndarray:
    """Dispatch on cfg.kind."""
    if cfg.kind == "fgsm":
        return fgsm(g, x, y, cfg.eps)
    if cfg.kind == "pgd":
        return pgd(g, x, y, cfg)
    return mim(g, x, y, cfg)


def network_input_gradient(
    params: NetworkParams,
    arch: str,
    context: np.ndarray,
    index: int,
    y,
    x: np.ndarray | None = None,
    loss: str = "mse",
) -> np.ndarray:
    """Analytic gradient of the per-example loss w.r.t. training input ``index``.

    ``x`` overrides the current position of that point (used mid-attack);
    other context rows stay fixed, while the point's own attention self-term
    follows x.
    """
    context = np.asarray(context, dtype=np.float64)
    if not 0 <= index < context.shape[0]:
        raise IndexError(f"index {index} outside [0, {context.shape[0]})")
    point = context[index] if x is None else np.asarray(x, dtype=np.float64)
    _, grad = per_example_loss_and_grad(
        params, arch, context, point, y, self_index=index, loss=loss
    )
    return grad


def make_gradient_provider(
    params: NetworkParams,
    arch: str,
    context: np.ndarray,
    index: int | None = None,
    loss: str = "mse",
) -> GradientProvider:
    """Bind a network to a (loss, gradient) provider for one input point.

    ``index`` marks which training row the moving point replaces; None means
    a fresh test point whose perturbation leaves the context untouched.
    """
    context = np.asarray(context, dtype=np.float64)

    def provider(x: np.ndarray, y) -> tuple[float, np.ndarray]:
        return per_example_loss_and_grad(
            params, arch, context, x, y, self_index=index, loss=loss
        )

    return provider
