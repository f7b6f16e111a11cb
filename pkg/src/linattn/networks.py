"""Two-layer ReLU network internals shared by attacks and training.

The network is f(u) = (1/sqrt(m)) sum_r a_r relu(w_r . u) with fixed sign
outputs; only W trains. The "mlp_attn" architecture feeds it row-normalized
transductive attention features instead of raw inputs, which couples every
example's representation to the whole training matrix. Input gradients are
analytic, including the chain through the attention map and its
normalization, where perturbing a training row also moves its own
self-interaction term.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DegenerateRow, ShapeError
from .ntk import NetworkParams
from .validation import as_matrix

ARCHITECTURES = ("relu2l", "mlp_attn")
LOSSES = ("mse", "cross_entropy")


def init_network(
    m: int, d: int, init_scale: float = 0.01, seed: int = 0, outputs: int = 1
) -> NetworkParams:
    """Gaussian first-layer weights with balanced alternating sign outputs."""
    if m < 1 or d < 1:
        raise ValueError(f"need m >= 1 and d >= 1, got m={m}, d={d}")
    rng = np.random.default_rng(seed)
    W = init_scale * rng.standard_normal((m, d))
    r = np.arange(m)
    if outputs == 1:
        a = np.where(r % 2 == 0, 1.0, -1.0)
    else:
        c = np.arange(outputs)
        a = np.where((r[:, None] + c[None, :]) % 2 == 0, 1.0, -1.0)
    return NetworkParams(W=W, a=a, init_scale=init_scale)


def check_architecture(arch: str) -> str:
    if arch not in ARCHITECTURES:
        raise ValueError(f"arch must be one of {ARCHITECTURES}, got {arch!r}")
    return arch


def attention_feature(
    x: np.ndarray, context: np.ndarray, self_index: int | None = None
) -> np.ndarray:
    """Raw transductive attention feature sum_k (x . x_k) x_k of one point.

    With ``self_index`` the stored context row at that position is replaced by
    x itself, so the self-interaction term follows a perturbed training point.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    context = as_matrix(context, "context")
    if x.shape[0] != context.shape[1]:
        raise ShapeError(f"point dim {x.shape[0]} != context dim {context.shape[1]}")
    v = context.T @ (context @ x)
    if self_index is not None:
        stored = context[self_index]
        v = v - stored * float(stored @ x) + x * float(x @ x)
    return v


def network_features(arch: str, X: np.ndarray, context: np.ndarray) -> np.ndarray:
    """Feature rows the MLP consumes: raw inputs or normalized attention rows."""
    check_architecture(arch)
    X = as_matrix(X)
    if arch == "relu2l":
        return X
    F = (X @ context.T) @ context
    norms = np.linalg.norm(F, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateRow("attention produced a zero feature row")
    return F / norms


def forward(params: NetworkParams, U: np.ndarray) -> np.ndarray:
    """MLP outputs for feature rows U: relu(U W^T) a / sqrt(m)."""
    U = np.atleast_2d(np.asarray(U, dtype=np.float64))
    if U.shape[1] != params.dim:
        raise ShapeError(f"feature dim {U.shape[1]} != weight dim {params.dim}")
    act = np.maximum(U @ params.W.T, 0.0)
    return act @ params.a / np.sqrt(params.width)


def predict_points(
    params: NetworkParams, arch: str, context: np.ndarray, X_query: np.ndarray
) -> np.ndarray:
    """Network outputs for query points, features built against the context."""
    U = network_features(arch, X_query, context)
    return forward(params, U)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def per_example_loss(out: np.ndarray, target: np.ndarray | float, loss: str) -> float:
    out = np.atleast_1d(out)
    if loss == "mse":
        t = np.atleast_1d(np.asarray(target, dtype=np.float64))
        return 0.5 * float(np.sum((out - t) ** 2))
    if loss == "cross_entropy":
        p = _softmax(out)
        cls = int(np.argmax(target)) if np.ndim(target) else int(target)
        return -float(np.log(max(p[cls], 1e-300)))
    raise ValueError(f"loss must be one of {LOSSES}, got {loss!r}")


def _output_grad(out: np.ndarray, target, loss: str) -> np.ndarray:
    if loss == "mse":
        return np.atleast_1d(out) - np.atleast_1d(np.asarray(target, dtype=np.float64))
    if loss == "cross_entropy":
        p = _softmax(np.atleast_1d(out))
        cls = int(np.argmax(target)) if np.ndim(target) else int(target)
        g = p.copy()
        g[cls] -= 1.0
        return g
    raise ValueError(f"loss must be one of {LOSSES}, got {loss!r}")


def _feature_grad(params: NetworkParams, u: np.ndarray, g_out: np.ndarray) -> np.ndarray:
    # d loss / d feature through relu(W u) a / sqrt(m)
    pre = params.W @ u
    a = params.a if params.a.ndim == 2 else params.a[:, None]
    g_act = (a @ g_out) / np.sqrt(params.width)
    g_pre = g_act * (pre > 0.0)
    return params.W.T @ g_pre


def per_example_loss_and_grad(
    params: NetworkParams,
    arch: str,
    context: np.ndarray,
    x: np.ndarray,
    target,
    self_index: int | None = None,
    loss: str = "mse",
) -> tuple[float, np.ndarray]:
    """Per-example loss and its analytic gradient with respect to the input.

    For mlp_attn the chain runs through the raw attention feature, its row
    normalization, and the MLP; the Jacobian of the attention map at a
    training point includes the moved self-term:
    J = sum_{k != i} x_k x_k^T + 2 x x^T + ||x||^2 I.
    """
    check_architecture(arch)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    context = as_matrix(context, "context")
    if arch == "relu2l":
        u = x
    else:
        v = attention_feature(x, context, self_index)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            raise DegenerateRow("attention feature vanished; no direction to normalize")
        u = v / nv
    out = np.atleast_1d(forward(params, u)[0])
    value = per_example_loss(out, target, loss)
    g_u = _feature_grad(params, u, _output_grad(out, target, loss))
    if arch == "relu2l":
        return value, g_u
    g_v = (g_u - u * float(u @ g_u)) / nv
    base = context.T @ (context @ g_v)
    if self_index is None:
        g_x = base
    else:
        stored = context[self_index]
        g_x = (
            base
            - stored * float(stored @ g_v)
            + 2.0 * x * float(x @ g_v)
            + float(x @ x) * g_v
        )
    return value, g_x
