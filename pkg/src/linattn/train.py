"""Training of finite-width two-layer networks and the width sweep.

Only the first-layer weights train; the objective is the regularized task
loss (1/2n) sum_i l(f(x_i), y_i) + (l2/2) ||W - W0||_F^2 with squared error
for binary targets and cross-entropy for multi-class. The mlp_attn
architecture computes its (row-normalized) attention features once from the
full training matrix before the loop starts. Training is deterministic per
seed: one shuffling stream drives the batches, and adversarial training
replaces each batch by attacked inputs against the current weights before
the update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import networks
from .attacks import AttackConfig, make_gradient_provider, run_attack
from .datasets import LabeledDataset, one_hot
from .exceptions import ShapeError, TrainingDiverged
from .influence import KernelRidge
from .networks import init_network  # re-exported; part of this module's surface
from .ntk import NetworkParams, NTKDistanceCurve, infinite_relu_ntk, ntk_distance, sequential_ntk
from .validation import as_matrix

__all__ = [
    "TrainConfig",
    "TrainedModel",
    "TwoLayerNet",
    "init_network",
    "train",
    "adversarial_train",
    "predict",
    "ntk_distance_sweep",
    "loss_landscape",
    "encode_targets",
]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 128
    l2_lambda: float = 1e-3
    optimizer: str = "adam"
    adversarial: AttackConfig | None = None
    seed: int = 0
    plateau_tol: float = 1e-6

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError(f"optimizer must be 'adam' or 'gd', got {self.optimizer!r}")


@dataclass(frozen=True)
class TrainedModel:
    params: NetworkParams
    arch: str
    init_params: NetworkParams
    loss_history: list[float]
    loss: str  # "mse" | "cross_entropy"
    l2_lambda: float = 1e-3


def encode_targets(y: np.ndarray, num_classes: int) -> tuple[np.ndarray, str]:
    """Targets for the network: signed +-1 for binary, one-hot for multi-class."""
    y = np.asarray(y)
    if num_classes <= 2:
        return 2.0 * y.astype(np.float64) - 1.0, "mse"
    return one_hot(y, num_classes), "cross_entropy"


def _objective(
    W: np.ndarray,
    W0: np.ndarray,
    a: np.ndarray,
    features: np.ndarray,
    targets: np.ndarray,
    loss: str,
    l2: float,
) -> float:
    n = features.shape[0]
    # divergence shows up as overflow here; the caller checks finiteness
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.maximum(features @ W.T, 0.0) @ a / np.sqrt(W.shape[0])
        if loss == "mse":
            task = float(np.sum((out - targets) ** 2)) / (2.0 * n)
        else:
            z = out - out.max(axis=1, keepdims=True)
            logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
            cls = np.argmax(targets, axis=1)
            task = -float(np.sum(logp[np.arange(n), cls])) / (2.0 * n)
        return task + 0.5 * l2 * float(np.sum((W - W0) ** 2))


def _batch_gradient(
    W: np.ndarray,
    W0: np.ndarray,
    a: np.ndarray,
    F: np.ndarray,
    T: np.ndarray,
    loss: str,
    l2: float,
) -> np.ndarray:
    b, m = F.shape[0], W.shape[0]
    pre = F @ W.T
    act = np.maximum(pre, 0.0)
    out = act @ a / np.sqrt(m)
    if loss == "mse":
        g_out = (out - T) / b
    else:
        z = out - out.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        g_out = (p - T) / (2.0 * b)
    if a.ndim == 1:
        g_act = g_out[:, None] * a[None, :] / np.sqrt(m)
    else:
        g_act = (g_out @ a.T) / np.sqrt(m)
    g_pre = g_act * (pre > 0.0)
    return g_pre.T @ F + l2 * (W - W0)


def train(
    net: NetworkParams, data: LabeledDataset, arch: str, cfg: TrainConfig
) -> TrainedModel:
    """Minibatch-train the first layer on the regularized objective.

    The sign outputs never change. Per-epoch entries of ``loss_history`` are
    the full clean-data objective after that epoch's updates; training stops
    early once successive entries differ by less than ``cfg.plateau_tol``.
    """
    networks.check_architecture(arch)
    X = data.X
    if X.shape[1] != net.dim:
        raise ShapeError(f"data dim {X.shape[1]} != network dim {net.dim}")
    targets, loss = encode_targets(data.y, data.num_classes)
    if loss == "cross_entropy" and net.n_outputs != data.num_classes:
        raise ShapeError(
            f"network has {net.n_outputs} outputs for {data.num_classes} classes"
        )
    features = networks.network_features(arch, X, X)
    n = X.shape[0]
    rng = np.random.default_rng(cfg.seed)
    W = net.W.copy()
    W0 = net.W.copy()
    a = net.a
    adam_m = np.zeros_like(W)
    adam_v = np.zeros_like(W)
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    step = 0
    history: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if cfg.adversarial is not None:
                F_batch = _attacked_features(
                    W, a, net.init_scale, arch, X, targets, idx, loss, cfg.adversarial
                )
            else:
                F_batch = features[idx]
            grad = _batch_gradient(W, W0, a, F_batch, targets[idx], loss, cfg.l2_lambda)
            if cfg.optimizer == "gd":
                W -= cfg.learning_rate * grad
            else:
                step += 1
                adam_m = beta1 * adam_m + (1 - beta1) * grad
                adam_v = beta2 * adam_v + (1 - beta2) * grad**2
                m_hat = adam_m / (1 - beta1**step)
                v_hat = adam_v / (1 - beta2**step)
                W -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + adam_eps)
        value = _objective(W, W0, a, features, targets, loss, cfg.l2_lambda)
        if not np.isfinite(value):
            raise TrainingDiverged(f"loss became {value} after {len(history) + 1} epochs")
        history.append(value)
        if len(history) >= 2 and abs(history[-1] - history[-2]) < cfg.plateau_tol:
            break
    trained = NetworkParams(W=W, a=net.a, init_scale=net.init_scale)
    return TrainedModel(
        params=trained, arch=arch, init_params=net, loss_history=history,
        loss=loss, l2_lambda=cfg.l2_lambda,
    )


def _attacked_features(
    W: np.ndarray,
    a: np.ndarray,
    init_scale: float,
    arch: str,
    X: np.ndarray,
    targets: np.ndarray,
    idx: np.ndarray,
    loss: str,
    attack: AttackConfig,
) -> np.ndarray:
    params = NetworkParams(W=W, a=a, init_scale=init_scale)
    rows = []
    for i in idx:
        provider = make_gradient_provider(params, arch, X, index=int(i), loss=loss)
        x_adv = run_attack(provider, X[i], targets[i], attack)
        if arch == "relu2l":
            rows.append(x_adv)
        else:
            v = networks.attention_feature(x_adv, X, self_index=int(i))
            rows.append(v / np.linalg.norm(v))
    return np.asarray(rows)


def adversarial_train(
    net: NetworkParams, data: LabeledDataset, arch: str, cfg: TrainConfig
) -> TrainedModel:
    """Train with every batch replaced by attacked inputs (PGD-AT style)."""
    if cfg.adversarial is None:
        raise ValueError("adversarial training needs cfg.adversarial set")
    return train(net, data, arch, cfg)


def predict(model: TrainedModel, X_context: np.ndarray, X_query: np.ndarray) -> np.ndarray:
    """Network outputs for query points; mlp_attn features are built
    transductively against the context matrix, relu2l ignores it."""
    return networks.predict_points(model.params, model.arch, as_matrix(X_context), X_query)


class TwoLayerNet(BaseEstimator):
    """Two-layer ReLU network with fixed sign outputs, sklearn style.

    ``fit`` memorizes the training matrix (the attention context) and trains
    the first layer; ``predict`` returns raw network outputs for query rows.

    Parameters mirror :class:`TrainConfig` plus the width, architecture and
    initialization scale.
    """

    def __init__(
        self,
        width: int = 64,
        arch: str = "relu2l",
        init_scale: float = 0.01,
        learning_rate: float = 1e-3,
        epochs: int = 200,
        batch_size: int = 128,
        l2_lambda: float = 1e-3,
        optimizer: str = "adam",
        adversarial: AttackConfig | None = None,
        seed: int = 0,
    ):
        self.width = width
        self.arch = arch
        self.init_scale = init_scale
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.l2_lambda = l2_lambda
        self.optimizer = optimizer
        self.adversarial = adversarial
        self.seed = seed

    def fit(self, X, y):
        X = as_matrix(X)
        y = np.asarray(y, dtype=np.int64)
        num_classes = int(y.max()) + 1 if y.size else 0
        data = LabeledDataset(X=X, y=y, num_classes=max(num_classes, 2))
        outputs = 1 if data.num_classes <= 2 else data.num_classes
        net = init_network(
            self.width, X.shape[1], init_scale=self.init_scale,
            seed=self.seed, outputs=outputs,
        )
        cfg = TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            l2_lambda=self.l2_lambda,
            optimizer=self.optimizer,
            adversarial=self.adversarial,
            seed=self.seed,
        )
        self.model_ = train(net, data, self.arch, cfg)
        self.X_fit_ = X
        return self

    def predict(self, X) -> np.ndarray:
        return predict(self.model_, self.X_fit_, X)


def _width_seed(seed: int, width: int) -> int:
    return int(np.random.SeedSequence([seed, width]).generate_state(1)[0])


def kernel_predictor(
    arch: str, X_train: np.ndarray, targets: np.ndarray, lam: float
) -> tuple[KernelRidge, np.ndarray]:
    """Fit the architecture's infinite-width kernel ridge predictor.

    Returns the fitted model and the training kernel; relu2l uses the
    arc-cosine NTK on raw inputs, mlp_attn the sequential NTK on normalized
    attention features.
    """
    networks.check_architecture(arch)
    if arch == "relu2l":
        K = infinite_relu_ntk(X_train)
    else:
        K = sequential_ntk(X_train, normalize=True)
    return KernelRidge(lam=lam, kernel_kind=f"ntk_infinite_{arch}").fit(K, targets), K


def kernel_cross(arch: str, X_train: np.ndarray, X_query: np.ndarray) -> np.ndarray:
    """Cross-kernel rows k(query, train) for the architecture's NTK."""
    if arch == "relu2l":
        return infinite_relu_ntk(X_query, X_train)
    return sequential_ntk(X_train, normalize=True, X_query=X_query)


def ntk_distance_sweep(
    dataset: LabeledDataset,
    widths: list[int],
    arch: str,
    cfg: TrainConfig,
    lam: float,
    test_data: LabeledDataset | None = None,
    dataset_tag: str = "",
) -> NTKDistanceCurve:
    """Distance between finite-width and kernel predictions across widths.

    Each width trains a fresh network (seed derived from cfg.seed and the
    width) and compares its test predictions against the infinite-width
    kernel ridge predictor at the same regularization. Without an explicit
    test set a deterministic 75/25 split of ``dataset`` is used.
    """
    if any(b <= a for a, b in zip(widths, widths[1:])) or not widths:
        raise ValueError("widths must be a non-empty strictly increasing list")
    if test_data is None:
        rng = np.random.default_rng(cfg.seed)
        order = rng.permutation(dataset.n)
        n_test = max(1, dataset.n // 4)
        test_idx, train_idx = order[:n_test], order[n_test:]
        train_set = LabeledDataset(
            X=dataset.X[train_idx], y=dataset.y[train_idx], num_classes=dataset.num_classes
        )
        test_data = LabeledDataset(
            X=dataset.X[test_idx], y=dataset.y[test_idx], num_classes=dataset.num_classes
        )
    else:
        train_set = dataset

    targets, _ = encode_targets(train_set.y, train_set.num_classes)
    krr, _ = kernel_predictor(arch, train_set.X, targets, lam)
    k_query = kernel_cross(arch, train_set.X, test_data.X)
    f_ntk = krr.predict(k_query)

    outputs = 1 if train_set.num_classes <= 2 else train_set.num_classes
    distances = []
    for m in widths:
        net = init_network(
            m, train_set.d, init_scale=0.01, seed=_width_seed(cfg.seed, m), outputs=outputs
        )
        model = train(net, train_set, arch, cfg)
        f_m = predict(model, train_set.X, test_data.X)
        distances.append(ntk_distance(f_m, f_ntk))
    return NTKDistanceCurve(
        widths=list(widths),
        distances=distances,
        architecture=arch,
        dataset=dataset_tag,
        seed=cfg.seed,
        metadata={"lam": lam, "n_train": train_set.n, "n_test": test_data.n},
    )


def loss_landscape(
    model: TrainedModel,
    data: LabeledDataset,
    radius: float,
    grid: int,
    seed: int,
) -> np.ndarray:
    """Training objective on a grid spanned by two random weight directions.

    Directions are filter-normalized per row (each direction row rescaled to
    the corresponding weight row norm); offsets span [-radius, radius]
    uniformly, so the center cell is exactly the model's training loss.
    """
    if grid < 3 or grid % 2 == 0:
        raise ValueError(f"grid must be an odd count >= 3, got {grid}")
    targets, loss = encode_targets(data.y, data.num_classes)
    features = networks.network_features(model.arch, data.X, data.X)
    W = model.params.W
    rng = np.random.default_rng(seed)
    directions = []
    for _ in range(2):
        D = rng.standard_normal(W.shape)
        row_norms = np.linalg.norm(D, axis=1, keepdims=True)
        row_norms[row_norms == 0.0] = 1.0
        D = D / row_norms * np.linalg.norm(W, axis=1, keepdims=True)
        directions.append(D)
    offsets = np.linspace(-radius, radius, grid)
    surface = np.empty((grid, grid))
    for i, oi in enumerate(offsets):
        for j, oj in enumerate(offsets):
            W_ij = W + oi * directions[0] + oj * directions[1]
            surface[i, j] = _objective(
                W_ij, model.init_params.W, model.params.a, features, targets,
                loss, model.l2_lambda,
            )
    return surface
