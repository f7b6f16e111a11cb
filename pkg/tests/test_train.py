import numpy as np
import pytest

from linattn.attacks import AttackConfig
from linattn.datasets import LabeledDataset, generate_sphere_data
from linattn.exceptions import ShapeError, TrainingDiverged
from linattn.experiments import planted_labels
from linattn.train import (
    TrainConfig,
    TwoLayerNet,
    adversarial_train,
    encode_targets,
    init_network,
    loss_landscape,
    ntk_distance_sweep,
    predict,
    train,
)


def toy_dataset(n=16, d=8, seed=0):
    X = generate_sphere_data(n, d, seed)
    return LabeledDataset(X=X, y=planted_labels(X, seed + 2), num_classes=2)


class TestInitNetwork:
    def test_signs_balanced(self):
        for m in (6, 7):
            params = init_network(m, 4, seed=0)
            assert set(np.unique(params.a)) <= {-1.0, 1.0}
            assert abs(params.a.sum()) <= 1.0

    def test_weight_scale(self):
        params = init_network(200, 64, init_scale=0.01, seed=1)
        assert np.std(params.W) == pytest.approx(0.01, rel=0.1)

    def test_deterministic(self):
        a = init_network(8, 3, seed=2)
        b = init_network(8, 3, seed=2)
        assert np.array_equal(a.W, b.W) and np.array_equal(a.a, b.a)

    def test_multioutput_signs(self):
        params = init_network(10, 4, seed=3, outputs=3)
        assert params.a.shape == (10, 3)
        assert np.all(np.abs(params.a) == 1.0)
        assert np.all(np.abs(params.a.sum(axis=0)) <= 1.0)


class TestTrain:
    def test_zero_epochs_keeps_params(self):
        data = toy_dataset()
        net = init_network(8, data.d, seed=4)
        model = train(net, data, "relu2l", TrainConfig(epochs=0, seed=0))
        assert np.array_equal(model.params.W, net.W)
        assert model.loss_history == []

    def test_gd_descends_on_separable_toy(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        data = LabeledDataset(X=X, y=np.array([0, 1]), num_classes=2)
        net = init_network(32, 2, init_scale=0.5, seed=5)
        cfg = TrainConfig(learning_rate=0.05, epochs=40, batch_size=2,
                          optimizer="gd", seed=5, plateau_tol=0.0)
        model = train(net, data, "relu2l", cfg)
        # loss history with epochs=0 baseline
        from linattn.train import _objective

        targets, loss = encode_targets(data.y, 2)
        initial = _objective(net.W, net.W, net.a, X, targets, loss, cfg.l2_lambda)
        assert model.loss_history[-1] < initial

    def test_deterministic_history(self):
        data = toy_dataset()
        net = init_network(16, data.d, seed=6)
        cfg = TrainConfig(epochs=10, batch_size=4, seed=6)
        h1 = train(net, data, "relu2l", cfg).loss_history
        h2 = train(net, data, "relu2l", cfg).loss_history
        assert h1 == h2

    def test_output_signs_never_change(self):
        data = toy_dataset()
        net = init_network(16, data.d, seed=7)
        model = train(net, data, "mlp_attn", TrainConfig(epochs=15, batch_size=8, seed=7))
        assert np.array_equal(model.params.a, net.a)
        assert model.params.a is net.a

    def test_gd_step_matches_analytic_gradient(self):
        # one full-batch gd step equals W - lr * grad of the objective
        data = toy_dataset(n=6, d=4, seed=8)
        net = init_network(5, 4, init_scale=0.3, seed=8)
        lr = 0.01
        cfg = TrainConfig(learning_rate=lr, epochs=1, batch_size=6,
                          optimizer="gd", seed=8, plateau_tol=0.0)
        model = train(net, data, "relu2l", cfg)
        targets, _ = encode_targets(data.y, 2)
        h = 1e-7
        from linattn.train import _objective

        # finite-difference the batch objective (n = batch here)
        grad_fd = np.zeros_like(net.W)
        for r in range(net.W.shape[0]):
            for c in range(net.W.shape[1]):
                Wp, Wm = net.W.copy(), net.W.copy()
                Wp[r, c] += h
                Wm[r, c] -= h
                grad_fd[r, c] = (
                    _objective(Wp, net.W, net.a, data.X, targets, "mse", cfg.l2_lambda)
                    - _objective(Wm, net.W, net.a, data.X, targets, "mse", cfg.l2_lambda)
                ) / (2 * h)
        np.testing.assert_allclose(model.params.W, net.W - lr * grad_fd, atol=1e-8)

    def test_divergence_detected(self):
        data = toy_dataset()
        net = init_network(16, data.d, init_scale=1.0, seed=9)
        cfg = TrainConfig(learning_rate=1e12, epochs=60, batch_size=4,
                          optimizer="gd", seed=9, plateau_tol=0.0)
        with pytest.raises(TrainingDiverged):
            train(net, data, "relu2l", cfg)

    def test_dimension_mismatch(self):
        data = toy_dataset(d=8)
        net = init_network(8, 5, seed=10)
        with pytest.raises(ShapeError):
            train(net, data, "relu2l", TrainConfig(epochs=1))

    def test_multiclass_cross_entropy(self):
        X = generate_sphere_data(12, 6, seed=11)
        y = np.arange(12) % 3
        data = LabeledDataset(X=X, y=y, num_classes=3)
        net = init_network(16, 6, seed=11, outputs=3)
        model = train(net, data, "relu2l", TrainConfig(epochs=10, batch_size=4, seed=11))
        assert model.loss == "cross_entropy"
        preds = predict(model, data.X, data.X)
        assert preds.shape == (12, 3)


class TestAdversarialTrain:
    def test_requires_attack_config(self):
        data = toy_dataset()
        net = init_network(8, data.d, seed=12)
        with pytest.raises(ValueError):
            adversarial_train(net, data, "relu2l", TrainConfig(epochs=1))

    def test_zero_eps_reduces_to_plain_training(self):
        data = toy_dataset()
        net = init_network(8, data.d, seed=13)
        atk = AttackConfig(eps=0.0, alpha=0.01, iters=2, kind="pgd")
        cfg_plain = TrainConfig(epochs=5, batch_size=4, seed=13)
        cfg_adv = TrainConfig(epochs=5, batch_size=4, seed=13, adversarial=atk)
        plain = train(net, data, "relu2l", cfg_plain)
        adv = adversarial_train(net, data, "relu2l", cfg_adv)
        np.testing.assert_allclose(plain.params.W, adv.params.W, atol=1e-12)

    @pytest.mark.parametrize("arch", ["relu2l", "mlp_attn"])
    def test_trains_and_keeps_signs(self, arch):
        data = toy_dataset()
        net = init_network(8, data.d, seed=14)
        atk = AttackConfig(eps=0.1, alpha=0.05, iters=3, kind="pgd")
        model = adversarial_train(
            net, data, arch, TrainConfig(epochs=3, batch_size=8, seed=14, adversarial=atk)
        )
        assert np.array_equal(model.params.a, net.a)
        assert len(model.loss_history) == 3


class TestPredict:
    def test_single_unit_hand_value(self):
        from linattn.ntk import NetworkParams
        from linattn.train import TrainedModel

        w = np.array([[0.5, -0.25]])
        params = NetworkParams(W=w, a=np.array([1.0]), init_scale=1.0)
        model = TrainedModel(
            params=params, arch="relu2l", init_params=params,
            loss_history=[], loss="mse",
        )
        x = np.array([[2.0, 4.0]])
        # relu(0.5*2 - 0.25*4) = relu(0) = 0; relu(1*2) ...
        np.testing.assert_allclose(predict(model, x, x), [0.0])
        x2 = np.array([[4.0, 0.0]])
        np.testing.assert_allclose(predict(model, x, x2), [2.0])

    def test_all_dead_relus(self):
        from linattn.ntk import NetworkParams
        from linattn.train import TrainedModel

        params = NetworkParams(
            W=-np.ones((4, 3)), a=np.array([1.0, -1.0, 1.0, -1.0]), init_scale=1.0
        )
        model = TrainedModel(
            params=params, arch="relu2l", init_params=params,
            loss_history=[], loss="mse",
        )
        X = np.abs(generate_sphere_data(5, 3, seed=15))
        np.testing.assert_array_equal(predict(model, X, X), np.zeros(5))

    def test_relu2l_ignores_context(self):
        data = toy_dataset()
        net = init_network(8, data.d, seed=16)
        model = train(net, data, "relu2l", TrainConfig(epochs=2, batch_size=8, seed=16))
        q = generate_sphere_data(3, data.d, seed=17)
        p1 = predict(model, data.X, q)
        p2 = predict(model, np.flipud(data.X), q)
        np.testing.assert_array_equal(p1, p2)

    def test_mlp_attn_uses_context_transductively(self):
        # feature normalization cancels context scaling, so probe with a
        # structurally different context (a subset of the rows)
        data = toy_dataset()
        net = init_network(8, data.d, seed=18)
        model = train(net, data, "mlp_attn", TrainConfig(epochs=2, batch_size=8, seed=18))
        q = generate_sphere_data(3, data.d, seed=19)
        p1 = predict(model, data.X, q)
        p2 = predict(model, data.X[:10], q)
        assert not np.allclose(p1, p2)


class TestTwoLayerNetEstimator:
    def test_fit_predict_shapes(self):
        data = toy_dataset()
        net = TwoLayerNet(width=16, arch="mlp_attn", epochs=5, batch_size=8, seed=20)
        net.fit(data.X, data.y)
        out = net.predict(data.X)
        assert out.shape == (data.n,)
        assert len(net.model_.loss_history) <= 5

    def test_get_params(self):
        net = TwoLayerNet(width=4, epochs=1)
        params = net.get_params()
        assert params["width"] == 4
        assert params["arch"] == "relu2l"


class TestNTKDistanceSweep:
    def test_curve_shape_and_determinism(self):
        data = toy_dataset(n=20, d=10, seed=21)
        cfg = TrainConfig(epochs=5, batch_size=8, seed=21)
        c1 = ntk_distance_sweep(data, [2, 4, 8], "relu2l", cfg, 1e-3)
        c2 = ntk_distance_sweep(data, [2, 4, 8], "relu2l", cfg, 1e-3)
        assert len(c1.distances) == 3
        assert c1.distances == c2.distances

    def test_explicit_test_data(self):
        data = toy_dataset(n=16, d=10, seed=22)
        test = toy_dataset(n=5, d=10, seed=23)
        cfg = TrainConfig(epochs=3, batch_size=8, seed=22)
        c = ntk_distance_sweep(data, [2, 4], "mlp_attn", cfg, 1e-3, test_data=test)
        assert c.metadata["n_test"] == 5

    def test_nonascending_widths_rejected(self):
        data = toy_dataset()
        with pytest.raises(ValueError):
            ntk_distance_sweep(data, [8, 4], "relu2l", TrainConfig(epochs=1), 1e-3)


class TestLossLandscape:
    def test_center_equals_training_loss(self):
        data = toy_dataset()
        net = init_network(12, data.d, seed=24)
        cfg = TrainConfig(epochs=8, batch_size=8, seed=24)
        model = train(net, data, "relu2l", cfg)
        surface = loss_landscape(model, data, radius=0.5, grid=5, seed=0)
        assert surface.shape == (5, 5)
        assert surface[2, 2] == pytest.approx(model.loss_history[-1], rel=1e-10)

    def test_grid_cells(self):
        data = toy_dataset()
        net = init_network(6, data.d, seed=25)
        model = train(net, data, "relu2l", TrainConfig(epochs=2, batch_size=8, seed=25))
        surface = loss_landscape(model, data, radius=0.1, grid=21, seed=1)
        assert surface.size == 441

    def test_even_grid_rejected(self):
        data = toy_dataset()
        net = init_network(6, data.d, seed=26)
        model = train(net, data, "relu2l", TrainConfig(epochs=1, batch_size=8, seed=26))
        with pytest.raises(ValueError):
            loss_landscape(model, data, radius=0.1, grid=4, seed=2)
