import numpy as np
import pytest

from linattn.datasets import generate_sphere_data
from linattn.exceptions import DegenerateRow, ShapeError
from linattn.networks import init_network
from linattn.ntk import (
    NetworkParams,
    NTKDistanceCurve,
    empirical_ntk,
    infinite_relu_ntk,
    mc_ntk,
    ntk_distance,
    sequential_ntk,
)


class TestNetworkParams:
    def test_sign_vector_enforced(self):
        with pytest.raises(ValueError):
            NetworkParams(W=np.zeros((3, 2)), a=np.array([1.0, 0.5, -1.0]), init_scale=1.0)

    def test_shape_consistency(self):
        with pytest.raises(ShapeError):
            NetworkParams(W=np.zeros((3, 2)), a=np.ones(4), init_scale=1.0)


class TestEmpiricalNTK:
    def test_single_unit_entries(self):
        params = NetworkParams(W=np.array([[1.0, 0.0]]), a=np.array([1.0]), init_scale=1.0)
        F = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        K = empirical_ntk(params, F)
        # only row 0 activates the single unit
        assert K[0, 0] == pytest.approx(1.0)
        assert K[1, 1] == 0.0
        assert K[0, 1] == 0.0

    def test_symmetric_psd(self):
        params = init_network(32, 6, seed=0)
        F = generate_sphere_data(10, 6, seed=1)
        K = empirical_ntk(params, F)
        np.testing.assert_allclose(K, K.T, atol=1e-14)
        assert np.linalg.eigvalsh(K).min() >= -1e-12

    def test_unit_permutation_invariance(self, rng):
        params = init_network(16, 4, seed=2)
        F = generate_sphere_data(6, 4, seed=3)
        perm = rng.permutation(16)
        permuted = NetworkParams(
            W=params.W[perm], a=params.a[perm], init_scale=params.init_scale
        )
        np.testing.assert_allclose(
            empirical_ntk(params, F), empirical_ntk(permuted, F), atol=1e-15
        )

    def test_large_width_approaches_closed_form(self):
        F = generate_sphere_data(5, 8, seed=4)
        K_inf = infinite_relu_ntk(F)
        K_emp = empirical_ntk(init_network(100_000, 8, init_scale=1.0, seed=5), F)
        assert np.max(np.abs(K_emp - K_inf)) < 0.01

    def test_cross_block(self):
        params = init_network(64, 5, seed=6)
        F1 = generate_sphere_data(4, 5, seed=7)
        F2 = generate_sphere_data(3, 5, seed=8)
        C = empirical_ntk(params, F1, F2)
        assert C.shape == (4, 3)
        full = empirical_ntk(params, np.vstack([F1, F2]))
        np.testing.assert_allclose(C, full[:4, 4:], atol=1e-14)

    def test_shape_mismatch(self):
        params = init_network(8, 5, seed=9)
        with pytest.raises(ShapeError):
            empirical_ntk(params, generate_sphere_data(3, 4, seed=10))


class TestInfiniteReluNTK:
    def test_identical_unit_features(self):
        F = np.array([[1.0, 0.0]])
        assert infinite_relu_ntk(F)[0, 0] == pytest.approx(0.5)

    def test_orthogonal_features(self):
        K = infinite_relu_ntk(np.eye(2))
        assert K[0, 1] == pytest.approx(0.0)

    def test_sixty_degrees(self):
        # coefficient (pi - pi/3) / (2 pi) = 1/3; inner product 0.5
        F = np.array([[1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])
        assert infinite_relu_ntk(F)[0, 1] == pytest.approx(0.5 / 3.0, rel=1e-12)

    def test_montecarlo_validation_on_random_pairs(self):
        # closed form vs >= 1e6 Gaussian samples, within 3 MC standard errors
        samples = 1_200_000
        for seed in range(20):
            F = generate_sphere_data(2, 6, seed=seed)
            K_mc = mc_ntk(F, samples, seed=seed + 1000)
            K_cf = infinite_relu_ntk(F)
            # std of the indicator-product estimator for one entry
            inner = abs(float(F[0] @ F[1]))
            sigma = np.sqrt(max(inner, 1e-12)) / np.sqrt(samples)
            assert abs(K_mc[0, 1] - K_cf[0, 1]) <= 3 * max(sigma, 1e-6)

    def test_psd(self):
        F = generate_sphere_data(12, 7, seed=30)
        eigs = np.linalg.eigvalsh(infinite_relu_ntk(F))
        assert eigs.min() >= -1e-10

    def test_zero_row_rejected(self):
        with pytest.raises(DegenerateRow):
            infinite_relu_ntk(np.array([[0.0, 0.0], [1.0, 0.0]]))


class TestMCNTK:
    def test_single_sample_entries(self):
        F = generate_sphere_data(4, 3, seed=11)
        K = mc_ntk(F, samples=1, seed=12)
        inner = F @ F.T
        mask = np.abs(K) > 1e-15
        np.testing.assert_allclose(K[mask], inner[mask], rtol=1e-12)

    def test_deterministic_per_seed(self):
        F = generate_sphere_data(4, 3, seed=13)
        np.testing.assert_array_equal(mc_ntk(F, 100, seed=5), mc_ntk(F, 100, seed=5))

    def test_diagonal_approaches_half_norm(self):
        F = 2.0 * generate_sphere_data(3, 5, seed=14)
        K = mc_ntk(F, 400_000, seed=15)
        np.testing.assert_allclose(np.diag(K), 2.0, rtol=0.02)


class TestSequentialNTK:
    def test_orthonormal_reduces_to_relu_ntk(self):
        X = np.eye(5)
        np.testing.assert_allclose(
            sequential_ntk(X, normalize=False), infinite_relu_ntk(X), atol=1e-12
        )

    def test_normalized_diagonal_is_half(self):
        # arccos near cos=1 resolves angles only to sqrt(eps)
        X = generate_sphere_data(7, 9, seed=16)
        K = sequential_ntk(X, normalize=True)
        np.testing.assert_allclose(np.diag(K), 0.5, atol=1e-7)

    def test_unnormalized_diagonal_is_half_squared_norm(self):
        from linattn.attention import linearized_attention

        X = generate_sphere_data(7, 9, seed=17)
        K = sequential_ntk(X, normalize=False)
        F = linearized_attention(X)
        np.testing.assert_allclose(np.diag(K), 0.5 * np.sum(F**2, axis=1), rtol=1e-7)

    def test_spectrum_spread_tracks_cubed_gram_logged(self, capsys):
        # the constant relating kappa(K_seq) to kappa(G)^3 is unknown, so
        # the ratio is logged; only the amplification direction is asserted
        from linattn.datasets import generate_spectrum_data

        s = np.linspace(3.0, 1.0, 6)
        X = generate_spectrum_data(6, 12, s, seed=18)
        K = sequential_ntk(X, normalize=False)
        kappa_K = float(np.linalg.cond(K))
        kappa_G = float(np.linalg.cond(X @ X.T))
        with capsys.disabled():
            print(
                f"\nsequential-NTK spread: kappa(K_seq)={kappa_K:.1f}, "
                f"kappa(G)^3={kappa_G**3:.1f}, ratio={kappa_K / kappa_G**3:.3f}"
            )
        assert kappa_K > kappa_G

    def test_query_block(self):
        X = generate_sphere_data(6, 5, seed=19)
        q = generate_sphere_data(2, 5, seed=20)
        C = sequential_ntk(X, normalize=True, X_query=q)
        assert C.shape == (2, 6)


class TestNTKDistance:
    def test_identical(self):
        p = np.ones((3, 2))
        assert ntk_distance(p, p) == 0.0

    def test_unit_basis_difference(self):
        a = np.zeros(4)
        b = np.zeros(4)
        b[2] = 1.0
        assert ntk_distance(a, b) == pytest.approx(1.0)

    def test_half_matrix(self):
        a = np.zeros((2, 2))
        b = np.full((2, 2), 0.5)
        assert ntk_distance(a, b) == pytest.approx(1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ntk_distance(np.zeros(3), np.zeros(4))


class TestNTKDistanceCurve:
    def test_width_monotonicity_enforced(self):
        with pytest.raises(ValueError):
            NTKDistanceCurve(widths=[4, 4], distances=[1.0, 2.0], architecture="relu2l")

    def test_records(self):
        c = NTKDistanceCurve(
            widths=[4, 8], distances=[2.0, 1.0], architecture="relu2l", seed=3
        )
        recs = c.to_records()
        assert recs[0] == {
            "width": 4, "distance": 2.0, "architecture": "relu2l", "dataset": "", "seed": 3,
        }
