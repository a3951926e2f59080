import numpy as np
import pytest

from rpurn.kernel import (
    clt_covariance,
    linear_model_sigma,
    matrix_power_closed_form,
    rp_linear_model,
    spectral_radius,
    transition_matrix_beta0,
)
from rpurn.model import ModelParams, derive_constants

M2 = np.array([[0.25, -0.25], [-0.25, 0.25]])


def params(alpha=1.0, beta=0.5, b0=(0.5, 0.5), B0=(1.0, 1.0), **kw):
    return ModelParams(alpha=alpha, beta=beta, b0=b0, B0=B0, **kw)


class TestTransitionMatrix:
    def test_hand_example(self):
        p = params(alpha=2, beta=0, b0=[1, 1])
        assert np.allclose(transition_matrix_beta0(p), [[0.75, 0.25], [0.25, 0.75]])

    def test_no_reinforcement_rows_are_p0(self):
        p = params(alpha=0, beta=0, b0=[1, 1])
        assert np.allclose(transition_matrix_beta0(p), 0.5)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            k = rng.integers(2, 6)
            p = params(alpha=rng.uniform(0, 5), beta=0, b0=rng.uniform(0.1, 2, k), B0=np.ones(k))
            P = transition_matrix_beta0(p)
            assert np.abs(P.sum(axis=1) - 1).max() < 1e-12
            assert np.all(P >= 0)

    def test_wrong_regime(self):
        with pytest.raises(ValueError, match="beta = 0"):
            transition_matrix_beta0(params(beta=0.5))


class TestMatrixPower:
    def test_hand_example_n2(self):
        p = params(alpha=2, beta=0, b0=[1, 1])
        assert np.abs(
            matrix_power_closed_form(p, 2) - [[0.625, 0.375], [0.375, 0.625]]
        ).max() < 1e-15

    def test_identity_at_zero(self):
        assert np.allclose(matrix_power_closed_form(params(beta=0), 0), np.eye(2))

    def test_matches_one_step(self):
        p = params(alpha=1.3, beta=0, b0=[0.4, 1.1])
        assert np.allclose(matrix_power_closed_form(p, 1), transition_matrix_beta0(p))

    @pytest.mark.parametrize("k", [2, 3, 5])
    def test_brute_force_oracle(self, k):
        rng = np.random.default_rng(k)
        p = params(alpha=rng.uniform(0.2, 3), beta=0, b0=rng.uniform(0.1, 2, k), B0=np.ones(k))
        P = transition_matrix_beta0(p)
        for n in range(51):
            assert np.abs(matrix_power_closed_form(p, n) - np.linalg.matrix_power(P, n)).max() < 1e-12

    def test_p0_is_left_fixed_point(self):
        p = params(alpha=1.7, beta=0, b0=[0.3, 0.9, 1.8], B0=[1, 1, 1])
        P = transition_matrix_beta0(p)
        p0 = derive_constants(p).p0
        assert np.abs(p0 @ P - p0).max() < 1e-12

    def test_rows_converge_to_p0(self):
        p = params(alpha=1.0, beta=0, b0=[1, 3])
        P100 = matrix_power_closed_form(p, 100)
        assert np.abs(P100 - [0.25, 0.75]).max() < 1e-12


class TestLinearModel:
    def test_hand_derived_matrices(self):
        lm = rp_linear_model(params(alpha=1, beta=0.5, b0=[0.5, 0.5], B0=[2, 0]))
        eye = np.eye(2)
        assert np.allclose(lm.a1, -1.5 * eye)
        assert np.allclose(lm.a2, 3.0 * eye)
        assert np.allclose(lm.ap, (5 / 6) * eye)
        assert np.allclose(lm.d0, 6.0 * eye)
        assert np.allclose(lm.d1, -7.5 * eye)
        assert np.allclose(lm.d2, 9.0 * eye)

    def test_d0_is_resolvent_scalar(self):
        # D0 = (1-gamma)^(-1) Id in every regime of the urn's linear model
        for alpha, beta in [(1, 0.5), (0.3, 0.0), (2, 0.9)]:
            p = params(alpha=alpha, beta=beta)
            lm = rp_linear_model(p)
            gamma = derive_constants(p).gamma
            assert np.allclose(lm.d0, np.eye(2) / (1 - gamma), rtol=1e-12)

    def test_d1_closed_form(self):
        p = params(alpha=1, beta=0.5, b0=[0.5, 0.5])
        lm = rp_linear_model(p)
        c = derive_constants(p)
        expected = -c.gamma * (1 - p.beta) / ((c.gamma - p.beta) * (1 - c.gamma))
        assert np.allclose(lm.d1, expected * np.eye(2))

    def test_sigma_is_inflated_multinomial(self):
        lm = rp_linear_model(params(alpha=1, beta=0.5, b0=[0.5, 0.5]))
        assert np.abs(lm.sigma - 6.6 * M2).max() < 1e-12

    def test_sigma_pi_identity(self):
        # diag(p0) - p0 p0^T == ((gamma-beta)^2 + 1 - gamma^2)/(gamma-beta)^2 * sigma_pi
        rng = np.random.default_rng(5)
        for _ in range(30):
            k = rng.integers(2, 5)
            p = params(
                alpha=rng.uniform(0.1, 4),
                beta=rng.uniform(0, 0.95),
                b0=rng.uniform(0.1, 2, k),
                B0=np.ones(k),
            )
            c = derive_constants(p)
            lm = rp_linear_model(p)
            m = np.diag(c.p0) - np.outer(c.p0, c.p0)
            factor = ((c.gamma - p.beta) ** 2 + 1 - c.gamma**2) / (c.gamma - p.beta) ** 2
            assert np.abs(m - factor * lm.sigma_pi).max() < 1e-12

    def test_wrong_regimes(self):
        with pytest.raises(ValueError):
            rp_linear_model(params(beta=1.0))
        with pytest.raises(ValueError):
            rp_linear_model(params(alpha=0))
        with pytest.raises(ValueError):
            rp_linear_model(params(b0=[0, 0], allow_zero_intrinsic=True))


class TestSigmaAssembly:
    def test_reproduces_inflated_multinomial(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            k = rng.integers(2, 5)
            p = params(
                alpha=rng.uniform(0.1, 4),
                beta=rng.uniform(0, 0.9),
                b0=rng.uniform(0.1, 2, k),
                B0=np.ones(k),
            )
            lm = rp_linear_model(p)
            assembled = linear_model_sigma(lm.a1, lm.a2, lm.ap, lm.sigma_pi)
            assert np.abs(assembled - lm.sigma).max() < 1e-10

    def test_zero_maps_to_zero(self):
        z = np.zeros((3, 3))
        assert np.allclose(linear_model_sigma(z, z, z, np.eye(3)), 0.0)

    def test_memoryless_chain(self):
        # ap = 0, a1 = 0 collapses to a2 sigma_pi a2^T
        a2 = np.array([[2.0, 1.0], [0.0, 1.0]])
        s = np.array([[1.0, 0.2], [0.2, 0.5]])
        out = linear_model_sigma(np.zeros((2, 2)), a2, np.zeros((2, 2)), s)
        assert np.allclose(out, a2 @ s @ a2.T)

    def test_scalar_coefficient(self):
        # D1^2 + 2 D1 D2 gamma + D2^2 = 24.75 at the hand-checked parameters
        eye = np.eye(2)
        out = linear_model_sigma(-1.5 * eye, 3 * eye, (5 / 6) * eye, (4 / 15) * M2)
        assert np.abs(out - 6.6 * M2).max() < 1e-12

    def test_contraction_precondition(self):
        eye = np.eye(2)
        with pytest.raises(ValueError, match="spectral radius"):
            linear_model_sigma(eye, eye, 1.5 * eye, np.eye(2))

    def test_sigma_pi_must_be_psd_symmetric(self):
        eye = np.eye(2)
        with pytest.raises(ValueError, match="symmetric"):
            linear_model_sigma(eye, eye, 0.5 * eye, np.array([[1.0, 0.5], [-0.5, 1.0]]))
        with pytest.raises(ValueError, match="semidefinite"):
            linear_model_sigma(eye, eye, 0.5 * eye, np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestSpectralRadius:
    def test_scalar_matrix(self):
        assert spectral_radius(0.8 * np.eye(4)) == pytest.approx(0.8, abs=1e-9)

    def test_zero_matrix(self):
        assert spectral_radius(np.zeros((3, 3))) == 0.0

    def test_generic_matrix(self):
        mat = np.array([[0.5, 0.3], [0.1, 0.4]])
        assert spectral_radius(mat) == pytest.approx(np.abs(np.linalg.eigvals(mat)).max(), abs=1e-8)


class TestCltCovariance:
    def test_beta_half_symmetric(self):
        out = clt_covariance(params(alpha=1, beta=0.5, b0=[0.5, 0.5]))
        assert np.abs(out - [[1.65, -1.65], [-1.65, 1.65]]).max() < 1e-12

    def test_beta_gt1_needs_psi(self):
        p = params(beta=2.0)
        with pytest.raises(ValueError, match="psi_inf"):
            clt_covariance(p)
        out = clt_covariance(p, psi_inf=[0.5, 0.5])
        assert np.allclose(out, M2)

    def test_alpha_zero_is_multinomial(self):
        out = clt_covariance(params(alpha=0, beta=0, b0=[0.5, 0.5]))
        assert np.allclose(out, M2)
        # beta = 1, alpha = 0: the blend is the limit
        out = clt_covariance(params(alpha=0, beta=1, b0=[1, 0], B0=[0, 1]))
        assert np.allclose(out, M2)

    def test_beta_one_rejected(self):
        with pytest.raises(ValueError, match="classical"):
            clt_covariance(params(beta=1.0))

    def test_row_sums_and_psd(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            k = rng.integers(2, 6)
            p = params(
                alpha=rng.uniform(0, 4),
                beta=rng.uniform(0, 0.95),
                b0=rng.uniform(0.1, 2, k),
                B0=np.ones(k),
            )
            cov = clt_covariance(p)
            assert np.abs(cov.sum(axis=1)).max() < 1e-12
            assert np.allclose(cov, cov.T)
            assert np.linalg.eigvalsh(cov).min() >= -1e-10
