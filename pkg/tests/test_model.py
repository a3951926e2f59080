import numpy as np
import pytest
from hypothesis import given, strategies as st

from rpurn.model import (
    ModelParams,
    RegimeTag,
    classify_regime,
    derive_constants,
    predictive_mean,
)


def params(alpha=1.0, beta=0.5, b0=(0.5, 0.5), B0=(1.0, 1.0), **kw):
    return ModelParams(alpha=alpha, beta=beta, b0=b0, B0=B0, **kw)


class TestValidation:
    def test_needs_two_colors(self):
        with pytest.raises(ValueError, match="at least 2 colors"):
            params(b0=[1.0], B0=[1.0])

    def test_empty_color_rejected(self):
        with pytest.raises(ValueError, match="strictly positive in every color"):
            params(b0=[1.0, 0.0], B0=[1.0, 0.0])

    def test_zero_intrinsic_needs_opt_in(self):
        with pytest.raises(ValueError, match="allow_zero_intrinsic"):
            params(b0=[0, 0])
        p = params(b0=[0, 0], allow_zero_intrinsic=True)
        assert p.b0_total == 0

    def test_negative_masses_rejected(self):
        with pytest.raises(ValueError):
            params(alpha=-1)
        with pytest.raises(ValueError):
            params(b0=[1, -0.5])
        with pytest.raises(ValueError):
            params(B0=[-1, 1])

    def test_beta_above_one_alpha_zero_needs_B0(self):
        with pytest.raises(ValueError, match="nonzero B0"):
            params(alpha=0, beta=2, b0=[1, 1], B0=[0, 0])

    def test_arrays_are_read_only(self):
        p = params()
        with pytest.raises(ValueError):
            p.b0[0] = 7.0


class TestRegime:
    @pytest.mark.parametrize(
        "beta,tag",
        [
            (0.0, RegimeTag.BETA_ZERO),
            (0.5, RegimeTag.BETA_IN_UNIT_INTERVAL),
            (1.0, RegimeTag.BETA_ONE),
            (2.0, RegimeTag.BETA_ABOVE_ONE),
        ],
    )
    def test_tag_from_beta(self, beta, tag):
        assert classify_regime(params(beta=beta)).tag is tag

    def test_flags(self):
        r = classify_regime(params(alpha=0, b0=[0, 0], B0=[1, 1], allow_zero_intrinsic=True))
        assert r.alpha_zero and r.b0_zero
        r = classify_regime(params())
        assert not r.alpha_zero and not r.b0_zero


class TestDeriveConstants:
    def test_symmetric_beta0(self):
        # alpha = |b0| collapses gamma to 1/2 and lambda to (1+g)/(1-g) = 3
        c = derive_constants(params(alpha=1, beta=0, b0=[0.5, 0.5]))
        assert c.gamma == pytest.approx(0.5, abs=1e-15)
        assert c.lam == pytest.approx(3.0, abs=1e-12)

    def test_hand_derived_midrange(self):
        c = derive_constants(params(alpha=1, beta=0.5, b0=[0.5, 0.5]))
        assert c.gamma == pytest.approx(5 / 6, abs=1e-15)
        assert c.lam == pytest.approx(6.6, abs=1e-12)
        assert c.r_star == pytest.approx(3.0, abs=1e-15)
        assert np.allclose(c.p0, [0.5, 0.5])

    def test_zero_intrinsic_leaves_lambda_undefined(self):
        c = derive_constants(params(b0=[0, 0], allow_zero_intrinsic=True))
        assert c.gamma == 1.0
        assert c.lam is None and "lambda" in c.undefined
        assert c.p0 is None
        assert c.regime.b0_zero

    @pytest.mark.parametrize("beta", [1.0, 1.5, 3.0])
    def test_beta_ge_one_is_undefined_not_error(self, beta):
        c = derive_constants(params(beta=beta))
        assert c.lam is None and c.gamma is None
        assert "undefined for regime" in c.undefined["lambda"]

    def test_gamma_relations(self):
        # gamma - beta = alpha/r* and 1 - gamma = (1-beta)|b0|/r*
        rng = np.random.default_rng(7)
        for _ in range(200):
            alpha = rng.uniform(0.01, 10)
            beta = rng.uniform(0, 0.99)
            s = rng.uniform(0.05, 8)
            c = derive_constants(params(alpha=alpha, beta=beta, b0=[s / 2, s / 2]))
            assert beta < c.gamma < 1
            assert (c.gamma - beta) == pytest.approx(alpha / c.r_star, rel=1e-12)
            assert (1 - c.gamma) == pytest.approx((1 - beta) * s / c.r_star, rel=1e-12)
            assert c.lam > 1

    def test_beta0_lambda_collapse(self):
        # at beta = 0, lambda == (1+gamma)/(1-gamma) exactly
        for alpha in [0.2, 1, 3, 11]:
            c = derive_constants(params(alpha=alpha, beta=0))
            assert c.lam == pytest.approx((1 + c.gamma) / (1 - c.gamma), rel=1e-14)

    def test_alpha_to_zero_limits(self):
        # gamma decreases to beta and lambda decreases to 1 along a shrinking alpha grid
        beta = 0.4
        gammas, lams = [], []
        for alpha in [1.0, 0.3, 0.1, 0.01, 1e-4, 1e-8]:
            c = derive_constants(params(alpha=alpha, beta=beta))
            gammas.append(c.gamma)
            lams.append(c.lam)
        assert all(g1 > g2 for g1, g2 in zip(gammas, gammas[1:]))
        assert all(l1 > l2 for l1, l2 in zip(lams, lams[1:]))
        assert gammas[-1] == pytest.approx(beta, abs=1e-8)
        assert lams[-1] == pytest.approx(1.0, abs=1e-7)
        c = derive_constants(params(alpha=0, beta=beta))
        assert c.gamma == beta and c.lam == pytest.approx(1.0, abs=1e-15)

    def test_beta_one_no_reinforcement_keeps_total(self):
        c = derive_constants(params(alpha=0, beta=1, b0=[1, 1], B0=[2, 2]))
        assert c.r_star == pytest.approx(6.0)

    def test_json_round_trip(self):
        d = derive_constants(params()).to_dict()
        assert d["lambda"] == pytest.approx(6.6)
        assert d["regime"]["tag"] == "BetaInUnitInterval"


class TestPredictiveMean:
    def test_direct_ratio(self):
        assert np.allclose(predictive_mean([1, 1], [0.5, 1]), [3 / 7, 4 / 7])

    def test_degenerate_mass(self):
        assert np.allclose(predictive_mean([0, 0], [0, 1]), [0, 1])

    def test_initial_convention(self):
        # n = 0 predictive mean is the normalized starting composition
        assert np.allclose(predictive_mean([1, 0], [0, 1]), [0.5, 0.5])

    def test_zero_total_mass(self):
        with pytest.raises(ValueError, match="total mass"):
            predictive_mean([0, 0], [0, 0])

    @given(
        scale=st.floats(min_value=1e-6, max_value=1e6),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    def test_rescaling_invariance(self, scale, seed):
        rng = np.random.default_rng(seed)
        b0 = rng.uniform(0, 3, size=4)
        B = rng.uniform(0.01, 3, size=4)
        base = predictive_mean(b0, B)
        scaled = predictive_mean(scale * b0, scale * B)
        assert np.allclose(base, scaled, atol=1e-12)
        assert base.sum() == pytest.approx(1.0, abs=1e-12)
