import math

import numpy as np
import pytest

from amp_retrain.errors import ConfigError, DomainError
from amp_retrain.glm import (
    AmpStateGlm,
    FD_STEP,
    GlmDataset,
    GlmParams,
    IdentityAggregator,
    LogisticLink,
    OptimalGlm,
    OptimalSign,
    ProbitLink,
    SignLink,
    amp_step_glm,
    error_curve_glm,
    hat_h_p,
    initial_amp_state_glm,
    link_from_name,
    onsager_coefficient_glm,
    optimal_aggregator_glm,
    optimal_aggregator_sign,
    overlap_glm,
    run_retraining_glm,
    sample_glm_dataset,
)
from amp_retrain.glm import test_error_glm as glm_error
from amp_retrain.gmm_se import constant_schedule
from amp_retrain.numerics import RngStream


class HalfLink:
    """Uninformative link h = 1/2: labels carry no margin information."""

    name = "half"
    discontinuities = ()

    def h(self, z):
        return np.full_like(np.asarray(z, dtype=float), 0.5)


def sign_params(alpha=2.0, p=0.2, n=1000, gamma=1.0):
    return GlmParams(gamma=gamma, alpha=alpha, p=p, link=SignLink(), n=n)


class TestLinks:
    def test_factory(self):
        assert isinstance(link_from_name("sign"), SignLink)
        assert link_from_name("logistic", 2.0).scale == 2.0
        assert isinstance(link_from_name("probit"), ProbitLink)
        with pytest.raises(ConfigError):
            link_from_name("cauchy")

    def test_scale_validation(self):
        with pytest.raises(ConfigError):
            LogisticLink(scale=-1.0)
        with pytest.raises(ConfigError):
            ProbitLink(scale=0.0)

    def test_hat_h_p_sign(self):
        link = SignLink()
        assert hat_h_p(3.0, link, 0.2) == pytest.approx(0.8)
        assert hat_h_p(-3.0, link, 0.2) == pytest.approx(0.2)

    def test_hat_h_p_pure_noise(self):
        for link in (SignLink(), LogisticLink(), ProbitLink()):
            assert hat_h_p(1.7, link, 0.5) == pytest.approx(0.5)

    def test_hat_h_p_logistic_center(self):
        assert hat_h_p(0.0, LogisticLink(), 0.3) == pytest.approx(0.5)

    def test_hat_h_p_range(self):
        zs = np.linspace(-20, 20, 101)
        vals = hat_h_p(zs, LogisticLink(), 0.1)
        assert np.all(vals >= 0.1 - 1e-12) and np.all(vals <= 0.9 + 1e-12)


class TestSampling:
    def test_no_flips(self):
        params = GlmParams(gamma=1.0, alpha=0.5, p=0.0, link=LogisticLink(), n=400)
        data = sample_glm_dataset(params, RngStream(1))
        assert np.array_equal(data.y_true, data.y_noisy)

    def test_sign_link_deterministic_labels(self):
        params = sign_params(n=500)
        data = sample_glm_dataset(params, RngStream(2))
        margins = data.X @ data.beta_true
        assert np.array_equal(data.y_true, np.sign(margins))

    def test_beta_normalization(self):
        params = GlmParams(gamma=1.7, alpha=0.5, p=0.1, link=LogisticLink(), n=600)
        data = sample_glm_dataset(params, RngStream(3))
        assert np.linalg.norm(data.beta_true) ** 2 / data.d == pytest.approx(1.7**2, abs=1e-12)

    def test_noisy_label_statistics(self):
        params = GlmParams(gamma=1.0, alpha=0.5, p=0.2, link=LogisticLink(), n=1000)
        data = sample_glm_dataset(params, RngStream(4))
        margins = data.X @ data.beta_true
        pos = margins > 0
        emp = np.mean(data.y_noisy[pos] == 1.0)
        model = np.mean(hat_h_p(margins[pos], params.link, params.p))
        se = math.sqrt(model * (1 - model) / pos.sum())
        assert abs(emp - model) <= 4 * se


class TestOptimalAggregator:
    def test_uninformative_link_collapses_to_zero(self):
        # with h = 1/2 the posterior mean is the plain Gaussian conditional
        # mean and the two terms cancel exactly
        params = GlmParams(gamma=1.0, alpha=2.0, p=0.2, link=HalfLink(), n=100)
        for u in (-2.0, 0.0, 1.3, 4.0):
            for yhat in (1, -1):
                assert abs(optimal_aggregator_glm(u, yhat, 0.7, params)) <= 1e-12

    def test_sign_quadrature_matches_closed_form(self):
        params = sign_params(alpha=2.0, p=0.2)
        for u in np.linspace(-3, 3, 13):
            for yhat in (1, -1):
                quad = optimal_aggregator_glm(float(u), yhat, 0.5, params)
                closed = optimal_aggregator_sign(float(u), yhat, 0.5, params)
                assert abs(quad - closed) <= 1e-6

    def test_sign_antisymmetry(self):
        params = sign_params(alpha=2.0, p=0.2)
        for u in np.linspace(-3, 3, 7):
            a = optimal_aggregator_glm(float(u), 1, 0.5, params)
            b = optimal_aggregator_glm(float(-u), -1, 0.5, params)
            assert abs(a + b) <= 1e-9

    def test_closed_form_at_origin(self):
        params = sign_params(alpha=2.0, p=0.2)
        eta = 0.5
        s = 1.0 / math.sqrt(1.0 / 2.0 + eta**2)
        expected = (1 - 2 * 0.2) * math.sqrt(2 / math.pi) / s
        assert optimal_aggregator_sign(0.0, 1, eta, params) == pytest.approx(expected, abs=1e-14)
        assert optimal_aggregator_sign(0.0, -1, eta, params) == pytest.approx(-expected, abs=1e-14)

    def test_closed_form_decays(self):
        params = sign_params(alpha=2.0, p=0.2)
        assert abs(optimal_aggregator_sign(1e4, 1, 0.5, params)) <= 1e-280

    def test_near_pure_noise_vanishes(self):
        params = sign_params(alpha=2.0, p=0.4999999)
        assert abs(optimal_aggregator_sign(0.7, 1, 0.5, params)) <= 1e-5

    def test_domain_errors(self):
        params = sign_params()
        with pytest.raises(DomainError):
            optimal_aggregator_sign(0.0, 1, 0.0, params)
        with pytest.raises(DomainError):
            optimal_aggregator_sign(0.0, 1, -0.5, params)
        with pytest.raises(DomainError):
            OptimalGlm.from_eta(0.0, params)  # sign link: use the closed form

    def test_logistic_smooth_eta_zero_allowed(self):
        params = GlmParams(gamma=1.0, alpha=1.0, p=0.2, link=LogisticLink(), n=100)
        v = optimal_aggregator_glm(0.3, 1, 0.0, params)
        assert math.isfinite(v)


class TestOnsagerGlm:
    def test_identity_zero(self):
        y = np.linspace(-1, 1, 9)
        yhat = np.ones(9)
        assert onsager_coefficient_glm(IdentityAggregator(), y, yhat) == 0.0

    def test_matches_dense_difference(self):
        params = sign_params(alpha=0.5, p=0.2)
        agg = OptimalSign.from_eta(0.8, params)
        gen = RngStream(6).generator()
        y = gen.standard_normal(200)
        yhat = np.sign(gen.standard_normal(200))
        c = onsager_coefficient_glm(agg, y, yhat)
        manual = np.mean(
            (agg.value(y + FD_STEP, yhat) - agg.value(y - FD_STEP, yhat)) / (2 * FD_STEP)
        )
        assert c == pytest.approx(float(manual), abs=1e-15)


class TestAmpStepGlm:
    def test_first_step_exact(self):
        params = sign_params(n=80, alpha=0.5)
        data = sample_glm_dataset(params, RngStream(7))
        state = amp_step_glm(initial_amp_state_glm(data), data, IdentityAggregator())
        assert np.array_equal(state.beta_est, data.X.T @ data.y_noisy)

    def test_zero_matrix(self):
        n, d = 20, 10
        data = GlmDataset(X=np.zeros((n, d)), beta_true=np.ones(d),
                          y_true=np.ones(n), y_noisy=np.ones(n))
        params = sign_params(n=n, alpha=0.5)
        agg = OptimalSign.from_eta(0.5, params)
        beta0 = np.linspace(1, 2, d)
        y0 = np.linspace(-1, 1, n)
        state = amp_step_glm(AmpStateGlm(beta0, y0, 1), data, agg)
        c = onsager_coefficient_glm(agg, y0, data.y_noisy)
        assert np.allclose(state.beta_est, -c * beta0, atol=1e-15)

    def test_against_straight_line_reimplementation(self):
        params = sign_params(alpha=0.5, p=0.2, n=50)
        assert params.d == 25
        data = sample_glm_dataset(params, RngStream(8))
        agg = OptimalSign.from_eta(0.7, params)
        state = initial_amp_state_glm(data)
        state = amp_step_glm(state, data, IdentityAggregator())
        state = amp_step_glm(state, data, agg)

        n, d, alpha, p, eta = 50, 25, 0.5, 0.2, 0.7
        beta = data.X.T @ data.y_noisy
        y = data.X @ beta - data.y_noisy * d / n
        s = 1.0 / math.sqrt(1 / alpha + eta**2)

        def g_fn(u):
            r = u * s / alpha
            num = (1 - 2 * p) * data.y_noisy * math.sqrt(2 / math.pi) * np.exp(-r * r / 2)
            den = 1 + (1 - 2 * p) * data.y_noisy * (2 * 0.5 * (1 + np.vectorize(math.erf)(r / math.sqrt(2))) - 1)
            return num / den / s

        h = 1e-5
        c = np.mean((g_fn(y + h) - g_fn(y - h)) / (2 * h))
        beta2 = data.X.T @ g_fn(y) - c * beta
        y2 = data.X @ beta2 - g_fn(y) * d / n
        assert np.max(np.abs(state.beta_est - beta2)) <= 1e-10
        assert np.max(np.abs(state.y_soft - y2)) <= 1e-10


class TestErrorCurve:
    def test_sign_chance_and_perfect(self):
        params = sign_params(n=100)
        data = sample_glm_dataset(params, RngStream(9))
        ortho = np.zeros(params.d)
        # build an exactly orthogonal vector
        ortho[0], ortho[1] = data.beta_true[1], -data.beta_true[0]
        assert glm_error(ortho, data, params) == pytest.approx(0.5, abs=1e-12)
        # arccos amplifies rounding near rho = 1 by sqrt(eps)
        assert glm_error(data.beta_true, data, params) == pytest.approx(0.0, abs=1e-7)

    def test_logistic_chance_level(self):
        params = GlmParams(gamma=1.0, alpha=2.0, p=0.1, link=LogisticLink(), n=100)
        assert error_curve_glm(0.0, params) == pytest.approx(0.5, abs=1e-10)

    def test_decreasing_in_overlap(self):
        for link in (SignLink(), LogisticLink(), ProbitLink(0.7)):
            params = GlmParams(gamma=1.2, alpha=1.5, p=0.1, link=link, n=100)
            rhos = np.linspace(-0.99, 0.99, 41)
            vals = [error_curve_glm(float(r), params) for r in rhos]
            assert np.all(np.diff(vals) < 0)

    def test_sign_quadrature_matches_arccos(self):
        params = sign_params(alpha=2.0)
        for rho in np.linspace(-0.99, 0.99, 21):
            quad = error_curve_glm(float(rho), params)
            assert abs(quad - math.acos(rho) / math.pi) <= 1e-8

    def test_monte_carlo_oracle_logistic(self):
        # classify fresh samples drawn from the generative model
        params = GlmParams(gamma=1.3, alpha=0.8, p=0.0, link=LogisticLink(), n=100)
        gen = RngStream(10).generator()
        d = 30
        beta = gen.standard_normal(d)
        beta *= 1.3 * math.sqrt(d) / np.linalg.norm(beta)
        theta = beta + 0.8 * np.linalg.norm(beta) / math.sqrt(d) * gen.standard_normal(d)
        rho = float(beta @ theta / np.linalg.norm(beta) / np.linalg.norm(theta))
        n_mc = 400_000
        # entry sd sqrt(alpha/d) reproduces the limiting margin law N(0, alpha*gamma^2)
        X = gen.standard_normal((n_mc, d)) * math.sqrt(params.alpha / d)
        margins = X @ beta
        y = np.where(gen.random(n_mc) < params.link.h(margins), 1.0, -1.0)
        emp = np.mean(np.sign(X @ theta) != y)
        se = math.sqrt(emp * (1 - emp) / n_mc)
        assert abs(error_curve_glm(rho, params) - emp) <= 4 * se


class TestRunRetrainingGlm:
    def test_single_step(self):
        params = sign_params(alpha=0.5, n=400)
        data = sample_glm_dataset(params, RngStream(11))
        traj = run_retraining_glm(params, constant_schedule(IdentityAggregator()),
                                  1, RngStream(11), data=data)
        beta1 = data.X.T @ data.y_noisy
        rho = overlap_glm(beta1, data.beta_true)
        assert traj.points[0].error == pytest.approx(math.acos(rho) / math.pi, abs=1e-14)

    def test_deterministic(self):
        params = sign_params(alpha=0.5, n=300)
        agg = OptimalSign.from_eta(0.6, params)
        a = run_retraining_glm(params, constant_schedule(agg), 3, RngStream(12, 4))
        b = run_retraining_glm(params, constant_schedule(agg), 3, RngStream(12, 4))
        assert [p.error for p in a.points] == [p.error for p in b.points]
