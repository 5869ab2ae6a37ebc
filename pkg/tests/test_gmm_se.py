import math

import numpy as np
import pytest

from amp_retrain.errors import ConfigError, DomainError
from amp_retrain.gmm import (
    GmmParams,
    IdentityAggregator,
    SmoothedFullRT,
)
from amp_retrain.gmm_se import (
    SeMapSpec,
    SeStateGmm,
    cobweb_trace,
    eta_map_ct,
    eta_map_ft,
    eta_map_opt,
    find_crossover,
    find_fixed_points,
    label_atoms,
    opt_se_trace_gmm,
    optimal_aggregator_for_state,
    p_star,
    se_error_from_eta,
    se_error_gmm,
    se_init_gmm,
    se_step_gmm,
)
from amp_retrain.numerics import expect_gauss_1d, std_normal_cdf


def params_for(gamma=1.5, alpha=2.0, p=0.3, pi_plus=0.3, n=100):
    return GmmParams(gamma=gamma, alpha=alpha, p=p, pi_plus=pi_plus, n=n)


FIG_MAP_PARAMS = params_for()  # gamma=1.5, alpha=2, p=0.3, pi_plus=0.3


class TestInit:
    def test_exact_formula(self):
        state = se_init_gmm(params_for(gamma=1.5, p=0.3, alpha=2.0))
        assert state.eta == pytest.approx(0.6 / math.sqrt(2.0), abs=1e-15)
        assert state.sigma == 1.0

    def test_noiseless(self):
        state = se_init_gmm(params_for(gamma=1.5, p=0.0, alpha=2.0))
        assert state.eta == pytest.approx(1.5 / math.sqrt(2.0), abs=1e-15)

    def test_pure_noise_limit(self):
        state = se_init_gmm(params_for(p=0.4999999))
        assert abs(state.m) <= 1e-6

    def test_derived_fields_consistent(self):
        params = params_for()
        state = se_init_gmm(params)
        assert state.m_bar == pytest.approx(params.gamma * math.sqrt(params.alpha) * state.m, abs=1e-12)
        assert state.sigma_bar**2 == pytest.approx(
            params.alpha * (state.m**2 + state.sigma**2), abs=1e-12
        )
        assert state.eta == pytest.approx(state.m / state.sigma, abs=1e-15)


class TestStep:
    def test_identity_reenters_init(self):
        params = params_for()
        arbitrary = SeStateGmm(m=0.7, sigma=2.3, gamma=params.gamma, alpha=params.alpha)
        nxt = se_step_gmm(arbitrary, IdentityAggregator(), params)
        init = se_init_gmm(params)
        assert nxt.m == pytest.approx(init.m, abs=1e-12)
        assert nxt.sigma == pytest.approx(1.0, abs=1e-12)

    def test_optimal_step_self_consistency(self):
        # matched posterior mean: m' = (gamma/sqrt(alpha)) * sigma'^2
        params = params_for()
        state = se_init_gmm(params)
        for _ in range(4):
            agg = optimal_aggregator_for_state(state, params)
            state = se_step_gmm(state, agg, params)
            assert abs(state.m - params.gamma / math.sqrt(params.alpha) * state.sigma**2) <= 1e-9

    def test_optimal_step_matches_eta_map(self):
        params = params_for()
        state = se_init_gmm(params)
        for _ in range(4):
            expected = eta_map_opt(state.eta**2, params)
            agg = optimal_aggregator_for_state(state, params)
            state = se_step_gmm(state, agg, params)
            assert state.eta**2 == pytest.approx(expected, abs=1e-9)

    def test_smoothed_split_rule_matches_hermite_at_small_beta(self):
        # the split Gauss-Legendre path must agree with a plain Hermite
        # evaluation when the transition is mild
        params = params_for()
        state = se_init_gmm(params)
        agg = SmoothedFullRT(2.0)
        stepped = se_step_gmm(state, agg, params)
        m_acc = 0.0
        s2_acc = 0.0
        for w, y_lab, yhat in label_atoms(params):
            m_acc += w * y_lab * expect_gauss_1d(
                lambda g: agg.value(state.m_bar * y_lab + state.sigma_bar * g, yhat), 201
            )
            s2_acc += w * expect_gauss_1d(
                lambda g: agg.value(state.m_bar * y_lab + state.sigma_bar * g, yhat) ** 2, 201
            )
        assert stepped.m == pytest.approx(params.gamma / math.sqrt(params.alpha) * m_acc, abs=1e-9)
        assert stepped.sigma**2 == pytest.approx(s2_acc, abs=1e-9)


class TestErrorPrediction:
    def test_chance_level(self):
        params = params_for()
        state = SeStateGmm(m=0.0, sigma=1.0, gamma=params.gamma, alpha=params.alpha)
        assert se_error_gmm(state, params) == 0.5

    def test_infinite_snr_limit(self):
        assert se_error_from_eta(1e9, 1.5) == pytest.approx(std_normal_cdf(-1.5), abs=1e-9)

    def test_unit_snr(self):
        assert se_error_from_eta(1.0, 1.5) == pytest.approx(
            std_normal_cdf(-1.5 / math.sqrt(2.0)), abs=1e-15
        )

    def test_strictly_decreasing_in_eta(self):
        etas = np.linspace(0.0, 5.0, 100)
        errs = [se_error_from_eta(e, 1.5) for e in etas]
        assert np.all(np.diff(errs) < 0)


class TestMaps:
    def test_opt_at_zero_matches_label_only_value(self):
        # F(0) = (gamma^2/alpha) E[g~(0, Yhat)^2], a pure four-atom sum
        params = FIG_MAP_PARAMS
        log_odds = math.log((1 - params.p) / params.p)
        prior = math.log(params.pi_plus / params.pi_minus)
        expected = sum(
            w * math.tanh(0.5 * (yhat * log_odds + prior)) ** 2
            for w, _y, yhat in label_atoms(params)
        ) * params.gamma**2 / params.alpha
        assert eta_map_opt(0.0, params) == pytest.approx(expected, abs=1e-12)
        assert eta_map_opt(0.0, params) > 0

    def test_opt_nondecreasing(self):
        params = FIG_MAP_PARAMS
        us = np.linspace(0, 10, 201)
        vals = [eta_map_opt(u, params) for u in us]
        assert np.all(np.diff(vals) >= -1e-10)

    def test_opt_limit_below_bound(self):
        params = FIG_MAP_PARAMS
        assert eta_map_opt(1e8, params) < params.gamma**2 / params.alpha

    def test_ft_at_zero(self):
        assert eta_map_ft(0.0, FIG_MAP_PARAMS) == 0.0

    def test_ct_at_zero_arithmetic(self):
        # (gamma^2/alpha) (1/2 - p)^2 / (1/2) with gamma=1.5, alpha=2, p=0.2
        params = params_for(p=0.2)
        assert eta_map_ct(0.0, params) == pytest.approx(1.125 * 0.09 / 0.5, abs=1e-12)

    def test_ft_large_u_limit(self):
        params = FIG_MAP_PARAMS
        expected = params.gamma**2 / params.alpha * (2 * std_normal_cdf(params.gamma) - 1) ** 2
        assert eta_map_ft(1e12, params) == pytest.approx(expected, abs=1e-9)

    def test_negative_u_rejected(self):
        with pytest.raises(DomainError):
            eta_map_opt(-0.1, FIG_MAP_PARAMS)

    def test_dominance_over_sharp_limits(self):
        for p in (0.1, 0.3):
            params = params_for(p=p)
            for u in np.linspace(0, 10, 50):
                fo = eta_map_opt(u, params)
                assert fo >= eta_map_ft(u, params) - 1e-9
                assert fo >= eta_map_ct(u, params) - 1e-9


class TestFixedPoints:
    def test_synthetic_halving_map(self):
        assert find_fixed_points(lambda u: 0.5 * u, u_max=5.0, grid=100) == [0.0]

    def test_opt_map_fixed_point(self):
        spec = SeMapSpec(variant="opt", params=FIG_MAP_PARAMS)
        roots = find_fixed_points(spec, u_max=10.0)
        assert roots
        u_star = roots[0]
        assert 0.0 < u_star < 10.0
        f = spec.as_function()
        assert abs(f(u_star) - u_star) <= 1e-8

    def test_cobweb_monotone_from_both_sides(self):
        spec = SeMapSpec(variant="opt", params=FIG_MAP_PARAMS)
        up = cobweb_trace(spec, 0.04, 10)
        us_up = [u for u, _ in up.points]
        assert us_up == sorted(us_up)
        down = cobweb_trace(spec, 1.0, 10)
        us_down = [u for u, _ in down.points]
        assert us_down == sorted(us_down, reverse=True)
        # both approach the same fixed point
        u_star = find_fixed_points(spec, u_max=10.0)[0]
        assert abs(us_up[-1] - u_star) <= 1e-3
        assert abs(us_down[-1] - u_star) <= 1e-3

    def test_cobweb_single_step(self):
        trace = cobweb_trace(lambda u: 0.5 * u + 1, 2.0, 1)
        assert trace.points == [(2.0, 2.0)]

    def test_cobweb_constant_at_fixed_point(self):
        spec = SeMapSpec(variant="opt", params=FIG_MAP_PARAMS)
        u_star = find_fixed_points(spec, u_max=10.0)[0]
        trace = cobweb_trace(spec, u_star, 6)
        assert all(abs(u - u_star) <= 1e-7 for u, _ in trace.points)

    def test_monotone_trajectory_below_fixed_point(self):
        spec = SeMapSpec(variant="opt", params=FIG_MAP_PARAMS)
        u_star = find_fixed_points(spec, u_max=10.0)[0]
        trace = cobweb_trace(spec, 0.5 * u_star, 15)
        us = [u for u, _ in trace.points]
        assert all(b >= a - 1e-12 for a, b in zip(us[:-1], us[1:]))


class TestCrossover:
    def test_reference_value(self):
        roots = find_crossover(params_for(p=0.25))
        assert roots
        assert roots[0] == pytest.approx(1.54, abs=0.05)

    def test_residual(self):
        params = params_for(p=0.25)
        u = find_crossover(params)[0]
        assert abs(eta_map_ct(u, params) - eta_map_ft(u, params)) <= 1e-6

    def test_no_crossover_without_noise(self):
        # at p=0 the consensus map dominates everywhere: no crossing
        assert find_crossover(params_for(p=0.0)) == []


class TestPStar:
    def test_interior_root(self):
        result = p_star(params_for())
        assert result.condition_met  # gamma^2 = 2.25 >= sqrt(pi) ~ 1.77
        assert 0.0 < result.value < 0.5
        assert abs(result.residual) <= 1e-10

    def test_endpoint_is_trivial_root(self):
        params = params_for()
        g2, alpha = params.gamma**2, params.alpha
        h_half = std_normal_cdf(-g2 * 0.0 / math.sqrt(g2 * 0.0 + alpha)) - 0.5
        assert h_half == 0.0

    def test_condition_flagging(self):
        weak = params_for(gamma=0.8, alpha=2.0)  # gamma^2 = 0.64 < sqrt(pi)
        assert not p_star(weak).condition_met

    def test_monotone_se_above_threshold(self):
        params = params_for()
        ps = p_star(params).value
        for p in np.linspace(ps, 0.49, 5):
            noisy = params_for(p=float(p))
            u = se_init_gmm(noisy).eta ** 2
            for _ in range(20):
                u_next = eta_map_opt(u, noisy)
                assert u_next >= u - 1e-12
                u = u_next


class TestSmoothedTrajectory:
    def test_beta_100_close_to_sharp_limit(self):
        params = GmmParams(gamma=1.5, alpha=0.8, p=0.2, pi_plus=0.3, n=100)
        agg = SmoothedFullRT(100.0)
        state = se_init_gmm(params)
        u = state.eta**2
        for _ in range(10):
            state = se_step_gmm(state, agg, params, order=61)
            u = eta_map_ft(u, params)
            err_smooth = se_error_gmm(state, params)
            err_limit = se_error_from_eta(math.sqrt(u), params.gamma)
            assert abs(err_smooth - err_limit) <= 0.01


class TestPluginSchedule:
    def test_estimate_matches_theory_at_scale(self):
        from amp_retrain.gmm import run_retraining_gmm, sample_gmm_dataset
        from amp_retrain.gmm_se import estimate_se_state_gmm, make_plugin_opt_schedule_gmm
        from amp_retrain.numerics import RngStream

        params = GmmParams(gamma=1.5, alpha=0.8, p=0.2, pi_plus=0.5, n=2000)
        data = sample_gmm_dataset(params, RngStream(55))
        theta1 = data.X.T @ data.y_noisy / math.sqrt(data.n)
        est = estimate_se_state_gmm(theta1, data.mu, params)
        init = se_init_gmm(params)
        assert est.m == pytest.approx(init.m, abs=0.1)
        assert est.sigma == pytest.approx(init.sigma, abs=0.1)
        # the exploratory data-driven schedule runs and stays finite
        traj = run_retraining_gmm(params, make_plugin_opt_schedule_gmm(params),
                                  4, RngStream(55), data=data)
        assert traj.diverged_at is None
        assert all(0.0 <= pt.error <= 1.0 for pt in traj.points)


class TestCobwebDivergence:
    def test_divergence_is_flagged(self):
        trace = cobweb_trace(lambda u: u * u * 1e308 + 1.0, 2.0, 6)
        assert trace.diverged
        assert len(trace.points) < 6


class TestSeMapSpec:
    def test_validation(self):
        with pytest.raises(ConfigError):
            SeMapSpec(variant="bogus", params=FIG_MAP_PARAMS)
        with pytest.raises(ConfigError):
            SeMapSpec(variant="smoothed_ft", params=FIG_MAP_PARAMS)

    def test_smoothed_spec_converges_to_limit(self):
        params = FIG_MAP_PARAMS
        f_sharp = SeMapSpec(variant="ft_limit", params=params).as_function()
        f_smooth = SeMapSpec(variant="smoothed_ft", params=params, beta=300.0).as_function()
        for u in (0.2, 1.0, 3.0):
            assert f_smooth(u) == pytest.approx(f_sharp(u), abs=5e-3)

    def test_opt_trace_matches_map_iterates(self):
        params = FIG_MAP_PARAMS
        states = opt_se_trace_gmm(params, 5)
        u = states[0].eta ** 2
        for state in states[1:]:
            u = eta_map_opt(u, params)
            assert state.eta**2 == pytest.approx(u, abs=1e-8)
