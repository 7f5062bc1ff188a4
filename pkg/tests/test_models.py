import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from abc_localize.core import RandomStream
from abc_localize.models import (
    BivGandKModel,
    GandKModel,
    MA2Model,
    NormalModel,
    RegressionModel,
    gandk_quantile,
    load_regression_design,
    ma2_invertible,
    make_regression_design,
    simulate_bivgandk,
    simulate_gandk,
    simulate_ma2,
    simulate_regression,
)
from abc_localize.summaries import gaussian_rank_correlation


def gen(seed=0):
    return RandomStream(seed).child(0).generator()


class TestPriors:
    def test_normal_prior_concentrates_at_mu0_for_tiny_phi0(self):
        m = NormalModel(phi0=1e-12)
        draws = np.array([m.prior_sample(gen(i))[0] for i in range(200)])
        assert np.max(np.abs(draws - m.mu0)) < 1e-4

    def test_ma2_prior_draws_satisfy_constraints(self):
        m = MA2Model(n=10)
        g = gen(1)
        draws = np.array([m.prior_sample(g) for _ in range(100_000)])
        assert all(ma2_invertible(th) for th in draws)
        assert np.all(draws[:, 1] < 1.0)

    def test_gandk_prior_marginal_means(self):
        m = GandKModel(n=10)
        g = gen(2)
        draws = np.array([m.prior_sample(g) for _ in range(100_000)])
        # mean of U(0,10) is 5, MC SE = (10/sqrt(12))/sqrt(1e5)
        assert np.all(np.abs(draws.mean(axis=0) - 5.0) < 0.03)

    def test_normal_prior_density_hand_value(self):
        m = NormalModel()
        # N(0;0,1) * IG(1;1,1) = 0.3989423 * e^-1
        val = math.exp(m.prior_logpdf((0.0, 1.0)))
        assert val == pytest.approx(0.14676266317373993, rel=1e-10)

    def test_ma2_prior_density_inside_and_outside(self):
        m = MA2Model(n=10)
        inside = math.exp(m.prior_logpdf((0.9, -0.05)))
        assert inside == pytest.approx(0.25, rel=1e-12)
        assert m.prior_logpdf((2.5, 0.0)) == -math.inf
        assert m.prior_logpdf((0.0, 1.5)) == -math.inf

    def test_regression_prior_support(self):
        m = RegressionModel()
        assert m.prior_logpdf((0.0, 0.0, 0.0, -1.0)) == -math.inf
        assert m.prior_logpdf((0.0, 0.0, 0.0, 1.0)) > -math.inf


class TestMa2Invertible:
    def test_paper_true_value(self):
        assert ma2_invertible((0.9, -0.05))

    def test_alternate_root_value(self):
        assert ma2_invertible((0.4860, 0.7591))

    def test_boundary_excluded(self):
        assert not ma2_invertible((0.0, -1.0))


class TestMa2Simulator:
    def test_white_noise_limit(self):
        y = simulate_ma2((0.0, 0.0), 100_000, gen(3))
        # var(y) = 1, SE of sample var ~ sqrt(2/n)
        assert y.var() == pytest.approx(1.0, abs=0.014)

    def test_lag0_autocovariance_near_binding_value(self):
        # b1 = 1 + 0.81 + 0.0025 = 1.8125; SE measured by replication
        vals = []
        for i in range(20):
            y = simulate_ma2((0.9, -0.05), 10_000, gen(100 + i))
            vals.append(np.dot(y, y) / y.shape[0])
        se = np.std(vals, ddof=1) / math.sqrt(len(vals))
        assert abs(np.mean(vals) - 1.8125) < 3 * se + 1e-12

    def test_fixed_stream_reproduces_series(self):
        a = simulate_ma2((0.3, 0.2), 1000, gen(4))
        b = simulate_ma2((0.3, 0.2), 1000, gen(4))
        assert np.array_equal(a, b)

    def test_length_and_validation(self):
        assert simulate_ma2((0.1, 0.1), 17, gen(5)).shape == (17,)
        with pytest.raises(ValueError):
            simulate_ma2((0.1, 0.1), 0, gen(5))


class TestGandKQuantile:
    def test_z_zero_returns_location(self):
        for a in (-3.0, 0.0, 7.5):
            assert gandk_quantile(0.0, a, 2.0, 1.5, 0.3) == a

    def test_reduces_to_affine_for_g0_k0(self):
        for z in np.linspace(-4, 4, 17):
            assert gandk_quantile(z, 2.0, 1.5, 0.0, 0.0) == pytest.approx(
                2.0 + 1.5 * z, rel=1e-14
            )

    def test_high_precision_point(self):
        # independent evaluation of the quantile formula at
        # (a,b,g,k,c)=(3,1,2,0.5,0.8), z=1 (mpmath, 40 digits)
        assert gandk_quantile(1.0, 3.0, 1.0, 2.0, 0.5, 0.8) == pytest.approx(
            5.2758589898744813, rel=1e-12
        )

    def test_monotone_in_z_over_prior_box(self):
        g = gen(6)
        z = np.sort(g.standard_normal(200))
        for _ in range(2000):
            a, b, gg, k = g.uniform(0.0, 10.0, 4)
            q = [gandk_quantile(zi, a, b, gg, k) for zi in z]
            assert np.all(np.diff(q) > 0)


class TestGandKSimulator:
    def test_normal_special_case_mean(self):
        x = simulate_gandk((3.0, 1.0, 0.0, 0.0), 100_000, gen(7))
        assert x.mean() == pytest.approx(3.0, abs=0.01)

    def test_sample_median_near_location(self):
        # median = Q(0) = a; tolerance from replication of the sample median
        meds = [
            np.median(simulate_gandk((3.0, 1.0, 2.0, 0.5), 10_000, gen(200 + i)))
            for i in range(20)
        ]
        assert abs(np.mean(meds) - 3.0) < 0.04

    def test_fixed_stream_reproduces_sample(self):
        a = simulate_gandk((1.0, 2.0, 3.0, 0.5), 100, gen(8))
        b = simulate_gandk((1.0, 2.0, 3.0, 0.5), 100, gen(8))
        assert np.array_equal(a, b)


class TestBivGandKSimulator:
    theta = (3.0, 1.0, 1.0, 0.5, 4.0, 0.5, 2.0, 0.5, 0.6)

    def test_independent_margins_have_near_zero_rank_correlation(self):
        th = list(self.theta)
        th[8] = 0.0
        x = simulate_bivgandk(th, 10_000, gen(9))
        assert abs(gaussian_rank_correlation(x[:, 0], x[:, 1])) < 0.03

    def test_comonotone_boundary(self):
        th = list(self.theta)
        th[8] = 1.0 - 1e-12
        x = simulate_bivgandk(th, 2_000, gen(10))
        assert gaussian_rank_correlation(x[:, 0], x[:, 1]) > 0.999

    def test_paper_parameter_rank_correlation(self):
        vals = [
            gaussian_rank_correlation(*simulate_bivgandk(self.theta, 1000, gen(300 + i)).T)
            for i in range(20)
        ]
        # tolerance from replication SD (~0.02 at n=1000)
        assert abs(np.mean(vals) - 0.6) < 0.06

    def test_invalid_correlation_rejected(self):
        th = list(self.theta)
        th[8] = 1.0
        with pytest.raises(ValueError, match="r"):
            simulate_bivgandk(th, 10, gen(11))

    def test_marginals_match_univariate_simulator(self):
        # same-seed comparison excluded: distinct streams, KS at 1%
        x = simulate_bivgandk(self.theta, 10_000, gen(12))
        u1 = simulate_gandk(self.theta[:4], 10_000, gen(13))
        u2 = simulate_gandk(self.theta[4:8], 10_000, gen(14))
        assert ks_2samp(x[:, 0], u1).pvalue > 0.01
        assert ks_2samp(x[:, 1], u2).pvalue > 0.01


class TestRegression:
    def test_shipped_design_matches_generator(self):
        assert np.array_equal(load_regression_design(), make_regression_design())

    def test_design_shape_and_rank(self):
        x = load_regression_design()
        assert x.shape == (117, 3)
        assert np.linalg.matrix_rank(x) == 3

    def test_near_zero_scale_recovers_linear_predictor(self):
        m = RegressionModel()
        beta = np.array([1.0, 2.0, -1.0])
        y = simulate_regression(np.append(beta, 1e-12), m, gen(15))
        assert np.max(np.abs(y - m.design @ beta)) < 1e-9

    def test_residual_sd_matches_scale(self):
        m = RegressionModel()
        beta = np.array([1.0, 2.0, -1.0])
        sds = []
        for i in range(50):
            y = simulate_regression(np.append(beta, 2.0), m, gen(400 + i))
            sds.append((y - m.design @ beta).std(ddof=0))
        se = np.std(sds, ddof=1) / math.sqrt(len(sds))
        assert abs(np.mean(sds) - 2.0) < 3 * se + 0.02

    def test_contamination_inflates_outliers(self):
        m = RegressionModel(noise_kind="contaminated-gaussian", contamination=(0.1, 5.0))
        beta = np.array([1.0, 2.0, -1.0])
        y = simulate_regression(np.append(beta, 1.0), m, gen(16))
        r = y - m.design @ beta
        assert np.sum(np.abs(r) > 3.0) >= 5  # ~12 contaminated draws expected

    def test_fixed_stream_reproduces_response(self):
        m = RegressionModel(noise_kind="contaminated-gaussian")
        th = (1.0, 2.0, -1.0, 1.0)
        assert np.array_equal(
            simulate_regression(th, m, gen(17)), simulate_regression(th, m, gen(17))
        )


class TestDeterminismAcrossModels:
    @pytest.mark.parametrize(
        "model,theta",
        [
            (NormalModel(n=50), (0.3, 1.2)),
            (MA2Model(n=64), (0.5, 0.2)),
            (GandKModel(n=64), (3.0, 1.0, 2.0, 0.5)),
            (BivGandKModel(n=64), (3.0, 1.0, 1.0, 0.5, 4.0, 0.5, 2.0, 0.5, 0.6)),
            (RegressionModel(), (1.0, 2.0, -1.0, 1.0)),
        ],
    )
    def test_simulate_is_pure_in_theta_and_stream(self, model, theta):
        a = model.simulate(theta, gen(18))
        b = model.simulate(theta, gen(18))
        assert np.array_equal(a, b)
