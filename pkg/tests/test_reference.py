import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import invgamma

from abc_localize.core import RandomStream
from abc_localize.models import NormalModel
from abc_localize.reference import (
    DensityGrid,
    S3AsymptoticReport,
    laplace_idealized_summaries,
    ma2_alternate_root,
    ma2_binding,
    normal_exact_marginals,
    s3_asymptotic_check,
)

MODEL = NormalModel(n=10)


@pytest.fixture(scope="module")
def data():
    gen = RandomStream(42).child(0).generator()
    return MODEL.simulate((0.0, 1.0), gen)


@pytest.fixture(scope="module")
def exact(data):
    return normal_exact_marginals(data, MODEL)


class TestDensityGrid:
    def test_normalization_and_moments(self):
        pts = np.linspace(-8, 8, 2001)
        g = DensityGrid(pts, np.exp(-0.5 * (pts - 1.0) ** 2)).normalize()
        assert np.trapezoid(g.density, g.points) == pytest.approx(1.0, abs=1e-9)
        assert g.mean() == pytest.approx(1.0, abs=1e-6)
        assert g.variance() == pytest.approx(1.0, abs=1e-4)

    def test_mode_interpolation_beats_grid_spacing(self):
        pts = np.linspace(-4, 4, 301)  # spacing ~0.027, mode off-grid
        g = DensityGrid(pts, np.exp(-0.5 * (pts - 0.01234) ** 2)).normalize()
        assert g.mode() == pytest.approx(0.01234, abs=1e-4)

    def test_rejects_unsorted_grid(self):
        with pytest.raises(ValueError, match="ascending"):
            DensityGrid(np.array([0.0, 0.0, 1.0]), np.ones(3))

    def test_rejects_badly_normalized_flag(self):
        pts = np.linspace(0, 1, 11)
        with pytest.raises(ValueError, match="integrates"):
            DensityGrid(pts, np.full(11, 5.0), normalized=True)


class TestNormalExactMarginals:
    def test_phi_grid_matches_closed_form_inverse_gamma(self, data, exact):
        ig = invgamma.pdf(
            exact.phi_sd_only.points, exact.phi_invgamma_shape, scale=exact.phi_invgamma_scale
        )
        ig = ig / np.trapezoid(ig, exact.phi_sd_only.points)
        assert np.max(np.abs(exact.phi_sd_only.density - ig)) < 1e-6

    def test_mean_only_posterior_is_wider(self, data, exact):
        # conditioning on the mean alone loses the scale information and
        # fattens the tails
        assert exact.mu_mean_only.variance() > exact.mu_full.variance()

    def test_mu_modes_close_for_near_zero_mean_data(self):
        # with ybar ~ 0 the prior pulls both posteriors identically
        gen = RandomStream(109).child(1).generator()
        y = MODEL.simulate((0.0, 1.0), gen)
        y = y - y.mean()  # exactly centred: modes coincide up to quadrature
        ex = normal_exact_marginals(y, MODEL)
        assert abs(ex.mu_full.mode() - ex.mu_mean_only.mode()) < 1e-3

    def test_phi_full_closed_form_matches_quadrature_over_mu(self, data, exact):
        # dual route: the Gaussian-convolution closed form vs direct
        # numerical integration of the mu integrand
        n = MODEL.n
        ybar = data.mean()
        pts = exact.phi_full.points[:: len(exact.phi_full.points) // 16]

        def integrand_log(phi):
            val, _ = quad(
                lambda mu: math.exp(-n * (mu - ybar) ** 2 / (2 * phi))
                * math.exp(-0.5 * (mu - MODEL.mu0) ** 2 / MODEL.phi0),
                ybar - 20,
                ybar + 20,
            )
            return math.log(val) - 0.5 * math.log(phi)

        ss = float(((data - ybar) ** 2).sum())
        logq = np.array(
            [
                -(MODEL.alpha + 1 + (n - 1) / 2) * math.log(p)
                - (MODEL.beta + ss / 2) / p
                + integrand_log(p)
                for p in pts
            ]
        )
        logc = exact.log_phi_full(pts)
        diff = logq - logc
        assert np.max(np.abs(diff - diff.mean())) < 1e-7

    def test_grid_refinement_stability(self, data):
        lo = normal_exact_marginals(data, MODEL, n_points=4096)
        hi = normal_exact_marginals(data, MODEL, n_points=8192)
        for name in ("mu_full", "mu_mean_only", "phi_sd_only", "phi_full"):
            a, b = lo.grid(name), hi.grid(name)
            assert abs(a.mean() - b.mean()) < 1e-4
            assert abs(a.variance() - b.variance()) < 1e-4

    def test_diffuse_prior_makes_mean_noninformative_for_phi(self):
        # with a diffuse location prior the two phi posteriors coincide
        gen = RandomStream(5).child(0).generator()
        y = NormalModel(n=10, phi0=1e6).simulate((0.0, 1.0), gen)
        ex = normal_exact_marginals(y, NormalModel(n=10, phi0=1e6))
        tv = 0.5 * np.trapezoid(
            np.abs(ex.phi_full.density - ex.phi_sd_only.density), ex.phi_full.points
        )
        assert tv < 0.02


class TestLaplace:
    def test_mu_mode_tracks_sample_mean_for_large_n(self):
        gen = RandomStream(6).child(0).generator()
        y = NormalModel(n=100_000).simulate((0.0, 1.0), gen)
        lap = laplace_idealized_summaries(y, NormalModel(n=100_000))
        assert abs(lap["mu_mode"] - y.mean()) < 1e-6

    def test_hessian_is_negative_definite_at_mode(self, data):
        # the fit raises when curvature fails; a plain call is the assertion
        laplace_idealized_summaries(data, MODEL)

    def test_deterministic(self, data):
        a = laplace_idealized_summaries(data, MODEL)
        b = laplace_idealized_summaries(data, MODEL)
        assert np.array_equal(a.values, b.values)

    def test_mu_pair_against_grid_oracle(self, data, exact):
        # The mode tracks the exact posterior mean to well under a tenth
        # of a posterior SD.  The curvature variance is systematically
        # *below* the exact variance (the posterior is t-like with ~12
        # dof, so the Gaussian fit misses the tails by ~20%): assert the
        # oracle-measured behaviour, not a tighter bound it cannot meet.
        lap = laplace_idealized_summaries(data, MODEL)
        mu_mean, mu_sd = exact.mu_full.mean(), exact.mu_full.sd()
        assert abs(lap["mu_mode"] - mu_mean) < 0.05 * mu_sd
        assert lap["mu_var"] < exact.mu_full.variance()
        assert lap["mu_var"] == pytest.approx(exact.mu_full.variance(), rel=0.30)

    def test_degenerate_data_rejected(self):
        with pytest.raises(ValueError, match="spread"):
            laplace_idealized_summaries(np.ones(10), MODEL)


class TestMa2Reference:
    def test_binding_at_origin(self):
        assert np.array_equal(ma2_binding((0.0, 0.0)), [1.0, 0.0, 0.0])

    def test_binding_at_true_parameter(self):
        b = ma2_binding((0.9, -0.05))
        assert np.allclose(b, [1.8125, 0.855, -0.05], atol=1e-12)

    def test_alternate_root_matches_published_value(self):
        alt = ma2_alternate_root((0.9, -0.05))
        assert alt is not None
        assert np.max(np.abs(alt - np.array([0.4860, 0.7591]))) < 1e-3

    def test_alternate_root_binding_agreement(self):
        alt = ma2_alternate_root((0.9, -0.05))
        b0 = ma2_binding((0.9, -0.05))
        b1 = ma2_binding(alt)
        assert np.max(np.abs(b0[:2] - b1[:2])) < 1e-6

    def test_root_is_involution(self):
        alt = ma2_alternate_root((0.9, -0.05))
        back = ma2_alternate_root(alt)
        assert np.max(np.abs(back - np.array([0.9, -0.05]))) < 1e-3

    def test_returned_root_is_invertible(self):
        from abc_localize.models import ma2_invertible

        for theta in ((0.9, -0.05), (0.5, 0.2), (-0.7, 0.1)):
            alt = ma2_alternate_root(theta)
            if alt is not None:
                assert ma2_invertible(alt)

    def test_noninvertible_input_rejected(self):
        with pytest.raises(ValueError, match="invertible"):
            ma2_alternate_root((2.5, 0.0))


class TestS3AsymptoticCheck:
    def test_zero_theta2_rejected(self):
        with pytest.raises(ValueError, match="theta2"):
            s3_asymptotic_check((0.9, 0.0), 100, 10, RandomStream(1))

    def test_report_fields_and_mean_clause(self):
        # small replication count keeps this a unit test; the acceptance
        # suite runs the full-size check
        rep = s3_asymptotic_check((0.9, -0.05), 2000, 200, RandomStream(2))
        assert isinstance(rep, S3AsymptoticReport)
        assert rep.expected_mean == -0.05
        assert rep.expected_variance == pytest.approx(2 * 0.05**2 / 2000)
        assert rep.mean_ok

    def test_variance_scales_inversely_with_n(self):
        r1 = s3_asymptotic_check((0.9, -0.05), 500, 400, RandomStream(3))
        r2 = s3_asymptotic_check((0.9, -0.05), 1000, 400, RandomStream(4))
        assert r1.sample_variance / r2.sample_variance == pytest.approx(2.0, rel=0.35)
