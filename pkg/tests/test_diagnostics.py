import math

import numpy as np
import pytest
from scipy.special import ndtr

from abc_localize.core import DistanceMetric, ParamVector, Population, RandomStream
from abc_localize.diagnostics import (
    ComparisonReport,
    MarginalComparison,
    ProbeResult,
    kde_1d,
    mass_in_ball,
    shared_grid,
    silverman_bandwidth,
    total_variation,
)
from abc_localize.reference import DensityGrid


def gen(seed):
    return RandomStream(seed).child(0).generator()


def normal_grid_density(points, mu, sd):
    d = np.exp(-0.5 * ((points - mu) / sd) ** 2)
    return DensityGrid(points, d).normalize()


class TestKde:
    def test_recovers_standard_normal(self):
        x = gen(0).standard_normal(100_000)
        grid = np.linspace(-5, 5, 1001)
        k = kde_1d(x, grid)
        assert total_variation(k, normal_grid_density(grid, 0.0, 1.0)) < 0.02

    def test_nonnegative_and_normalized(self):
        x = gen(1).standard_normal(500)
        k = kde_1d(x, np.linspace(-6, 6, 512))
        assert np.all(k.density >= 0)
        assert np.trapezoid(k.density, k.points) == pytest.approx(1.0, abs=1e-9)

    def test_affine_equivariance(self):
        x = gen(2).standard_normal(2000)
        grid = np.linspace(-5, 5, 801)
        base = kde_1d(x, grid)
        mapped = kde_1d(2.0 * x + 3.0, 2.0 * grid + 3.0)
        # densities transform by the jacobian 1/2
        assert np.max(np.abs(mapped.density - base.density / 2.0)) < 1e-8

    def test_mean_preserved_on_wide_grid(self):
        x = gen(3).standard_normal(5000) * 1.7 + 0.4
        bw = silverman_bandwidth(x)
        grid = np.linspace(x.min() - 10 * bw, x.max() + 10 * bw, 4001)
        k = kde_1d(x, grid)
        assert k.mean() == pytest.approx(x.mean(), abs=1e-6)

    def test_zero_spread_rejected(self):
        with pytest.raises(ValueError, match="spread"):
            kde_1d(np.ones(100), np.linspace(0, 2, 10))

    def test_minimum_sample_size(self):
        with pytest.raises(ValueError, match="at least 10"):
            kde_1d(np.arange(5.0), np.linspace(0, 5, 10))

    def test_silverman_rule_value(self):
        x = gen(4).standard_normal(10_000)
        sd = x.std()
        q75, q25 = np.percentile(x, [75, 25])
        expect = 0.9 * min(sd, (q75 - q25) / 1.349) * 10_000 ** (-0.2)
        assert silverman_bandwidth(x) == pytest.approx(expect, rel=1e-12)


class TestTotalVariation:
    grid = np.linspace(-8, 8, 2001)

    def test_identical_densities(self):
        a = normal_grid_density(self.grid, 0.0, 1.0)
        assert total_variation(a, a) == 0.0

    def test_disjoint_supports(self):
        pts = np.linspace(0.0, 1.0, 2000)
        a = DensityGrid(pts, np.where(pts < 0.45, 1.0, 0.0)).normalize()
        b = DensityGrid(pts, np.where(pts > 0.55, 1.0, 0.0)).normalize()
        assert total_variation(a, b) == pytest.approx(1.0, abs=1e-3)

    def test_shifted_normals_closed_form(self):
        # TV(N(0,1), N(d,1)) = 2 Phi(d/2) - 1
        a = normal_grid_density(self.grid, 0.0, 1.0)
        b = normal_grid_density(self.grid, 0.5, 1.0)
        assert total_variation(a, b) == pytest.approx(2 * ndtr(0.25) - 1, abs=1e-6)

    def test_grid_mismatch_rejected(self):
        a = normal_grid_density(self.grid, 0.0, 1.0)
        b = normal_grid_density(self.grid + 0.001, 0.0, 1.0)
        with pytest.raises(ValueError, match="identical"):
            total_variation(a, b)

    def test_metric_properties_on_random_triples(self):
        g = gen(5)
        for _ in range(50):
            mus = g.uniform(-1, 1, 3)
            sds = g.uniform(0.5, 2.0, 3)
            a, b, c = (normal_grid_density(self.grid, m, s) for m, s in zip(mus, sds))
            assert total_variation(a, b) == total_variation(b, a)
            assert total_variation(a, c) <= (
                total_variation(a, b) + total_variation(b, c) + 1e-12
            )
            assert 0.0 <= total_variation(a, b) <= 1.0


class TestMassInBall:
    def make_population(self):
        thetas = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 4.0], [0.1, 0.0]])
        return Population(
            param_names=("x", "y"),
            summary_names=("s",),
            thetas=thetas,
            summaries=np.zeros((4, 1)),
            rho_full=np.zeros(4),
            epsilon_full=1.0,
            metric=DistanceMetric(),
            seed_lineage=RandomStream(0),
        )

    def test_infinite_radius_captures_all(self):
        pop = self.make_population()
        c = ParamVector(np.array([100.0, 100.0]), ("x", "y"))
        assert mass_in_ball(pop, c, math.inf) == 1.0

    def test_zero_radius_off_particles(self):
        pop = self.make_population()
        c = ParamVector(np.array([50.0, 50.0]), ("x", "y"))
        assert mass_in_ball(pop, c, 0.0) == 0.0

    def test_counts_by_euclidean_distance_in_subset(self):
        pop = self.make_population()
        c = ParamVector(np.array([0.0, 0.0]), ("x", "y"))
        assert mass_in_ball(pop, c, 0.5) == 0.5  # (0,0) and (0.1,0)
        assert mass_in_ball(pop, c, 1.0) == 0.75
        cx = ParamVector(np.array([3.0]), ("x",))
        assert mass_in_ball(pop, cx, 0.1, params=("x",)) == 0.25


class TestComparisonReport:
    def test_json_round_trip(self):
        rep = ComparisonReport(gold_label="gold")
        rep.entries.append(MarginalComparison("run_a", "mu", 0.12, 0.5, 0.1))
        rep.probes.append(ProbeResult("run_a", ("mu",), (0.9,), 0.15, 0.05))
        back = ComparisonReport.from_json(rep.to_json())
        assert back.gold_label == "gold"
        assert back.entry("run_a", "mu").tv_vs_gold == 0.12
        assert back.probes[0].params == ("mu",)

    def test_tv_range_validated(self):
        with pytest.raises(ValueError):
            MarginalComparison("a", "p", 1.5, 0.0, 1.0)

    def test_missing_entry_raises(self):
        rep = ComparisonReport(gold_label="gold")
        with pytest.raises(KeyError):
            rep.entry("nope", "mu")


def test_shared_grid_covers_all_samples_with_margin():
    a = gen(6).standard_normal(500)
    b = gen(7).standard_normal(500) + 10.0
    grid = shared_grid([a, b], n_points=256)
    assert grid.shape == (256,)
    assert grid[0] < a.min() and grid[-1] > b.max()
