import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import norm

from spiked_edgeworth import analysis
from spiked_edgeworth import simulation as sim
from spiked_edgeworth.edgeworth import (GoeParams, SpikeParams, centering_scaling, corrected_cdf, cumulants,
										normal_cdf, relative_error_roots)
from spiked_edgeworth.errors import DomainError
from spiked_edgeworth.simulation import SimConfig

ALGEBRAIC = ["kappa2 sigma^2 = 4", "p1 closed form = cumulant form", "CDF = Hermite form", "alpha2 = display",
			 "alpha0 = display", "mu(g) = limit form"]


def simulated(n, p, factor=0.5, replicates=500, seed=11, method="secular"):
	ell = (1 + factor) * (1 + math.sqrt(p / n))
	return sim.monte_carlo(SimConfig(n=n, p=p, ell=ell, replicates=replicates, seed=seed, method=method),
						   progress=False)


def brute_force_ks(samples, cdf):
	x = sorted(samples)
	count = len(x)
	distance = 0.0
	for i, value in enumerate(x):
		f = float(cdf(np.array([value]))[0])
		distance = max(distance, abs((i + 1) / count - f), abs(i / count - f))
	return distance


class TestKolmogorovSmirnov:

	def test_single_sample(self):
		assert analysis.ks_distance([0.0], normal_cdf) == 0.5

	def test_matches_brute_force(self, rng):
		for _ in range(1000):
			samples = rng.normal(size=rng.integers(1, 8))
			expected = brute_force_ks(samples, normal_cdf)
			assert analysis.ks_distance(samples, normal_cdf) == pytest.approx(expected, abs=1e-15)

	def test_empty(self):
		with pytest.raises(DomainError):
			analysis.ks_distance([], normal_cdf)

	def test_order_invariant(self, rng):
		samples = rng.normal(size=50)
		assert analysis.ks_distance(samples, normal_cdf) == analysis.ks_distance(samples[::-1], normal_cdf)

	def test_gaussian_samples(self):
		samples = norm.rvs(size=100_000, random_state=np.random.default_rng(3))
		assert analysis.ks_distance(samples, normal_cdf) < 1.95 / math.sqrt(100_000)

	def test_point_mass(self):
		assert analysis.ks_distance(np.zeros(10), lambda x: (x >= 1).astype(float)) == 1.0


class TestRectifiedCdf:

	def test_monotone_and_bounded(self):
		approx = cumulants(SpikeParams.from_dimensions(1.2 * (1 + math.sqrt(0.1)), 50, 5))
		x = np.linspace(-12, 12, 2001)
		rectified = analysis.rectified_corrected_cdf(approx)(x)
		assert np.all(np.diff(rectified) >= 0)
		assert np.all((rectified >= 0) & (rectified <= 1))

	def test_unsorted_points(self):
		approx = cumulants(SpikeParams.from_dimensions(3.0, 100, 100))
		x = np.array([2.0, -1.0, 0.5])
		assert_allclose(analysis.rectified_corrected_cdf(approx)(x), corrected_cdf(x, approx), rtol=1e-15)


class TestCompare:

	def test_small_sample(self):
		samples = simulated(50, 5, replicates=10)
		report = analysis.compare(samples, analysis.params_for(samples))
		assert report.n_samples == 10
		assert 0 < report.ks_vs_normal <= 1
		assert 0 < report.ks_vs_corrected <= 1
		assert report.improvement == report.ks_vs_normal - report.ks_vs_corrected
		assert report.metadata == samples.metadata()
		assert_allclose(report.sample_mean, np.mean(samples.r_n), rtol=1e-12)

	def test_predicted_moments(self):
		samples = simulated(100, 10, replicates=20)
		params = analysis.params_for(samples)
		report = analysis.compare(samples, params)
		approx = cumulants(params)
		assert_allclose(report.predicted_skewness, approx.kappa3 * approx.kappa2 ** -1.5 / math.sqrt(100), rtol=1e-12)
		assert_allclose(report.predicted_mean, approx.mu_g / math.sqrt(approx.kappa2) / 10, rtol=1e-12)
		h = params.ell - 1
		assert report.validity_index == pytest.approx((h ** 3 + 0.1) ** 2 / (h ** 2 - 0.1) ** 3 / 100)

	def test_mismatched_params(self):
		samples = simulated(50, 5, replicates=10)
		with pytest.raises(DomainError):
			analysis.compare(samples, SpikeParams.from_dimensions(samples.config.ell, 60, 6))
		with pytest.raises(DomainError):
			analysis.compare(samples, SpikeParams.from_dimensions(samples.config.ell * 1.1, 50, 5))
		with pytest.raises(DomainError):
			analysis.compare(samples, GoeParams(theta=2.0, p=5))

	def test_report_json(self, tmp_path):
		samples = simulated(50, 5, replicates=10)
		report = analysis.compare(samples, analysis.params_for(samples))
		report.write(tmp_path / "report.json")
		written = json.loads((tmp_path / "report.json").read_text())
		assert written["ks_vs_normal"] == report.ks_vs_normal
		assert written["metadata"]["seed"] == 11

	def test_goe(self):
		config = SimConfig(n=50, p=50, ell=2.0, replicates=30, seed=2, method="goe")
		samples = sim.monte_carlo(config, progress=False)
		params = analysis.params_for(samples)
		assert isinstance(params, GoeParams)
		report = analysis.compare(samples, params)
		assert_allclose(report.validity_index, 1 / (50 * 27), rtol=1e-12)
		assert report.predicted_skewness == pytest.approx(2 * math.sqrt(2) / 3 ** 1.5 / math.sqrt(50))

	def test_skewness_standard_error(self):
		assert math.isnan(analysis.skewness_standard_error(2))
		assert analysis.skewness_standard_error(10_000) == pytest.approx(math.sqrt(6 / 10_000), rel=1e-3)


class TestSensitivity:

	def test_drift(self):
		samples = simulated(400, 60, replicates=2000)
		drift = analysis.sensitivity_drift(samples, 0.1)
		assert drift.gamma_n == 0.15
		rho, sigma = centering_scaling(samples.config.ell, 0.1)
		assert_allclose(drift.mean_limit_centered, np.mean(math.sqrt(400) * (samples.ell_hat - rho) / sigma),
						rtol=1e-10)
		assert drift.mean_limit_centered > 0
		assert drift.ratio > 3

	def test_goe_rejected(self):
		samples = sim.monte_carlo(SimConfig(n=20, p=20, ell=2.0, replicates=5, seed=0, method="goe"), progress=False)
		with pytest.raises(DomainError):
			analysis.sensitivity_drift(samples, 1.0)


class TestFigureData:

	def test_bulk_edge_and_histogram(self):
		samples = simulated(100, 100, replicates=300)
		figure = analysis.figure_data(samples, analysis.params_for(samples))
		assert figure.bulk_edge == 4.0
		assert figure.bins == analysis.DEFAULT_BINS
		widths = np.diff(figure.histogram_edges)
		assert_allclose(np.sum(figure.histogram_density * widths), 1.0, atol=1e-9)
		assert figure.grid[0] < samples.ell_hat.min() and figure.grid[-1] > samples.ell_hat.max()
		assert_allclose((figure.grid[0], figure.grid[-1]), (figure.histogram_edges[0], figure.histogram_edges[-1]))

	def test_grid_mass(self):
		samples = simulated(100, 10, replicates=300)
		params = analysis.params_for(samples)
		figure = analysis.figure_data(samples, params, grid_points=2000)
		approx = cumulants(params)
		ends = math.sqrt(100) * (figure.grid[[0, -1]] - approx.rho) / approx.sigma
		cdf = corrected_cdf(ends, approx)
		assert_allclose(figure.metadata["grid_mass_corrected"], cdf[1] - cdf[0], rtol=1e-5)
		assert figure.metadata["grid_mass_corrected"] <= 1.0 + 1e-6

	def test_goe_bulk_edge(self):
		samples = sim.monte_carlo(SimConfig(n=30, p=30, ell=2.5, replicates=50, seed=0, method="goe"), progress=False)
		figure = analysis.figure_data(samples, analysis.params_for(samples), bins=20)
		assert figure.bulk_edge == 2.0

	@pytest.mark.parametrize("n", [50, 100])
	@pytest.mark.parametrize("gamma", [0.1, 1.0])
	def test_density_crossings(self, n, gamma):
		samples = simulated(n, round(gamma * n))
		params = analysis.params_for(samples)
		figure = analysis.figure_data(samples, params)
		approx = cumulants(params)
		expected = approx.rho + approx.sigma * relative_error_roots(approx) / math.sqrt(n)
		crossings = analysis.density_crossings(figure)
		step = figure.grid[1] - figure.grid[0]
		assert len(crossings) == 3
		assert_allclose(crossings, expected, rtol=0, atol=step)

	def test_invalid_sizes(self):
		samples = simulated(50, 5, replicates=20)
		with pytest.raises(DomainError):
			analysis.figure_data(samples, analysis.params_for(samples), bins=5)
		with pytest.raises(DomainError):
			analysis.figure_data(samples, analysis.params_for(samples), grid_points=50)

	def test_write(self, tmp_path):
		samples = simulated(50, 5, replicates=50)
		figure = analysis.figure_data(samples, analysis.params_for(samples), bins=10, grid_points=100)
		paths = figure.write(tmp_path, "run")
		assert sorted(path.name for path in paths.values()) == ["run.density.csv", "run.histogram.csv", "run.json"]
		assert paths["density"].read_text().splitlines()[0] == "y,f_corrected,f_normal"
		assert len(paths["histogram"].read_text().splitlines()) == 11
		assert json.loads(paths["metadata"].read_text())["bins"] == 10


class TestIdentities:

	@pytest.mark.parametrize("ell, n, p", [(3.0, 100, 100), (2.0, 100, 25), (1.5 * (1 + math.sqrt(2.0)), 100, 200)])
	def test_all_identities(self, ell, n, p):
		residuals = analysis.identity_residuals(SpikeParams.from_dimensions(ell, n, p))
		assert len(residuals) == 17
		assert residuals["residual"].max() < 1e-8, residuals.to_string()

	def test_algebraic_identities_on_grid(self, supercritical_grid):
		for ell, n, p in supercritical_grid:
			residuals = analysis.identity_residuals(SpikeParams.from_dimensions(ell, n, p))
			algebraic = residuals[residuals["identity"].isin(ALGEBRAIC)]
			assert len(algebraic) == len(ALGEBRAIC)
			assert algebraic["residual"].max() < 1e-10, (ell, n, p)
