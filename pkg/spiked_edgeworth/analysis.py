"""
Goodness of fit of simulated replicates against the Gaussian limit and the Edgeworth-corrected law, and plot-ready
figure data on the ell_hat scale.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.stats import kstest, skew

from spiked_edgeworth import mp_functionals as mp
from spiked_edgeworth.edgeworth import (EdgeworthApprox, GoeParams, SpikeParams, centering_scaling, corrected_cdf,
										corrected_cdf_hermite, corrected_density, cumulants, goe_approx,
										hermite_coefficients, normal_cdf, normal_rescaled_density, p1,
										p1_cumulant_form, rescaled_density, validity_index)
from spiked_edgeworth.errors import DomainError
from spiked_edgeworth.simulation import SampleSet, standardize
from spiked_edgeworth.utils.utils import write_frame, write_json

logger = logging.getLogger(__name__)

DEFAULT_BINS: int = 100
DEFAULT_GRID_POINTS: int = 400
GRID_PADDING: float = 0.05

Params = SpikeParams | GoeParams


# =============================================================================
# 							DOMAIN TYPES
# =============================================================================

@dataclass(frozen=True)
class ComparisonReport:
	ks_vs_normal: float
	ks_vs_corrected: float
	sample_mean: float
	sample_var: float
	sample_skewness: float
	skewness_se: float
	predicted_skewness: float
	predicted_mean: float
	validity_index: float
	n_samples: int
	metadata: dict = field(default_factory=dict)

	@property
	def improvement(self) -> float:
		return self.ks_vs_normal - self.ks_vs_corrected

	def to_dict(self) -> dict:
		return asdict(self)

	def write(self, output: str | Path | None = None) -> str:
		return write_json(self.to_dict(), output)


@dataclass(frozen=True, eq=False)
class FigureData:
	"""
	Densities on the ell_hat scale together with the area-normalized histogram of the replicates.
	"""
	grid: np.ndarray
	corrected_density: np.ndarray
	normal_density: np.ndarray
	histogram_edges: np.ndarray
	histogram_density: np.ndarray
	bulk_edge: float
	metadata: dict = field(default_factory=dict)

	@property
	def bins(self) -> int:
		return len(self.histogram_density)

	def density_frame(self) -> pd.DataFrame:
		return pd.DataFrame({"y": self.grid, "f_corrected": self.corrected_density, "f_normal": self.normal_density})

	def histogram_frame(self) -> pd.DataFrame:
		return pd.DataFrame({
			"bin_left": self.histogram_edges[:-1],
			"bin_right": self.histogram_edges[1:],
			"density": self.histogram_density,
		})

	def write(self, output_dir: str | Path, stem: str = "figure") -> dict[str, Path]:
		"""
		Writes '<stem>.density.csv', '<stem>.histogram.csv' and the metadata '<stem>.json' into output_dir.
		:return: the written paths by kind
		"""
		output_dir = Path(output_dir)
		paths = {
			"density": output_dir / f"{stem}.density.csv",
			"histogram": output_dir / f"{stem}.histogram.csv",
			"metadata": output_dir / f"{stem}.json",
		}
		write_frame(self.density_frame(), paths["density"])
		write_frame(self.histogram_frame(), paths["histogram"])
		write_json(self.metadata, paths["metadata"])
		return paths


@dataclass(frozen=True)
class SensitivityDrift:
	gamma: float
	gamma_n: float
	mean_limit_centered: float
	mean_finite_centered: float

	@property
	def ratio(self) -> float:
		return abs(self.mean_limit_centered) / abs(self.mean_finite_centered)


# =============================================================================
# 							HELPERS
# =============================================================================

def approx_for(params: Params) -> EdgeworthApprox:
	if isinstance(params, GoeParams):
		return goe_approx(params)
	return cumulants(params)

def params_for(samples: SampleSet) -> Params:
	"""The model parameters a sample set was simulated under."""
	config = samples.config
	if config.method == "goe":
		return GoeParams(theta=config.ell, p=config.p)
	return SpikeParams.from_dimensions(config.ell, config.n, config.p)

def _check_matches(samples: SampleSet, params: Params):
	config = samples.config
	if isinstance(params, GoeParams):
		expected = (config.method == "goe", config.p == params.p, math.isclose(config.ell, params.theta, rel_tol=1e-12))
	else:
		expected = (config.method != "goe", (config.n, config.p) == (params.n, params.p),
					math.isclose(config.ell, params.ell, rel_tol=1e-12))
	if not all(expected):
		raise DomainError(f"Parameters {params} do not match the sample metadata {samples.metadata()}")

def rectified_corrected_cdf(approx: EdgeworthApprox) -> Callable[[np.ndarray], np.ndarray]:
	"""
	Corrected CDF clamped to [0, 1] and made non-decreasing by a running maximum over the evaluation points.
	"""
	def cdf(x):
		x = np.asarray(x, dtype=float)
		order = np.argsort(x, kind="stable")
		values = np.atleast_1d(corrected_cdf(x[order], approx, clamp=True))
		monotone = np.maximum.accumulate(values)
		if np.any(monotone != values):
			logger.debug("Running maximum rectified the left-tail dip of the corrected CDF")
		rectified = np.empty_like(monotone)
		rectified[order] = monotone
		return rectified
	return cdf

def skewness_standard_error(n_samples: int) -> float:
	"""Standard error of the sample skewness of n Gaussian observations."""
	n = n_samples
	if n < 3:
		return math.nan
	return math.sqrt(6 * n * (n - 1) / ((n - 2) * (n + 1) * (n + 3)))


# =============================================================================
# 							COMPARISON
# =============================================================================

def ks_distance(samples, cdf: Callable) -> float:
	"""
	Kolmogorov-Smirnov distance sup_i max(|i/N - F(x_(i))|, |(i-1)/N - F(x_(i))|) between the empirical CDF of the
	samples and a fully specified CDF.
	:param samples: sample values
	:param cdf: vectorized, non-decreasing distribution function
	:return: distance in [0, 1]
	"""
	x = np.asarray(samples, dtype=float)
	if x.size == 0:
		raise DomainError("KS distance requires at least one sample")
	return float(kstest(x, cdf).statistic)

def compare(samples: SampleSet, params: Params) -> ComparisonReport:
	"""
	Compares the standardized replicates with Phi and with the (rectified) corrected CDF.
	:param samples:
	:param params: SpikeParams, or GoeParams for GOE samples
	:return:
	"""
	_check_matches(samples, params)
	approx = approx_for(params)
	r_n = np.sort(samples.r_n)
	count = r_n.size
	if count == 0:
		raise DomainError("Cannot compare an empty sample set")

	if isinstance(params, GoeParams):
		index = 1 / (params.p * (params.theta ** 2 - 1) ** 3)
	else:
		index = validity_index(params)
	report = ComparisonReport(
		ks_vs_normal=ks_distance(r_n, normal_cdf),
		ks_vs_corrected=ks_distance(r_n, rectified_corrected_cdf(approx)),
		sample_mean=float(np.mean(r_n)),
		sample_var=float(np.var(r_n, ddof=1)) if count > 1 else math.nan,
		sample_skewness=float(skew(r_n, bias=False)) if count > 2 else math.nan,
		skewness_se=skewness_standard_error(count),
		predicted_skewness=approx.predicted_skewness,
		predicted_mean=approx.predicted_mean,
		validity_index=index,
		n_samples=count,
		metadata=samples.metadata(),
	)
	logger.debug(f"KS vs normal {report.ks_vs_normal:.5f}, vs corrected {report.ks_vs_corrected:.5f}")
	return report

def sensitivity_drift(samples: SampleSet, gamma: float) -> SensitivityDrift:
	"""
	Means of the replicates standardized with the limit gamma (rho(ell, gamma), sigma(ell, gamma)) and with the
	finite gamma_n used to simulate them. A shift of gamma_n of order n^-1/2 moves the first by a term of order one.
	"""
	config = samples.config
	if config.method == "goe":
		raise DomainError("Aspect ratio sensitivity is defined for the spiked covariance model only")
	rho, sigma = centering_scaling(config.ell, gamma)
	limit_centered = standardize(samples.ell_hat, rho, sigma, config.n)
	return SensitivityDrift(
		gamma=gamma,
		gamma_n=config.gamma_n,
		mean_limit_centered=float(np.mean(limit_centered)),
		mean_finite_centered=float(np.mean(samples.r_n)),
	)


# =============================================================================
# 							FIGURE DATA
# =============================================================================

def figure_data(samples: SampleSet, params: Params, bins: int = DEFAULT_BINS,
				grid_points: int = DEFAULT_GRID_POINTS) -> FigureData:
	"""
	Corrected and Gaussian densities of ell_hat on the sample range padded by 5% on both sides, with a histogram
	of the replicates over the same range.
	:param samples:
	:param params:
	:param bins: number of equal-width histogram bins (>= 10)
	:param grid_points: number of density grid points (>= 100)
	:return:
	"""
	if bins < 10 or grid_points < 100:
		raise DomainError(f"Need bins >= 10 and grid_points >= 100, got: bins={bins}, grid_points={grid_points}")
	_check_matches(samples, params)
	lo, hi = float(np.min(samples.ell_hat)), float(np.max(samples.ell_hat))
	if not hi > lo:
		raise DomainError(f"Degenerate sample range [{lo!r}, {hi!r}]")
	pad = GRID_PADDING * (hi - lo)
	span = (lo - pad, hi + pad)

	approx = approx_for(params)
	grid = np.linspace(*span, grid_points)
	corrected = np.asarray(rescaled_density(grid, approx))
	normal = np.asarray(normal_rescaled_density(grid, approx))
	density, edges = np.histogram(samples.ell_hat, bins=bins, range=span, density=True)
	bulk_edge = 2.0 if isinstance(params, GoeParams) else (1 + math.sqrt(samples.gamma_n)) ** 2

	metadata = {
		**samples.metadata(),
		"bulk_edge": bulk_edge,
		"bins": bins,
		"grid_points": grid_points,
		"range": list(span),
		"alpha2": approx.alpha2,
		"alpha0": approx.alpha0,
		# trapezoid mass of the density columns; the shortfall from 1 is the tail mass outside the grid
		"grid_mass_corrected": float(np.trapezoid(corrected, grid)),
		"grid_mass_normal": float(np.trapezoid(normal, grid)),
	}
	return FigureData(
		grid=grid,
		corrected_density=corrected,
		normal_density=normal,
		histogram_edges=edges,
		histogram_density=density,
		bulk_edge=bulk_edge,
		metadata=metadata,
	)

def density_crossings(figure: FigureData) -> np.ndarray:
	"""
	Grid locations where the corrected and Gaussian density columns cross, by linear interpolation.
	"""
	difference = figure.corrected_density - figure.normal_density
	above = difference >= 0
	crossings = np.flatnonzero(above[:-1] != above[1:])
	left, right = difference[crossings], difference[crossings + 1]
	weight = left / (left - right)
	return figure.grid[crossings] + weight * (figure.grid[crossings + 1] - figure.grid[crossings])


# =============================================================================
# 							IDENTITY SUITE
# =============================================================================

def identity_residuals(params: SpikeParams) -> pd.DataFrame:
	"""
	Algebraic and quadrature identities tying the closed forms, the cumulant forms and the numerical functionals
	together at gamma_n. The residual is |value - reference| / max(1, |reference|).
	:param params:
	:return: frame with columns identity, value, reference, residual
	"""
	ell, gamma = params.ell, params.gamma_n
	approx = cumulants(params)
	alpha2, alpha0 = hermite_coefficients(params)
	g = mp.resolvent_kernel(ell, gamma)
	x = np.linspace(-4, 4, 81)
	step = 1e-6 * ell
	rho_difference = (centering_scaling(ell + step, gamma)[0] - centering_scaling(ell - step, gamma)[0]) / (2 * step)
	h = 1e-5
	cdf_difference = (np.asarray(corrected_cdf(x + h, approx)) - np.asarray(corrected_cdf(x - h, approx))) / (2 * h)
	density_mass, _ = quad(lambda t: corrected_density(t, approx), -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)

	rows = [
		("kappa2 sigma^2 = 4", approx.kappa2 * approx.sigma ** 2, 4.0),
		("p1 closed form = cumulant form",
		 np.max(np.abs(np.asarray(p1(x, params)) - np.asarray(p1_cumulant_form(x, approx)))), 0.0),
		("CDF = Hermite form", np.max(np.abs(np.asarray(corrected_cdf(x, approx))
											 - np.asarray(corrected_cdf_hermite(x, approx)))), 0.0),
		("alpha2 = display", approx.alpha2, alpha2),
		("alpha0 = display", approx.alpha0, alpha0),
		("F(g) = 1/ell", mp.mp_expect(g, gamma, "companion"), mp.f_g(ell, gamma)),
		("F(g^2)", mp.mp_expect(lambda lam: g(lam) ** 2, gamma, "companion"), mp.f_g2(ell, gamma)),
		("F(g^3)", mp.mp_expect(lambda lam: g(lam) ** 3, gamma, "companion"), mp.f_g3(ell, gamma)),
		("mu(g) = bs_mean(g)", mp.bs_mean(g, gamma), mp.mu_g(ell, gamma)),
		("mu(g) = limit form", mp.mu_g_limit_form(ell, gamma), mp.mu_g(ell, gamma)),
		("companion m1 = gamma", mp.mp_expect(lambda lam: lam, gamma, "companion"), gamma),
		("companion m2 = gamma(1 + gamma)", mp.mp_expect(lambda lam: lam ** 2, gamma, "companion"),
		 gamma * (1 + gamma)),
		("standard m1 = 1", mp.mp_expect(lambda lam: lam, gamma), 1.0),
		("standard m2 = 1 + gamma", mp.mp_expect(lambda lam: lam ** 2, gamma), 1 + gamma),
		("rho' = finite difference", mp.rho_derivative(ell, gamma), rho_difference),
		("density mass = 1", density_mass, 1.0),
		("density = CDF finite difference",
		 np.max(np.abs(np.asarray(corrected_density(x, approx)) - cdf_difference)), 0.0),
	]
	df = pd.DataFrame(rows, columns=["identity", "value", "reference"])
	df["value"] = df["value"].astype(float)
	df["residual"] = (df["value"] - df["reference"]).abs() / np.maximum(1.0, df["reference"].abs())
	return df
