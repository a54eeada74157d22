"""
Command-line interface: evaluate the corrected law, check identities, simulate, compare and export figure data.
"""
import functools
import logging
import math
from pathlib import Path

import click
import numpy as np
import pandas as pd

from spiked_edgeworth import analysis
from spiked_edgeworth.edgeworth import (GOE_MEAN_TERMS, MODES, GoeParams, SpikeParams, cornish_fisher, corrected_cdf,
										corrected_density, corrected_quantile, cumulants, goe_approx, goe_correction,
										normal_cdf, p1, validity_index)
from spiked_edgeworth.errors import DomainError, NumericError
from spiked_edgeworth.simulation import METHODS, SampleSet, SimConfig, monte_carlo
from spiked_edgeworth.utils.utils import (fmt, log_divider, log_params, log_setup, log_stat, log_table, parse_grid,
										  write_frame, write_json)

WORKERS_ENVVAR = "SPIKED_EDGEWORTH_WORKERS"


# =============================================================================
# 							SHARED OPTIONS
# =============================================================================

def exits_on_error(command):
	"""
	Domain errors exit with code 1, numeric errors with code 2; the message goes to stderr.
	"""
	@functools.wraps(command)
	def wrapper(*args, **kwargs):
		try:
			return command(*args, **kwargs)
		except DomainError as error:
			logging.error(str(error))
			click.get_current_context().exit(1)
		except NumericError as error:
			logging.error(str(error))
			click.get_current_context().exit(2)
	return wrapper

def _grid_callback(ctx, param, value):
	if value is None:
		return None
	try:
		return parse_grid(value)
	except ValueError as error:
		raise click.BadParameter(str(error))

def model_options(n_default: int | None = None):
	"""--n, --p, --gamma, --ell and --ell-factor."""
	def decorate(command):
		options = [
			click.option("--n", type=click.IntRange(min=1), required=n_default is None, default=n_default,
						 show_default=n_default is not None, help="Sample count n"),
			click.option("--p", type=click.IntRange(min=1), default=None,
						 help="Noise dimension p (overrides --gamma, then gamma_n = p/n)"),
			click.option("--gamma", type=float, default=None, help="Aspect ratio, p = round(gamma n)"),
			click.option("--ell", type=float, default=None, help="Spike strength ell"),
			click.option("--ell-factor", type=float, default=None,
						 help="Relative distance above the transition, ell = (1 + f)(1 + sqrt(gamma_n))"),
		]
		for option in reversed(options):
			command = option(command)
		return command
	return decorate

def points_options(command):
	command = click.option("--grid", default=None, callback=_grid_callback,
						   help="Evaluation grid lo:hi:step (both ends included)")(command)
	command = click.option("--x", "xs", type=float, multiple=True, help="Evaluation point (repeatable)")(command)
	return command

def output_options(command):
	command = click.option("--format", "output_format", type=click.Choice(["csv", "json"]), default="csv",
						   show_default=True, help="Output format")(command)
	command = click.option("--output", type=click.Path(dir_okay=False), default=None,
						   help="Write to this file instead of stdout")(command)
	return command

def simulation_options(command):
	options = [
		click.option("--replicates", type=click.IntRange(min=1), default=10000, show_default=True,
					 help="Number of Monte Carlo replicates"),
		click.option("--seed", type=click.IntRange(min=0, max=2 ** 64 - 1), default=0, show_default=True,
					 help="Master seed of the per-replicate streams"),
		click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True, envvar=WORKERS_ENVVAR,
					 show_envvar=True, help="Worker processes"),
		click.option("--no-progress", is_flag=True, default=False, help="Hide the progress bar"),
	]
	for option in reversed(options):
		command = option(command)
	return command

def _resolve(n, p, gamma, ell, ell_factor, seed=None) -> SpikeParams:
	params = SpikeParams.resolve(n, ell=ell, ell_factor=ell_factor, gamma=gamma, p=p)
	log_params(params.n, params.p, params.gamma_n, params.ell, seed)
	return params

def _points(xs, grid) -> np.ndarray:
	points = list(xs) + ([] if grid is None else list(grid))
	if not points:
		raise DomainError("No evaluation points: use --x and/or --grid")
	return np.asarray(points, dtype=float)

def _emit(df: pd.DataFrame, output_format: str, output: str | None, header: dict | None = None):
	if output_format == "csv":
		text = write_frame(df, output)
	else:
		text = write_json({**(header or {}), "rows": df.to_dict(orient="records")}, output)
	if output is None:
		click.echo(text, nl=False)
	else:
		logging.info(f"Written to {output}")


# =============================================================================
# 								COMMANDS
# =============================================================================

@click.group()
@click.option("-v", "--verbose", is_flag=True, default=False, help="Log solver and quadrature details")
@click.option("-q", "--quiet", is_flag=True, default=False, help="Only log warnings and errors")
def cli(verbose, quiet):
	"""
	Edgeworth correction for the largest eigenvalue of a rank-one spiked sample covariance matrix.
	Results go to stdout (or --output); the effective parameters and diagnostics are logged to stderr.
	"""
	log_setup(logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO)


@cli.command()
@model_options()
@points_options
@click.option("--mode", type=click.Choice(MODES), default="finite_gamma_n", show_default=True,
			  help="Aspect ratio used by the correction")
@click.option("--limit-gamma", type=float, default=None,
			  help="Limit aspect ratio for --mode limit_gamma (0 gives the fixed-p limit)")
@click.option("--clamp", is_flag=True, default=False, help="Clip the corrected CDF to [0, 1]")
@output_options
@exits_on_error
def approx(n, p, gamma, ell, ell_factor, xs, grid, mode, limit_gamma, clamp, output, output_format):
	"""
	Evaluates the corrected CDF Phi + n^-1/2 p_1 phi, the corrected density and p_1 at the given points.
	"""
	params = _resolve(n, p, gamma, ell, ell_factor)
	if limit_gamma is not None:
		params = SpikeParams(ell=params.ell, gamma_n=params.gamma_n, n=params.n, p=params.p, gamma=limit_gamma)
	points = _points(xs, grid)
	approximation = cumulants(params, mode)
	log_stat("rho_n", fmt(approximation.rho))
	log_stat("sigma_n", fmt(approximation.sigma))
	log_stat("alpha2, alpha0", f"{fmt(approximation.alpha2)}, {fmt(approximation.alpha0)}")
	log_stat("validity index", fmt(validity_index(params)))

	df = pd.DataFrame({
		"x": points,
		"corrected_cdf": np.atleast_1d(corrected_cdf(points, approximation, clamp=clamp)),
		"corrected_density": np.atleast_1d(corrected_density(points, approximation)),
		"p1": np.atleast_1d(p1(points, params, mode)),
		"normal_cdf": np.atleast_1d(normal_cdf(points)),
	})
	header = {"n": params.n, "p": params.p, "gamma_n": params.gamma_n, "ell": params.ell, "mode": mode,
			  "rho_n": approximation.rho, "sigma_n": approximation.sigma}
	_emit(df, output_format, output, header)


@cli.command()
@model_options()
@simulation_options
@click.option("--method", type=click.Choice(METHODS[:2]), default="secular", show_default=True,
			  help="Secular equation or dense eigensolve")
@click.option("--noise-reuse", type=click.IntRange(min=1), default=1, show_default=True,
			  help="Consecutive secular replicates sharing one noise spectrum")
@click.option("--output", type=click.Path(dir_okay=False), default=None,
			  help="Sample CSV; the JSON sidecar is written next to it. Prints the CSV when omitted")
@exits_on_error
def simulate(n, p, gamma, ell, ell_factor, replicates, seed, workers, no_progress, method, noise_reuse, output):
	"""
	Simulates standardized replicates R_n = sqrt(n)(ell_hat - rho_n) / sigma_n.
	"""
	params = _resolve(n, p, gamma, ell, ell_factor, seed)
	config = SimConfig(n=params.n, p=params.p, ell=params.ell, replicates=replicates, seed=seed, method=method,
					   workers=workers, noise_reuse=noise_reuse)
	samples = monte_carlo(config, progress=not no_progress)
	text = samples.to_csv(output)
	if output is None:
		click.echo(text, nl=False)
	else:
		logging.info(f"Written to {output} (metadata in {Path(output).with_suffix('.json')})")


@cli.command()
@click.option("--samples", required=True, type=click.Path(exists=True, dir_okay=False),
			  help="Sample CSV written by 'simulate' (with its JSON sidecar)")
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="Report JSON file")
@exits_on_error
def compare(samples, output):
	"""
	Kolmogorov-Smirnov distances of the replicates to Phi and to the corrected CDF, with sample moments.
	"""
	sample_set = SampleSet.from_csv(samples)
	config = sample_set.config
	log_params(config.n, config.p, config.gamma_n, config.ell, config.seed)
	report = analysis.compare(sample_set, analysis.params_for(sample_set))
	log_stat("KS vs normal", fmt(report.ks_vs_normal))
	log_stat("KS vs corrected", fmt(report.ks_vs_corrected))
	text = report.write(output)
	if output is None:
		click.echo(text, nl=False)


@cli.command("check-identities")
@model_options(n_default=100)
@click.option("--tol", type=float, default=1e-8, show_default=True, help="Largest accepted residual")
@output_options
@exits_on_error
def check_identities(n, p, gamma, ell, ell_factor, tol, output, output_format):
	"""
	Residuals of the identities linking the closed forms, the cumulant forms and the quadrature functionals.
	Exits with code 2 when a residual exceeds --tol.
	"""
	params = _resolve(n, p, gamma, ell, ell_factor)
	df = analysis.identity_residuals(params)
	log_table("Identity residuals", df.set_index("identity"))
	_emit(df, output_format, output, {"tol": tol})
	failed = df[df["residual"] > tol]
	if len(failed):
		raise NumericError(f"{len(failed)} identities exceed tolerance {tol!r}: {', '.join(failed['identity'])}")


@cli.command()
@click.option("--theta", type=float, required=True, help="Perturbation strength theta (> 1)")
@click.option("--p", type=click.IntRange(min=1), required=True, help="Matrix dimension")
@points_options
@click.option("--replicates", type=click.IntRange(min=0), default=0, show_default=True,
			  help="Run a Monte Carlo comparison with this many replicates instead of evaluating on points")
@click.option("--seed", type=click.IntRange(min=0, max=2 ** 64 - 1), default=0, show_default=True)
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True, envvar=WORKERS_ENVVAR,
			  show_envvar=True)
@click.option("--mean-term", type=click.Choice(GOE_MEAN_TERMS), default="finite_p", show_default=True,
			  help="Constant term of p_1: finite-p outlier mean, or the published s / 2")
@click.option("--no-progress", is_flag=True, default=False)
@output_options
@exits_on_error
def goe(theta, p, mean_term, xs, grid, replicates, seed, workers, no_progress, output, output_format):
	"""
	Rank-one GOE perturbation theta e_1 e_1' + Z: corrected law of R_p = sqrt(p)(ell_hat - rho) / sigma.
	"""
	params = GoeParams(theta=theta, p=p, mean_term=mean_term)
	log_params(p, p, 1.0, theta, seed if replicates else None)
	approximation = goe_approx(params)
	rho, sigma, goe_p1 = goe_correction(params)
	log_stat("rho", fmt(rho))
	log_stat("sigma", fmt(sigma))

	if replicates:
		config = SimConfig(n=p, p=p, ell=theta, replicates=replicates, seed=seed, method="goe", workers=workers)
		report = analysis.compare(monte_carlo(config, progress=not no_progress), params)
		log_stat("KS vs normal", fmt(report.ks_vs_normal))
		log_stat("KS vs corrected", fmt(report.ks_vs_corrected))
		text = report.write(output)
		if output is None:
			click.echo(text, nl=False)
		return

	points = _points(xs, grid)
	df = pd.DataFrame({
		"x": points,
		"corrected_cdf": np.atleast_1d(corrected_cdf(points, approximation)),
		"corrected_density": np.atleast_1d(corrected_density(points, approximation)),
		"p1": np.atleast_1d(goe_p1(points)),
		"normal_cdf": np.atleast_1d(normal_cdf(points)),
	})
	_emit(df, output_format, output, {"theta": theta, "p": p, "mean_term": mean_term, "rho": rho, "sigma": sigma})


@cli.command()
@model_options()
@click.option("--u", "levels", type=float, multiple=True, required=True, help="Probability level (repeatable)")
@click.option("--mode", type=click.Choice(MODES), default="finite_gamma_n", show_default=True)
@click.option("--limit-gamma", type=float, default=None, help="Limit aspect ratio for --mode limit_gamma")
@output_options
@exits_on_error
def quantile(n, p, gamma, ell, ell_factor, levels, mode, limit_gamma, output, output_format):
	"""
	Quantiles of the corrected law, by Newton's method from the Cornish-Fisher point.
	"""
	params = _resolve(n, p, gamma, ell, ell_factor)
	if limit_gamma is not None:
		params = SpikeParams(ell=params.ell, gamma_n=params.gamma_n, n=params.n, p=params.p, gamma=limit_gamma)
	approximation = cumulants(params, mode)
	rows = []
	for u in levels:
		x = corrected_quantile(u, approximation)
		rows.append((u, x, cornish_fisher(u, approximation), corrected_cdf(x, approximation) - u))
	df = pd.DataFrame(rows, columns=["u", "x", "cornish_fisher", "residual"])
	_emit(df, output_format, output, {"n": params.n, "p": params.p, "gamma_n": params.gamma_n, "ell": params.ell,
									  "mode": mode})


@cli.command()
@model_options()
@click.option("--samples", type=click.Path(exists=True, dir_okay=False), default=None,
			  help="Sample CSV from 'simulate'; simulates in place when omitted")
@simulation_options
@click.option("--method", type=click.Choice(METHODS[:2]), default="secular", show_default=True)
@click.option("--bins", type=click.IntRange(min=10), default=analysis.DEFAULT_BINS, show_default=True)
@click.option("--grid-points", type=click.IntRange(min=100), default=analysis.DEFAULT_GRID_POINTS,
			  show_default=True)
@click.option("--output-dir", required=True, type=click.Path(file_okay=False), help="Directory for the figure files")
@click.option("--stem", default=None, help="File name stem (derived from the parameters when omitted)")
@exits_on_error
def figure(n, p, gamma, ell, ell_factor, samples, replicates, seed, workers, no_progress, method, bins, grid_points,
		   output_dir, stem):
	"""
	Densities of ell_hat (corrected and Gaussian) with the replicate histogram and the bulk edge, as CSV and JSON.
	"""
	if samples is not None:
		sample_set = SampleSet.from_csv(samples)
		params = _resolve(n, p, gamma, ell, ell_factor, sample_set.config.seed)
	else:
		params = _resolve(n, p, gamma, ell, ell_factor, seed)
		log_divider("Simulating")
		config = SimConfig(n=params.n, p=params.p, ell=params.ell, replicates=replicates, seed=seed, method=method,
						   workers=workers)
		sample_set = monte_carlo(config, progress=not no_progress)

	data = analysis.figure_data(sample_set, params, bins=bins, grid_points=grid_points)
	crossings = analysis.density_crossings(data)
	log_stat("bulk edge", fmt(data.bulk_edge))
	log_stat("density crossings", ", ".join(fmt(c) for c in crossings))
	stem = stem or f"n{params.n}_p{params.p}_f{params.ell_factor:.2f}"
	paths = data.write(output_dir, stem)
	for kind, path in paths.items():
		log_stat(kind, path)


def main():
	cli(prog_name="spiked-edgeworth")


if __name__ == '__main__':
	main()
