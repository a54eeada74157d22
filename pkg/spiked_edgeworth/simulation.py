"""
Monte Carlo replicates of the largest sample eigenvalue ell_hat in the rank-one spiked model.

Two paths produce the same law: a dense eigensolve of the smaller Gram matrix of X = [sqrt(ell) Z_1, Z_2], and the
secular equation 1 = (ell/n) sum_i z_i^2 / (x - lambda_i) on the noise spectrum (Lambda, z = U'Z_1).

Randomness: every replicate owns the generators Philox(SeedSequence([seed, replicate_index, role])) with role 0 for
the noise matrix Z_2 and role 1 for the signal column Z_1, so results do not depend on worker count or scheduling.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import Callable, Literal

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.optimize import brentq
from tqdm import tqdm

from spiked_edgeworth import mp_functionals as mp
from spiked_edgeworth.edgeworth import GoeParams, centering_scaling, goe_correction
from spiked_edgeworth.errors import DomainError, EigensolverError, ReplicateError, SecularSolveError
from spiked_edgeworth.utils.utils import read_json, write_frame, write_json

logger = logging.getLogger(__name__)

RNG_ALGORITHM: str = "Philox"
STREAM_ROLES: dict[str, int] = {"noise": 0, "signal": 1}
MAX_SEED: int = 2 ** 64 - 1

SECULAR_XTOL: float = 1e-13
SECULAR_RESIDUAL: float = 1e-13
SECULAR_MAX_EXPANSIONS: int = 200
NEWTON_MAX_ITER: int = 20

Method = Literal["dense", "secular", "goe"]
METHODS: tuple[str, ...] = ("dense", "secular", "goe")
CSV_COLUMNS: list[str] = ["replicate_index", "ell_hat", "r_n"]


# =============================================================================
# 							DOMAIN TYPES
# =============================================================================

@dataclass(frozen=True)
class SimConfig:
	"""
	Monte Carlo configuration. For method 'goe', ell is the perturbation theta and n = p is the matrix dimension.
	noise_reuse > 1 lets that many consecutive secular replicates share one noise spectrum (fresh z each time).
	"""
	n: int
	p: int
	ell: float
	replicates: int
	seed: int
	method: Method = "secular"
	workers: int = 1
	noise_reuse: int = 1

	def __post_init__(self):
		for name in ("n", "p", "replicates", "workers", "noise_reuse"):
			value = getattr(self, name)
			if int(value) != value or value < 1:
				raise DomainError(f"{name} must be a positive integer, got: {value!r}")
		if int(self.seed) != self.seed or not 0 <= self.seed <= MAX_SEED:
			raise DomainError(f"seed must be an unsigned 64-bit integer, got: {self.seed!r}")
		if self.method not in METHODS:
			raise DomainError(f"Unknown method: {self.method!r} (expected one of {METHODS})")
		if self.noise_reuse > 1 and self.method != "secular":
			raise DomainError("noise_reuse is only available with the secular method")
		if self.method == "goe":
			if self.n != self.p:
				raise DomainError(f"The GOE method uses a single dimension, got: n={self.n}, p={self.p}")
			GoeParams(theta=self.ell, p=self.p)
		else:
			mp.check_supercritical(self.ell, self.gamma_n)

	@property
	def gamma_n(self) -> float:
		return self.p / self.n

	def centering(self) -> tuple[float, float]:
		"""(rho_n, sigma_n) used to standardize the replicates."""
		if self.method == "goe":
			rho, sigma, _ = goe_correction(GoeParams(theta=self.ell, p=self.p))
			return rho, sigma
		return centering_scaling(self.ell, self.gamma_n)


@dataclass(frozen=True, eq=False)
class NoiseDraw:
	"""
	Noise spectrum of n^-1 Z_2 Z_2' (descending, zero padded to length n) and the rotated signal z = U'Z_1.
	"""
	lambdas: np.ndarray
	z: np.ndarray

	def __post_init__(self):
		if self.lambdas.shape != self.z.shape or self.lambdas.ndim != 1:
			raise DomainError(f"lambdas and z must be vectors of equal length, got: {self.lambdas.shape}, {self.z.shape}")

	@property
	def n(self) -> int:
		return len(self.lambdas)

	@property
	def lambda_1(self) -> float:
		return float(self.lambdas[0])


@dataclass(frozen=True)
class Replicate:
	ell_hat: float
	r_n: float
	method: str
	replicate_index: int


@dataclass(frozen=True)
class ReplicateStreams:
	noise: np.random.Generator
	signal: np.random.Generator


@dataclass(frozen=True, eq=False)
class SampleSet:
	"""
	Immutable collection of standardized replicates, ordered by replicate index.
	"""
	config: SimConfig
	replicate_index: np.ndarray
	ell_hat: np.ndarray
	r_n: np.ndarray
	rho_n: float
	sigma_n: float
	source: str | None = field(default=None, compare=False)

	@property
	def gamma_n(self) -> float:
		return self.config.gamma_n

	@property
	def n_samples(self) -> int:
		return len(self.r_n)

	def metadata(self) -> dict:
		meta = {
			"seed": self.config.seed,
			"n": self.config.n,
			"p": self.config.p,
			"gamma_n": self.gamma_n,
			"ell": self.config.ell,
			"method": self.config.method,
			"replicates": self.config.replicates,
			"rho_n": self.rho_n,
			"sigma_n": self.sigma_n,
		}
		if self.config.noise_reuse != 1:
			meta["noise_reuse"] = self.config.noise_reuse
		return meta

	def to_frame(self) -> pd.DataFrame:
		return pd.DataFrame({"replicate_index": self.replicate_index, "ell_hat": self.ell_hat, "r_n": self.r_n},
							columns=CSV_COLUMNS)

	def to_csv(self, output: str | Path | None = None) -> str:
		"""
		Writes the replicate CSV and, when a path is given, its JSON sidecar next to it (same stem, '.json').
		:return: the CSV text
		"""
		text = write_frame(self.to_frame(), output)
		if output is not None:
			write_json(self.metadata(), sidecar_path(output))
		return text

	@classmethod
	def from_csv(cls, path: str | Path) -> "SampleSet":
		if not sidecar_path(path).is_file():
			raise DomainError(f"Sample file {path} has no metadata sidecar {sidecar_path(path)}")
		meta = read_json(sidecar_path(path))
		df = pd.read_csv(path, float_precision="round_trip")
		missing = [column for column in CSV_COLUMNS if column not in df.columns]
		if missing:
			raise DomainError(f"Sample file {path} lacks columns: {missing}")
		config = SimConfig(n=meta["n"], p=meta["p"], ell=meta["ell"], replicates=meta["replicates"],
						   seed=meta["seed"], method=meta["method"], noise_reuse=meta.get("noise_reuse", 1))
		if len(df) != config.replicates:
			raise DomainError(f"Sample file {path} holds {len(df)} rows, metadata announces {config.replicates}")
		return cls(
			config=config,
			replicate_index=df["replicate_index"].to_numpy(dtype=np.int64),
			ell_hat=df["ell_hat"].to_numpy(dtype=float),
			r_n=df["r_n"].to_numpy(dtype=float),
			rho_n=float(meta["rho_n"]),
			sigma_n=float(meta["sigma_n"]),
			source=str(path),
		)


def sidecar_path(path: str | Path) -> Path:
	return Path(path).with_suffix(".json")

def standardize(ell_hat, rho: float, sigma: float, n: int):
	"""R_n = sqrt(n)(ell_hat - rho) / sigma."""
	return math.sqrt(n) * (np.asarray(ell_hat, dtype=float) - rho) / sigma


# =============================================================================
# 							RANDOM STREAMS
# =============================================================================

def _generator(seed: int, replicate_index: int, role: str) -> np.random.Generator:
	sequence = np.random.SeedSequence([seed, replicate_index, STREAM_ROLES[role]])
	return np.random.Generator(np.random.Philox(sequence))

def make_streams(seed: int, replicate_index: int, noise_key: int | None = None) -> ReplicateStreams:
	"""
	Generators of one replicate. noise_key replaces the replicate index of the noise stream (shared noise spectra).
	"""
	return ReplicateStreams(
		noise=_generator(seed, replicate_index if noise_key is None else noise_key, "noise"),
		signal=_generator(seed, replicate_index, "signal"),
	)


# =============================================================================
# 							DENSE PATH
# =============================================================================

def _top_eigenvalue(matrix: np.ndarray) -> float:
	size = matrix.shape[0]
	try:
		return float(scipy.linalg.eigvalsh(matrix, subset_by_index=[size - 1, size - 1], check_finite=True)[0])
	except (np.linalg.LinAlgError, ValueError) as error:
		finite = bool(np.all(np.isfinite(matrix)))
		raise EigensolverError(f"Symmetric eigensolver failed: {error}", shape=matrix.shape, finite=finite,
							   trace=float(np.trace(matrix)) if finite else math.nan) from error

def dense_largest_eigenvalue(z1: np.ndarray, z2: np.ndarray, ell: float) -> float:
	"""
	Largest eigenvalue of n^-1 X'X for X = [sqrt(ell) z1, z2], computed on the smaller Gram matrix.
	:param z1: signal column (n,)
	:param z2: noise matrix (n, p)
	:param ell:
	:return: ell_hat
	"""
	n = z2.shape[0]
	x = np.column_stack([math.sqrt(ell) * z1, z2])
	gram = x.T @ x if x.shape[1] <= n else x @ x.T
	return _top_eigenvalue(gram / n)

def sample_dense(n: int, p: int, ell: float, streams: ReplicateStreams, replicate_index: int = 0) -> Replicate:
	mp.check_supercritical(ell, p / n)
	z1 = streams.signal.standard_normal(n)
	z2 = streams.noise.standard_normal((n, p))
	ell_hat = dense_largest_eigenvalue(z1, z2, ell)
	rho, sigma = centering_scaling(ell, p / n)
	return Replicate(ell_hat=ell_hat, r_n=float(standardize(ell_hat, rho, sigma, n)), method="dense",
					 replicate_index=replicate_index)

def implied_noise_draw(z1: np.ndarray, z2: np.ndarray) -> NoiseDraw:
	"""
	The (Lambda, z) pair the secular path sees for the same (Z_1, Z_2): with Z_2 = U D V', Lambda = D^2 / n padded
	with zeros and z = U'Z_1.
	"""
	n = z2.shape[0]
	try:
		u, singular, _ = scipy.linalg.svd(z2, full_matrices=True)
	except (np.linalg.LinAlgError, ValueError) as error:
		finite = bool(np.all(np.isfinite(z2)))
		raise EigensolverError(f"SVD of the noise matrix failed: {error}", shape=z2.shape, finite=finite,
							   trace=float(np.sum(z2 * z2)) if finite else math.nan) from error
	lambdas = np.zeros(n)
	lambdas[:len(singular)] = singular ** 2 / n
	return NoiseDraw(lambdas=lambdas, z=u.T @ z1)


# =============================================================================
# 							SECULAR PATH
# =============================================================================

def sample_noise(n: int, p: int, streams: ReplicateStreams) -> NoiseDraw:
	"""
	Eigenvalues of n^-1 Z_2 Z_2' (descending, padded with n - p zeros when p < n) and z ~ N(0, I_n) drawn
	independently, valid since U is Haar distributed and independent of Lambda.
	"""
	if n < 1 or p < 1:
		raise DomainError(f"n and p must be positive, got: n={n}, p={p}")
	z2 = streams.noise.standard_normal((n, p))
	gram = (z2.T @ z2 if p <= n else z2 @ z2.T) / n
	try:
		spectrum = scipy.linalg.eigvalsh(gram, check_finite=True)
	except (np.linalg.LinAlgError, ValueError) as error:
		finite = bool(np.all(np.isfinite(gram)))
		raise EigensolverError(f"Symmetric eigensolver failed: {error}", shape=gram.shape, finite=finite,
							   trace=float(np.trace(gram)) if finite else math.nan) from error
	lambdas = np.zeros(n)
	lambdas[:len(spectrum)] = np.maximum(spectrum[::-1], 0.0)
	return NoiseDraw(lambdas=lambdas, z=streams.signal.standard_normal(n))

def secular_function(draw: NoiseDraw, ell: float, x):
	"""
	psi(x) = (ell/n) sum_i z_i^2 / (x - lambda_i), strictly decreasing on (lambda_1, inf).
	"""
	x = np.asarray(x, dtype=float)
	weights = draw.z * draw.z
	values = ell / draw.n * np.sum(weights / (x[..., None] - draw.lambdas), axis=-1)
	return float(values) if values.ndim == 0 else values

def _secular_slope(draw: NoiseDraw, ell: float, x: float) -> float:
	gaps = x - draw.lambdas
	return ell / draw.n * float(np.sum(draw.z * draw.z / (gaps * gaps)))

def secular_solve(draw: NoiseDraw, ell: float) -> float:
	"""
	Unique root of psi(x) = 1 above lambda_1: Brent's method on
	(lambda_1 + 1e-12 max(1, lambda_1), lambda_1 + ell (1 + mean z^2)), the lower end pulled towards lambda_1 until
	psi exceeds 1 there, followed by a Newton polish of the residual.
	:param draw: noise spectrum and rotated signal
	:param ell: spike strength (> 0)
	:return: ell_hat > lambda_1
	"""
	if not (math.isfinite(ell) and ell > 0):
		raise DomainError(f"ell must be positive, got: {ell!r}")
	lambda_1 = draw.lambda_1
	mean_square = float(np.mean(draw.z * draw.z))
	if mean_square == 0:
		raise SecularSolveError("z vanishes identically, the secular equation has no root", lambda_1=lambda_1,
								bracket=(lambda_1, lambda_1), expansions=0)

	offset = 1e-12 * max(1.0, abs(lambda_1))
	hi = lambda_1 + ell * (1 + mean_square)
	expansions = 0
	while secular_function(draw, ell, lambda_1 + offset) < 1:
		expansions += 1
		offset /= 2
		if expansions > SECULAR_MAX_EXPANSIONS or lambda_1 + offset == lambda_1:
			raise SecularSolveError("No sign change of psi - 1 above lambda_1", lambda_1=lambda_1,
									bracket=(lambda_1 + offset, hi), expansions=expansions)
	lo = lambda_1 + offset

	root = brentq(lambda x: secular_function(draw, ell, x) - 1, lo, hi,
				  xtol=SECULAR_XTOL * max(1.0, abs(lambda_1)), maxiter=500)
	for iteration in range(NEWTON_MAX_ITER):
		residual = secular_function(draw, ell, root) - 1
		if abs(residual) < SECULAR_RESIDUAL:
			break
		candidate = root + residual / _secular_slope(draw, ell, root)
		if not lo < candidate < hi:
			break
		root = candidate
	else:
		logger.debug(f"Newton polish stopped at residual {residual:.3e} (lambda_1={lambda_1!r})")
	return root

def sample_secular(n: int, p: int, ell: float, streams: ReplicateStreams, replicate_index: int = 0,
				   draw: NoiseDraw | None = None) -> Replicate:
	"""
	One secular replicate; a given draw replaces the noise spectrum but z is always drawn fresh.
	"""
	if draw is None:
		draw = sample_noise(n, p, streams)
	else:
		draw = NoiseDraw(lambdas=draw.lambdas, z=streams.signal.standard_normal(n))
	ell_hat = secular_solve(draw, ell)
	rho, sigma = centering_scaling(ell, p / n)
	return Replicate(ell_hat=ell_hat, r_n=float(standardize(ell_hat, rho, sigma, n)), method="secular",
					 replicate_index=replicate_index)

def linear_statistics(draw: NoiseDraw, f: Callable, gamma_n: float) -> tuple[float, float]:
	"""
	S_n(f) = n^-1/2 sum_i f(lambda_i)(z_i^2 - 1) and G_n(f) = sum_i f(lambda_i) - n F_gamma_n(f), the second
	centred by the companion law, so that n^-1 sum f(lambda_i) z_i^2 = F(f) + n^-1/2 S_n(f) + n^-1 G_n(f).
	:return: (S_n(f), G_n(f))
	"""
	values = np.broadcast_to(np.asarray(f(draw.lambdas), dtype=float), draw.lambdas.shape)
	if not np.all(np.isfinite(values)):
		raise DomainError("Function is not finite at every noise eigenvalue")
	n = draw.n
	s_n = float(np.sum(values * (draw.z * draw.z - 1))) / math.sqrt(n)
	g_n = float(np.sum(values)) - n * mp.mp_expect(f, gamma_n, "companion")
	return s_n, g_n


# =============================================================================
# 								GOE
# =============================================================================

def goe_matrix(p: int, rng: np.random.Generator) -> np.ndarray:
	"""
	Z = (A + A') / sqrt(2p) for standard normal A: N(0, 2/p) diagonal, N(0, 1/p) off the diagonal.
	"""
	a = rng.standard_normal((p, p))
	return (a + a.T) / math.sqrt(2 * p)

def sample_goe(params: GoeParams, streams: ReplicateStreams, replicate_index: int = 0) -> Replicate:
	"""
	Largest eigenvalue of theta e_1 e_1' + Z, standardized with the GOE centering and scaling (n replaced by p).
	"""
	matrix = goe_matrix(params.p, streams.noise)
	matrix[0, 0] += params.theta
	ell_hat = _top_eigenvalue(matrix)
	rho, sigma, _ = goe_correction(params)
	return Replicate(ell_hat=ell_hat, r_n=float(standardize(ell_hat, rho, sigma, params.p)), method="goe",
					 replicate_index=replicate_index)


# =============================================================================
# 							MONTE CARLO
# =============================================================================

def simulate_replicate(config: SimConfig, replicate_index: int, shared: dict | None = None) -> Replicate:
	"""
	Replicate replicate_index of the configured experiment. shared caches the noise spectrum of the current
	block when noise_reuse > 1.
	"""
	if config.method == "dense":
		return sample_dense(config.n, config.p, config.ell, make_streams(config.seed, replicate_index), replicate_index)
	if config.method == "goe":
		return sample_goe(GoeParams(theta=config.ell, p=config.p), make_streams(config.seed, replicate_index),
						  replicate_index)

	block = replicate_index // config.noise_reuse
	streams = make_streams(config.seed, replicate_index, noise_key=block)
	draw = None
	if config.noise_reuse > 1:
		shared = {} if shared is None else shared
		if shared.get("block") != block:
			shared["block"] = block
			shared["draw"] = sample_noise(config.n, config.p, make_streams(config.seed, block, noise_key=block))
		draw = shared["draw"]
	return sample_secular(config.n, config.p, config.ell, streams, replicate_index, draw=draw)

def _run_chunk(task: tuple[dict, int, int]) -> tuple[int, np.ndarray, tuple[int, str] | None]:
	"""
	Worker entry point: simulates indices [start, stop). Failures are returned, not raised, so they cross the
	process boundary intact.
	"""
	config_fields, start, stop = task
	config = SimConfig(**config_fields)
	values = np.empty(stop - start)
	shared = {}
	for index in range(start, stop):
		try:
			values[index - start] = simulate_replicate(config, index, shared).ell_hat
		except Exception as error:
			return start, values, (index, f"{type(error).__name__}: {error}")
	return start, values, None

def _chunks(replicates: int, workers: int) -> list[tuple[int, int]]:
	size = max(1, math.ceil(replicates / (8 * workers)))
	return [(start, min(start + size, replicates)) for start in range(0, replicates, size)]

def monte_carlo(config: SimConfig, progress: bool = True) -> SampleSet:
	"""
	Simulates config.replicates standardized replicates, optionally across a process pool. Results are placed by
	replicate index, so the sample set is identical for any worker count.
	:param config:
	:param progress: show a tqdm progress bar on stderr
	:return:
	"""
	rho, sigma = config.centering()
	ell_hat = np.empty(config.replicates)
	config_fields = asdict(config)
	tasks = [(config_fields, start, stop) for start, stop in _chunks(config.replicates, config.workers)]
	logger.info(f"Simulating {config.replicates} replicates ({config.method}, {RNG_ALGORITHM} streams) "
				f"on {config.workers} worker(s)")

	with tqdm(total=config.replicates, desc=f"Replicates ({config.method})", disable=not progress) as bar:
		if config.workers == 1:
			results = map(_run_chunk, tasks)
			pool = None
		else:
			pool = Pool(processes=config.workers)
			results = pool.imap_unordered(_run_chunk, tasks)
		try:
			for start, values, failure in results:
				if failure is not None:
					index, message = failure
					raise ReplicateError(index, config.seed, message)
				ell_hat[start:start + len(values)] = values
				bar.update(len(values))
		finally:
			if pool is not None:
				pool.terminate()
				pool.join()

	size = config.p if config.method == "goe" else config.n
	return SampleSet(
		config=config,
		replicate_index=np.arange(config.replicates, dtype=np.int64),
		ell_hat=ell_hat,
		r_n=standardize(ell_hat, rho, sigma, size),
		rho_n=rho,
		sigma_n=sigma,
	)
