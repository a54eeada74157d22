"""
First-order Edgeworth correction for the largest eigenvalue of a rank-one spiked sample covariance matrix.

With R_n = sqrt(n) (ell_hat - rho_n) / sigma_n,
	P(R_n <= x) = Phi(x) + n^-1/2 p_1(x) phi(x) + o(n^-1/2),
	p_1(x) = alpha_2 (1 - x^2) - alpha_0,
so that F_E = Phi - n^-1/2 (alpha_2 H_2 + alpha_0) phi and f_E = phi + n^-1/2 (alpha_2 H_3 + alpha_0 H_1) phi.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc, ndtri

from spiked_edgeworth import mp_functionals as mp
from spiked_edgeworth.errors import DomainError, QuantileError, UnsupportedError

logger = logging.getLogger(__name__)

VALIDITY_THRESHOLD: float = 0.2
QUANTILE_BRACKET: tuple[float, float] = (-10.0, 10.0)
QUANTILE_TOL: float = 1e-12
NEWTON_MAX_ITER: int = 50

Mode = Literal["finite_gamma_n", "limit_gamma"]
MODES: tuple[str, ...] = ("finite_gamma_n", "limit_gamma")
GOE_MEAN_TERMS: tuple[str, ...] = ("finite_p", "published")


# =============================================================================
# 							DOMAIN TYPES
# =============================================================================

@dataclass(frozen=True)
class SpikeParams:
	"""
	Model parameters. gamma is the limiting aspect ratio used by mode 'limit_gamma' (defaults to gamma_n;
	0 gives the fixed-dimension limit).
	"""
	ell: float
	gamma_n: float
	n: int
	p: int
	gamma: float | None = None

	def __post_init__(self):
		if int(self.n) != self.n or self.n < 1 or int(self.p) != self.p or self.p < 1:
			raise DomainError(f"n and p must be positive integers, got: n={self.n!r}, p={self.p!r}")
		if not (math.isfinite(self.gamma_n) and self.gamma_n > 0):
			raise DomainError(f"gamma_n must be positive and finite, got: {self.gamma_n!r}")
		if abs(self.gamma_n - self.p / self.n) >= 1e-12:
			raise DomainError(f"gamma_n={self.gamma_n!r} is inconsistent with p/n={self.p}/{self.n}")
		mp.check_supercritical(self.ell, self.gamma_n)
		if self.gamma is not None:
			mp.check_supercritical(self.ell, self.gamma)

	@property
	def limit_gamma(self) -> float:
		return self.gamma_n if self.gamma is None else self.gamma

	@property
	def ell_factor(self) -> float:
		return self.ell / (1 + math.sqrt(self.gamma_n)) - 1

	@classmethod
	def from_dimensions(cls, ell: float, n: int, p: int, gamma: float | None = None) -> "SpikeParams":
		return cls(ell=ell, gamma_n=p / n, n=n, p=p, gamma=gamma)

	@classmethod
	def resolve(cls, n: int, ell: float | None = None, ell_factor: float | None = None,
				gamma: float | None = None, p: int | None = None) -> "SpikeParams":
		"""
		Resolves the parameters the way the command line accepts them: p takes precedence over gamma (then
		gamma_n = p/n), p = round(gamma n) otherwise; ell may be given through ell_factor = ell / (1 + sqrt(gamma_n)) - 1.
		:param n: sample count
		:param ell: spike strength
		:param ell_factor: relative distance above the transition
		:param gamma: aspect ratio p/n
		:param p: noise dimension
		:return:
		"""
		if n is None or n < 1:
			raise DomainError(f"n must be a positive integer, got: {n!r}")
		if p is None and gamma is None:
			raise DomainError("Either p or gamma must be given")
		if p is not None and gamma is not None and round(gamma * n) != p:
			raise DomainError(f"p={p} is inconsistent with gamma={gamma!r} and n={n} (round(gamma n) = {round(gamma * n)})")
		if p is None:
			if not (math.isfinite(gamma) and gamma > 0):
				raise DomainError(f"gamma must be positive and finite, got: {gamma!r}")
			p = round(gamma * n)
			if p < 1:
				raise DomainError(f"gamma={gamma!r} and n={n} give p={p}; need p >= 1")
		gamma_n = p / n
		if (ell is None) == (ell_factor is None):
			raise DomainError("Exactly one of ell and ell_factor must be given")
		if ell is None:
			ell = (1 + ell_factor) * (1 + math.sqrt(gamma_n))
		return cls(ell=ell, gamma_n=gamma_n, n=n, p=p)


@dataclass(frozen=True)
class EdgeworthApprox:
	"""
	Precomputed quantities of the corrected law. kappa2 = 4 / sigma^2 holds in mode 'finite_gamma_n'.
	"""
	rho: float
	sigma: float
	kappa2: float
	kappa3: float
	mu_g: float
	alpha2: float
	alpha0: float
	inv_sqrt_n: float
	n: int
	mode: str = "finite_gamma_n"

	@property
	def predicted_skewness(self) -> float:
		return 6 * self.alpha2 * self.inv_sqrt_n

	@property
	def predicted_mean(self) -> float:
		return self.alpha0 * self.inv_sqrt_n


@dataclass(frozen=True)
class GoeParams:
	theta: float
	p: int
	mean_term: str = "finite_p"

	def __post_init__(self):
		if not (math.isfinite(self.theta) and self.theta > 1):
			raise DomainError(f"GOE perturbation requires theta > 1, got: {self.theta!r}")
		if int(self.p) != self.p or self.p < 1:
			raise DomainError(f"p must be a positive integer, got: {self.p!r}")
		if self.mean_term not in GOE_MEAN_TERMS:
			raise DomainError(f"Unknown GOE mean term: {self.mean_term!r} (expected one of {GOE_MEAN_TERMS})")


# =============================================================================
# 							GAUSSIAN & HERMITE
# =============================================================================

def _out(values):
	values = np.asarray(values, dtype=float)
	return float(values) if values.ndim == 0 else values

def normal_cdf(x):
	"""Phi through the complementary error function (accurate in the lower tail)."""
	return _out(0.5 * erfc(-np.asarray(x, dtype=float) / math.sqrt(2)))

def normal_pdf(x):
	x = np.asarray(x, dtype=float)
	return _out(np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi))

def hermite(k: int, x):
	"""
	Probabilists' Hermite polynomial H_k by H_{k+1} = x H_k - k H_{k-1}.
	"""
	if int(k) != k or k < 0:
		raise DomainError(f"Hermite degree must be a non-negative integer, got: {k!r}")
	x = np.asarray(x, dtype=float)
	previous, current = np.zeros_like(x), np.ones_like(x)
	for j in range(int(k)):
		previous, current = current, x * current - j * previous
	return _out(current)

def normal_cdf_derivative(order: int, x):
	"""
	d^m/dx^m Phi = (-1)^(m-1) H_{m-1} phi for m >= 1.
	"""
	if order == 0:
		return normal_cdf(x)
	return _out((-1) ** (order - 1) * np.asarray(hermite(order - 1, x)) * np.asarray(normal_pdf(x)))


# =============================================================================
# 						CENTERING & CUMULANTS
# =============================================================================

def centering_scaling(ell: float, gamma_n: float) -> tuple[float, float]:
	"""
	rho = ell + gamma ell / (ell - 1), sigma^2 = 2 ell^2 (1 - gamma / (ell - 1)^2).
	:return: (rho, sigma)
	"""
	mp.check_supercritical(ell, gamma_n)
	h = ell - 1
	rho = ell + gamma_n * ell / h
	sigma = math.sqrt(2 * ell * ell * (1 - gamma_n / (h * h)))
	return rho, sigma

def _mode_gamma(params: SpikeParams, mode: str) -> float:
	if mode == "finite_gamma_n":
		return params.gamma_n
	if mode == "limit_gamma":
		return params.limit_gamma
	raise DomainError(f"Unknown mode: {mode!r} (expected one of {MODES})")

def validity_index(params: SpikeParams) -> float:
	"""
	(1/n)(9/2) alpha_2^2 = (1/n)(h^3 + gamma_n)^2 / (h^2 - gamma_n)^3, h = ell - 1. Values up to 0.2 indicate a usable correction.
	"""
	h, gamma_n = params.ell - 1, params.gamma_n
	return (h ** 3 + gamma_n) ** 2 / (h * h - gamma_n) ** 3 / params.n

def cumulants(params: SpikeParams, mode: Mode = "finite_gamma_n") -> EdgeworthApprox:
	"""
	kappa_2 = 2 F(g^2), kappa_3 = 8 F(g^3) and mu(g) from their closed forms, with the Hermite coefficients
	alpha_2 = kappa_3 / (6 kappa_2^3/2) and alpha_0 = mu(g) / kappa_2^1/2.
	Centering and scaling always use gamma_n; the correction uses gamma_n or the limit gamma depending on the mode.
	:param params:
	:param mode: 'finite_gamma_n' or 'limit_gamma'
	:return:
	"""
	gamma = _mode_gamma(params, mode)
	rho, sigma = centering_scaling(params.ell, params.gamma_n)
	kappa2 = 2 * mp.f_g2(params.ell, gamma)
	kappa3 = 8 * mp.f_g3(params.ell, gamma)
	mu = mp.mu_g(params.ell, gamma)

	index = validity_index(params)
	if index > VALIDITY_THRESHOLD:
		logger.warning(f"Validity index {index:.4f} exceeds {VALIDITY_THRESHOLD}: the correction may be unreliable "
					   f"this close to the transition")
	return EdgeworthApprox(
		rho=rho,
		sigma=sigma,
		kappa2=kappa2,
		kappa3=kappa3,
		mu_g=mu,
		alpha2=kappa3 / (6 * kappa2 ** 1.5),
		alpha0=mu / math.sqrt(kappa2),
		inv_sqrt_n=1 / math.sqrt(params.n),
		n=params.n,
		mode=mode,
	)

def hermite_coefficients(params: SpikeParams, mode: Mode = "finite_gamma_n") -> tuple[float, float]:
	"""
	alpha_2 = (sqrt(2)/3)(h^3 + gamma) / (h^2 - gamma)^3/2 and alpha_0 = gamma ell / (sqrt(2)(h^2 - gamma)^3/2).
	"""
	gamma = _mode_gamma(params, mode)
	h = params.ell - 1
	scale = (h * h - gamma) ** 1.5
	return math.sqrt(2) / 3 * (h ** 3 + gamma) / scale, gamma * params.ell / (math.sqrt(2) * scale)

def p1(x, params: SpikeParams, mode: Mode = "finite_gamma_n"):
	"""
	p_1(x) = sqrt(2) ((1/3)[(ell - 1)^3 + gamma](1 - x^2) - (1/2) gamma ell) ((ell - 1)^2 - gamma)^-3/2.
	"""
	gamma = _mode_gamma(params, mode)
	x = np.asarray(x, dtype=float)
	h = params.ell - 1
	values = math.sqrt(2) * ((h ** 3 + gamma) * (1 - x * x) / 3 - gamma * params.ell / 2) / (h * h - gamma) ** 1.5
	return _out(values)

def p1_cumulant_form(x, approx: EdgeworthApprox):
	"""(1/6) kappa_2^-3/2 kappa_3 (1 - x^2) - kappa_2^-1/2 mu(g)."""
	x = np.asarray(x, dtype=float)
	return _out(approx.kappa3 * (1 - x * x) / (6 * approx.kappa2 ** 1.5) - approx.mu_g / math.sqrt(approx.kappa2))


# =============================================================================
# 							CORRECTED LAW
# =============================================================================

def _p1_from_alpha(x: np.ndarray, approx: EdgeworthApprox) -> np.ndarray:
	return approx.alpha2 * (1 - x * x) - approx.alpha0

def corrected_cdf(x, approx: EdgeworthApprox, clamp: bool = False):
	"""
	Phi(x) + n^-1/2 p_1(x) phi(x). The result may leave [0, 1] slightly in the tails unless clamp is set.
	:param x:
	:param approx:
	:param clamp: clip the output to [0, 1]
	:return:
	"""
	x = np.asarray(x, dtype=float)
	values = np.asarray(normal_cdf(x)) + approx.inv_sqrt_n * _p1_from_alpha(x, approx) * np.asarray(normal_pdf(x))
	if clamp:
		values = np.clip(values, 0.0, 1.0)
	return _out(values)

def corrected_cdf_hermite(x, approx: EdgeworthApprox):
	"""Phi - n^-1/2 (alpha_2 H_2 + alpha_0) phi."""
	x = np.asarray(x, dtype=float)
	correction = approx.alpha2 * np.asarray(hermite(2, x)) + approx.alpha0
	return _out(np.asarray(normal_cdf(x)) - approx.inv_sqrt_n * correction * np.asarray(normal_pdf(x)))

def relative_error(x, approx: EdgeworthApprox):
	"""
	The cubic q = alpha_2 H_3 + alpha_0 H_1, with (f_E - phi) / phi = n^-1/2 q.
	"""
	x = np.asarray(x, dtype=float)
	return _out(approx.alpha2 * np.asarray(hermite(3, x)) + approx.alpha0 * x)

def relative_error_roots(approx: EdgeworthApprox) -> np.ndarray:
	"""
	Real roots of q: 0 and +-(3 - alpha_0 / alpha_2)^1/2 when alpha_0 / alpha_2 < 3.
	"""
	ratio = approx.alpha0 / approx.alpha2
	if ratio >= 3:
		return np.zeros(1)
	root = math.sqrt(3 - ratio)
	return np.array([-root, 0.0, root])

def corrected_density(x, approx: EdgeworthApprox):
	"""
	phi + n^-1/2 (alpha_2 H_3 + alpha_0 H_1) phi; negative for x sufficiently small.
	"""
	x = np.asarray(x, dtype=float)
	return _out(np.asarray(normal_pdf(x)) * (1 + approx.inv_sqrt_n * np.asarray(relative_error(x, approx))))

def rescaled_density(y, approx: EdgeworthApprox):
	"""
	Density of ell_hat implied by f_E: (sqrt(n) / sigma) f_E(sqrt(n)(y - rho) / sigma).
	"""
	y = np.asarray(y, dtype=float)
	scale = 1 / (approx.inv_sqrt_n * approx.sigma)
	return _out(scale * np.asarray(corrected_density(scale * (y - approx.rho), approx)))

def normal_rescaled_density(y, approx: EdgeworthApprox):
	y = np.asarray(y, dtype=float)
	scale = 1 / (approx.inv_sqrt_n * approx.sigma)
	return _out(scale * np.asarray(normal_pdf(scale * (y - approx.rho))))

def cornish_fisher(u, approx: EdgeworthApprox):
	"""First-order Cornish-Fisher point z - n^-1/2 p_1(z), z = Phi^-1(u)."""
	z = ndtri(np.asarray(u, dtype=float))
	return _out(z - approx.inv_sqrt_n * _p1_from_alpha(z, approx))

def corrected_quantile(u: float, approx: EdgeworthApprox) -> float:
	"""
	Solves corrected_cdf(x) = u by Newton's method from the Cornish-Fisher point, falling back to Brent's method
	on [-10, 10] when Newton leaves the bracket or meets a non-positive density.
	:param u: probability in (0, 1)
	:param approx:
	:return: x with |corrected_cdf(x) - u| < 1e-12
	"""
	if not (0 < u < 1):
		raise DomainError(f"Quantile level must lie in (0, 1), got: {u!r}")
	lo, hi = QUANTILE_BRACKET
	f_lo, f_hi = corrected_cdf(lo, approx) - u, corrected_cdf(hi, approx) - u
	if f_lo > 0 or f_hi < 0:
		raise QuantileError("Level not attainable by the corrected CDF on the bracket", u=u,
							bracket=QUANTILE_BRACKET, values=(f_lo + u, f_hi + u))

	x = min(max(cornish_fisher(u, approx), lo), hi)
	for iteration in range(NEWTON_MAX_ITER):
		residual = corrected_cdf(x, approx) - u
		if abs(residual) < QUANTILE_TOL:
			return x
		slope = corrected_density(x, approx)
		if slope <= 0:
			logger.debug(f"Newton met a non-positive density at x={x!r}, falling back to bracketing")
			break
		candidate = x - residual / slope
		if not lo < candidate < hi:
			break
		x = candidate

	x = brentq(lambda t: corrected_cdf(t, approx) - u, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
	residual = corrected_cdf(x, approx) - u
	if abs(residual) >= QUANTILE_TOL:
		raise QuantileError(f"Bracketing stopped with residual {residual:.3e}", u=u, bracket=QUANTILE_BRACKET,
							values=(f_lo + u, f_hi + u))
	return x


# =============================================================================
# 							GOE VARIANT
# =============================================================================

def goe_coefficients(params: GoeParams) -> tuple[float, float]:
	"""
	Hermite coefficients (alpha2, alpha0) of the GOE variant, with s = sqrt(2) / (theta^2 - 1)^3/2.
	alpha2 = s / 3 in both cases. The finite_p mean term alpha0 = (2 - theta^2) s / 2 follows from the (1, 1) Schur
	complement theta + Z_11 + w'(theta_hat - Z_22)^-1 w and the 1/p correction s / (p (z^2 - 4)) to the mean GOE
	Stieltjes transform, which give E[theta_hat] - rho = (2 - theta^2) / (p theta (theta^2 - 1)). The published
	constant alpha0 = s / 2 is kept as mean_term="published".
	"""
	theta = params.theta
	scale = math.sqrt(2) / (theta * theta - 1) ** 1.5
	alpha0 = scale / 2 if params.mean_term == "published" else (2 - theta * theta) * scale / 2
	return scale / 3, alpha0

def goe_correction(params: GoeParams) -> tuple[float, float, Callable]:
	"""
	Rank-one GOE perturbation theta e_1 e_1' + Z: rho = theta + 1/theta, sigma = sqrt(2(1 - theta^-2)) and
	p_1(x) = alpha2 (1 - x^2) - alpha0 with the coefficients of goe_coefficients.
	:return: (rho, sigma, p_1)
	"""
	theta = params.theta
	rho = theta + 1 / theta
	sigma = math.sqrt(2 * (1 - theta ** -2))
	alpha2, alpha0 = goe_coefficients(params)

	def goe_p1(x):
		x = np.asarray(x, dtype=float)
		return _out(alpha2 * (1 - x * x) - alpha0)

	return rho, sigma, goe_p1

def goe_approx(params: GoeParams) -> EdgeworthApprox:
	"""
	EdgeworthApprox of the GOE variant (n replaced by p). The cumulant slots are back-filled from the Hermite
	coefficients with kappa2 = 4 / sigma^2.
	"""
	rho, sigma, _ = goe_correction(params)
	alpha2, alpha0 = goe_coefficients(params)
	kappa2 = 4 / sigma ** 2
	return EdgeworthApprox(
		rho=rho,
		sigma=sigma,
		kappa2=kappa2,
		kappa3=6 * alpha2 * kappa2 ** 1.5,
		mu_g=alpha0 * math.sqrt(kappa2),
		alpha2=alpha2,
		alpha0=alpha0,
		inv_sqrt_n=1 / math.sqrt(params.p),
		n=params.p,
		mode="goe",
	)


# =============================================================================
# 							FIXED-p COMPARISON
# =============================================================================

def muirhead_transform(ell: float, p: int, n: int) -> tuple[float, float, float]:
	"""
	b_n = gamma_n / (ell - 1), c_n = (1 - gamma_n / (ell - 1)^2)^1/2, d_n = (2n)^-1/2 p / (ell - 1), so that
	R_n = (R_check_n - d_n) / c_n.
	"""
	gamma_n = p / n
	mp.check_supercritical(ell, gamma_n)
	h = ell - 1
	return gamma_n / h, math.sqrt(1 - gamma_n / (h * h)), p / (h * math.sqrt(2 * n))

def muirhead_fixed_p_cdf(x, ell: float, p: int, n: int):
	"""
	Classical fixed-dimension expansion for R_check_n = sqrt(n)(ell_hat - ell) / (sqrt(2) ell):
	Phi(x) + n^-1/2 ((sqrt(2)/3)(1 - x^2) - p / (sqrt(2)(ell - 1))) phi(x).
	"""
	if not (math.isfinite(ell) and ell > 1):
		raise DomainError(f"ell must exceed 1, got: {ell!r}")
	if int(p) != p or p < 0 or int(n) != n or n < 1:
		raise DomainError(f"p must be a non-negative and n a positive integer, got: p={p!r}, n={n!r}")
	x = np.asarray(x, dtype=float)
	correction = math.sqrt(2) / 3 * (1 - x * x) - p / (math.sqrt(2) * (ell - 1))
	return _out(np.asarray(normal_cdf(x)) + correction * np.asarray(normal_pdf(x)) / math.sqrt(n))


# =============================================================================
# 					EXPANSIONS FOR INDEPENDENT SUMMANDS
# =============================================================================

def _compositions(total: int, parts: int):
	for candidate in itertools.product(range(1, total + 1), repeat=parts):
		if sum(candidate) == total:
			yield candidate

def petrov_Q(v: int, avg_cumulants: list[float], x):
	"""
	Term Q_v of the expansion for standardized sums of independent variables,
	sum_w (1/w!) (sum over compositions j_1 + ... + j_w = v of prod chi_{j_k + 2} / (j_k + 2)!) (-1)^(v + 2w) d^(v + 2w) Phi.
	:param v: order, 1 or 2
	:param avg_cumulants: average standardized cumulants [chi_3, chi_4, ...] (v of them are used)
	:param x:
	:return: Q_v(x); Q_1 = chi_3 (1 - x^2) phi / 6
	"""
	if v not in (1, 2):
		raise UnsupportedError(f"Only orders v in (1, 2) are supported, got: {v!r}")
	if len(avg_cumulants) < v:
		raise DomainError(f"Order {v} needs {v} average cumulants (chi_3 .. chi_{v + 2}), got: {len(avg_cumulants)}")
	chi = {j + 3: float(c) for j, c in enumerate(avg_cumulants)}
	x = np.asarray(x, dtype=float)
	total = np.zeros_like(x)
	for w in range(1, v + 1):
		coefficient = sum(
			math.prod(chi[j + 2] / math.factorial(j + 2) for j in composition)
			for composition in _compositions(v, w)
		)
		order = v + 2 * w
		total = total + coefficient / math.factorial(w) * (-1) ** order * np.asarray(normal_cdf_derivative(order, x))
	return _out(total)
