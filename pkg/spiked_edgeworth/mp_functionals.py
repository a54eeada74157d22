"""
Functionals of the Marchenko-Pastur law F_gamma and its companion law (1 - gamma) delta_0 + gamma F_gamma.

Conventions: F_gamma is the limiting spectrum of the p x p matrix n^-1 Z'Z (p/n -> gamma), the companion law
the limiting spectrum of the n x n matrix n^-1 ZZ'. The resolvent kernel at the centering point is
g(lambda) = (rho(ell, gamma) - lambda)^-1.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Literal

import numpy as np
from scipy.special import roots_legendre

from spiked_edgeworth.errors import DomainError, QuadratureError, SubcriticalError

logger = logging.getLogger(__name__)

QUADRATURE_ORDER: int = 200
QUADRATURE_MAX_ORDER: int = 6400
QUADRATURE_RTOL: float = 1e-12
QUADRATURE_ATOL: float = 1e-15

Law = Literal["standard", "companion"]


# =============================================================================
# 							DOMAIN TYPES
# =============================================================================

@dataclass(frozen=True)
class MPParams:
	gamma: float

	def __post_init__(self):
		if not (math.isfinite(self.gamma) and self.gamma > 0):
			raise DomainError(f"Aspect ratio gamma must be positive and finite, got: {self.gamma!r}")

	@property
	def support(self) -> "SupportInterval":
		root = math.sqrt(self.gamma)
		return SupportInterval((1.0 - root) ** 2, (1.0 + root) ** 2)


@dataclass(frozen=True)
class SupportInterval:
	a: float
	b: float


@dataclass(frozen=True)
class CompanionLaw:
	"""
	Decomposition of the companion law into its atom at 0 and its absolutely continuous part.
	"""
	gamma: float
	atom_weight: float
	continuous_weight: float

	@property
	def total_mass(self) -> float:
		return self.atom_weight + self.continuous_weight


def check_supercritical(ell: float, gamma: float):
	"""
	Rejects ell <= 1 + sqrt(gamma). gamma = 0 (the fixed-dimension limit) is accepted.
	:param ell: spike strength
	:param gamma: aspect ratio (>= 0)
	"""
	if not (math.isfinite(gamma) and gamma >= 0):
		raise DomainError(f"Aspect ratio gamma must be non-negative and finite, got: {gamma!r}")
	if not (math.isfinite(ell) and ell > 1.0 + math.sqrt(gamma)):
		raise SubcriticalError(ell, gamma)


# =============================================================================
# 							SUPPORT & LAWS
# =============================================================================

def support_edges(gamma: float) -> SupportInterval:
	"""
	Bulk edges a = (1 - sqrt(gamma))^2, b = (1 + sqrt(gamma))^2.
	"""
	return MPParams(gamma).support

def companion_law(gamma: float) -> CompanionLaw:
	"""
	For gamma <= 1 the companion law has an atom 1 - gamma at 0. For gamma > 1 the atom 1 - 1/gamma of F_gamma
	is cancelled, leaving a purely continuous law.
	"""
	MPParams(gamma)
	atom = max(1.0 - gamma, 0.0)
	return CompanionLaw(gamma=gamma, atom_weight=atom, continuous_weight=min(gamma, 1.0))

def mp_density(x, gamma: float):
	"""
	Density of the continuous part of F_gamma; zero outside (a, b).
	:param x: evaluation point(s)
	:param gamma:
	:return: density values (mass min(1, 1/gamma))
	"""
	edges = support_edges(gamma)
	x = np.asarray(x, dtype=float)
	inside = (x > edges.a) & (x < edges.b)
	safe = np.where(inside, x, 1.0)
	values = np.sqrt(np.clip((edges.b - safe) * (safe - edges.a), 0.0, None)) / (2 * np.pi * gamma * safe)
	return np.where(inside, values, 0.0)


# =============================================================================
# 							QUADRATURE
# =============================================================================

@lru_cache(maxsize=16)
def _theta_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
	"""Gauss-Legendre nodes and weights mapped to [-pi, pi]."""
	nodes, weights = roots_legendre(order)
	return np.pi * nodes, np.pi * weights

def _support_point(theta: np.ndarray, gamma: float) -> np.ndarray:
	# 1 + gamma + 2 sqrt(gamma) cos(theta), written to stay accurate near the lower edge
	root = math.sqrt(gamma)
	return (1.0 - root) ** 2 + 4.0 * root * np.cos(theta / 2) ** 2

def _evaluate(f: Callable, x: np.ndarray) -> np.ndarray:
	with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
		values = np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)
	if not np.all(np.isfinite(values)):
		raise DomainError("Function is not finite on the support of the Marchenko-Pastur law")
	return values

def theta_integral(integrand: Callable[[np.ndarray], np.ndarray]) -> float:
	"""
	Integrates a smooth 2pi-periodic integrand over [-pi, pi] with Gauss-Legendre rules of doubling order,
	starting at order 200, until the relative change drops below 1e-12.
	:param integrand: vectorized function of theta
	:return: the integral
	"""
	order = QUADRATURE_ORDER
	nodes, weights = _theta_rule(order)
	previous = float(weights @ integrand(nodes))
	change = math.inf
	while order < QUADRATURE_MAX_ORDER:
		order *= 2
		nodes, weights = _theta_rule(order)
		current = float(weights @ integrand(nodes))
		change = abs(current - previous)
		logger.debug(f"Quadrature order {order}: value={current!r}, change={change:.3e}")
		if change <= QUADRATURE_RTOL * abs(current) + QUADRATURE_ATOL:
			return current
		previous = current
	raise QuadratureError("Quadrature did not converge", achieved=change / max(abs(previous), QUADRATURE_ATOL),
						  order=order)

def mp_expect(f: Callable, gamma: float, law: Law = "standard") -> float:
	"""
	Expectation of f under F_gamma ('standard') or the companion law ('companion').
	The continuous part is integrated after the substitution x = 1 + gamma + 2 sqrt(gamma) cos(theta), which turns
	the density into sin(theta)^2 / (pi x) and removes the square-root edge behaviour; atoms are added exactly.
	:param f: vectorized function, evaluated on numpy arrays
	:param gamma: aspect ratio
	:param law: 'standard' or 'companion'
	:return: the expectation
	"""
	MPParams(gamma)
	if law == "standard":
		scale, atom = 1.0, max(1.0 - 1.0 / gamma, 0.0)
	elif law == "companion":
		scale, atom = gamma, max(1.0 - gamma, 0.0)
	else:
		raise DomainError(f"Unknown law: {law!r} (expected 'standard' or 'companion')")

	def integrand(theta):
		x = _support_point(theta, gamma)
		return _evaluate(f, x) * np.sin(theta) ** 2 / x

	result = scale * theta_integral(integrand) / np.pi
	if atom > 0:
		try:
			at_zero = float(_evaluate(f, np.zeros(1))[0])
		except DomainError:
			raise DomainError(f"Function must be finite at 0: the {law} law has an atom of mass {atom!r} there")
		result += atom * at_zero
	return result

def mp_expect_dual(f: Callable, gamma: float) -> float:
	"""
	F_gamma(f) for gamma > 1 through the law with parameter 1/gamma:
	F_gamma(f) = F_{1/gamma}(lambda -> f(gamma lambda)) / gamma + (1 - 1/gamma) f(0).
	"""
	MPParams(gamma)
	if gamma <= 1:
		raise DomainError(f"Duality evaluation requires gamma > 1, got: {gamma!r}")
	rescaled = mp_expect(lambda x: f(gamma * x), 1.0 / gamma, "standard")
	at_zero = float(_evaluate(f, np.zeros(1))[0])
	return rescaled / gamma + (1.0 - 1.0 / gamma) * at_zero

def bs_mean(f: Callable, gamma: float) -> float:
	"""
	Asymptotic mean mu(f) of the centered linear spectral statistic G_n(f):
	(f(a) + f(b)) / 4 - (1 / 2pi) int_a^b f(x) / sqrt(4 gamma - (x - 1 - gamma)^2) dx,
	where the integral equals (1/2) int_{-pi}^{pi} f(1 + gamma + 2 sqrt(gamma) cos(theta)) dtheta.
	:param f: vectorized function, finite on [a, b]
	:param gamma:
	:return: mu(f)
	"""
	edges = support_edges(gamma)
	ends = _evaluate(f, np.array([edges.a, edges.b]))
	integral = theta_integral(lambda theta: _evaluate(f, _support_point(theta, gamma)))
	return float(ends.sum()) / 4 - integral / (4 * np.pi)


# =============================================================================
# 							CLOSED FORMS
# =============================================================================

def companion_stieltjes(gamma: float, z: float) -> float:
	"""
	Companion law expectation of f_z(lambda) = (lambda - z)^-1 for z above the bulk:
	(-z + gamma - 1 + sqrt((z - gamma - 1)^2 - 4 gamma)) / (2z).
	"""
	edges = support_edges(gamma)
	if not (math.isfinite(z) and z > edges.b):
		raise DomainError(f"z={z!r} must lie strictly above the bulk edge b={edges.b!r}")
	root = math.sqrt((z - gamma - 1) ** 2 - 4 * gamma)
	# rationalized form of the expression above, free of cancellation for large z
	return -2.0 / (root + z - gamma + 1)

def rho_derivative(ell: float, gamma: float) -> float:
	"""d rho / d ell = ((ell - 1)^2 - gamma) / (ell - 1)^2."""
	check_supercritical(ell, gamma)
	h = ell - 1
	return (h * h - gamma) / (h * h)

def f_g(ell: float, gamma: float) -> float:
	"""
	Companion law expectation of g(lambda) = (rho - lambda)^-1, which is exactly 1/ell.
	"""
	check_supercritical(ell, gamma)
	return 1.0 / ell

def f_g2(ell: float, gamma: float) -> float:
	"""(1 - 1/ell)^2 / ((ell - 1)^2 - gamma), equal to 2 / sigma^2."""
	check_supercritical(ell, gamma)
	h = ell - 1
	return (1 - 1 / ell) ** 2 / (h * h - gamma)

def f_g3(ell: float, gamma: float) -> float:
	"""(1 - 1/ell)^3 ((ell - 1)^3 + gamma) / ((ell - 1)^2 - gamma)^3."""
	check_supercritical(ell, gamma)
	h = ell - 1
	return (1 - 1 / ell) ** 3 * (h ** 3 + gamma) / (h * h - gamma) ** 3

def mu_g(ell: float, gamma: float) -> float:
	"""gamma (ell - 1) / ((ell - 1)^2 - gamma)^2."""
	check_supercritical(ell, gamma)
	h = ell - 1
	return gamma * h / (h * h - gamma) ** 2

def mu_g_limit_form(ell: float, gamma: float) -> float:
	"""
	mu(g) as it comes out of the contour integral: (ell - 1)((ell - 1 - sqrt(gamma))^-1 - (ell - 1 + sqrt(gamma))^-1)^2 / 4.
	"""
	check_supercritical(ell, gamma)
	h, root = ell - 1, math.sqrt(gamma)
	return h * (1 / (h - root) - 1 / (h + root)) ** 2 / 4

def eta(ell: float, gamma: float) -> float:
	"""
	Gap between the centering and the bulk edge: rho - b = (ell - 1 - sqrt(gamma))^2 / (ell - 1).
	"""
	check_supercritical(ell, gamma)
	h = ell - 1
	return (h - math.sqrt(gamma)) ** 2 / h

def resolvent_kernel(ell: float, gamma: float) -> Callable[[np.ndarray], np.ndarray]:
	"""
	Returns g(lambda) = (rho(ell, gamma) - lambda)^-1 as a vectorized function.
	"""
	check_supercritical(ell, gamma)
	rho = ell + gamma * ell / (ell - 1)
	return lambda lam: 1.0 / (rho - np.asarray(lam, dtype=float))
