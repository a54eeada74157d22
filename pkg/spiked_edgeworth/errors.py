"""
Exception hierarchy. Domain errors map to CLI exit code 1, numeric errors to exit code 2.
"""
import math


class SpikedEdgeworthError(Exception):
	"""Base class of all errors raised by this package."""


# =============================================================================
# 							DOMAIN ERRORS
# =============================================================================

class DomainError(SpikedEdgeworthError, ValueError):
	"""Inputs outside the domain where the formulas are defined."""


class SubcriticalError(DomainError):
	"""
	Spike strength at or below the phase transition 1 + sqrt(gamma).
	"""

	def __init__(self, ell: float, gamma: float):
		self.ell = ell
		self.gamma = gamma
		self.threshold = 1.0 + math.sqrt(gamma)
		super().__init__(f"ell={ell!r} is not supercritical for gamma={gamma!r}: "
						 f"requires ell > 1 + sqrt(gamma) = {self.threshold!r}")


class UnsupportedError(DomainError):
	pass


# =============================================================================
# 							NUMERIC ERRORS
# =============================================================================

class NumericError(SpikedEdgeworthError, ArithmeticError):
	"""A numerical procedure failed to deliver the requested accuracy."""


class QuadratureError(NumericError):

	def __init__(self, message: str, achieved: float, order: int):
		self.achieved = achieved
		self.order = order
		super().__init__(f"{message} (relative change {achieved:.3e} at order {order})")


class EigensolverError(NumericError):

	def __init__(self, message: str, shape: tuple, finite: bool, trace: float):
		self.shape = shape
		self.finite = finite
		self.trace = trace
		super().__init__(f"{message} (shape={shape}, all finite={finite}, trace={trace!r})")


class SecularSolveError(NumericError):

	def __init__(self, message: str, lambda_1: float, bracket: tuple, expansions: int):
		self.lambda_1 = lambda_1
		self.bracket = bracket
		self.expansions = expansions
		super().__init__(f"{message} (lambda_1={lambda_1!r}, bracket={bracket}, expansions={expansions})")


class QuantileError(NumericError):

	def __init__(self, message: str, u: float, bracket: tuple, values: tuple):
		self.u = u
		self.bracket = bracket
		self.values = values
		super().__init__(f"{message} (u={u!r}, bracket={bracket}, cdf at bracket={values})")


class ReplicateError(NumericError):
	"""Wraps the failure of a single Monte Carlo replicate."""

	def __init__(self, replicate_index: int, seed: int, cause: Exception | str):
		self.replicate_index = replicate_index
		self.seed = seed
		super().__init__(f"replicate {replicate_index} (seed={seed}) failed: {cause}")
