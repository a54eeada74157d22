import math

import numpy as np
import pytest

GAMMAS = [0.1, 0.5, 1.0, 2.0, 4.0]
ELL_FACTORS = [0.1, 0.3, 0.5, 1.0, 2.0]
GRID_N = 1000


def pytest_addoption(parser):
	parser.addoption("--runslow", action="store_true", default=False,
					 help="Run the Monte Carlo acceptance tests (minutes)")


def pytest_configure(config):
	config.addinivalue_line("markers", "slow: Monte Carlo runs with 10^4 replicates or more")


def pytest_collection_modifyitems(config, items):
	if config.getoption("--runslow"):
		return
	skip_slow = pytest.mark.skip(reason="needs --runslow")
	for item in items:
		if "slow" in item.keywords:
			item.add_marker(skip_slow)


@pytest.fixture
def supercritical_grid() -> list[tuple[float, int, int]]:
	"""
	5 x 5 grid of (ell, n, p) with gamma_n = p/n in GAMMAS and ell = (1 + f)(1 + sqrt(gamma_n)), f in ELL_FACTORS.
	"""
	grid = []
	for gamma in GAMMAS:
		p = round(gamma * GRID_N)
		for factor in ELL_FACTORS:
			grid.append(((1 + factor) * (1 + math.sqrt(p / GRID_N)), GRID_N, p))
	return grid


@pytest.fixture
def rng() -> np.random.Generator:
	return np.random.default_rng(20240917)
