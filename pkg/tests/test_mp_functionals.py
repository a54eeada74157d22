import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad

from spiked_edgeworth import mp_functionals as mp
from spiked_edgeworth.edgeworth import centering_scaling
from spiked_edgeworth.errors import DomainError, QuadratureError, SubcriticalError


def random_points(rng, count=20):
	points = [(3.0, 1.0), (2.0, 0.25), (1.3 * (1 + math.sqrt(0.1)), 0.1), (1.4 * (1 + math.sqrt(2.0)), 2.0)]
	while len(points) < count:
		gamma = rng.uniform(0.05, 3.0)
		points.append(((1 + rng.uniform(0.2, 1.5)) * (1 + math.sqrt(gamma)), gamma))
	return points


class TestSupport:

	@pytest.mark.parametrize("gamma, expected", [
		(1.0, (0.0, 4.0)),
		(0.1, ((1 - math.sqrt(0.1)) ** 2, (1 + math.sqrt(0.1)) ** 2)),
		(4.0, (1.0, 9.0)),
	])
	def test_support_edges(self, gamma, expected):
		edges = mp.support_edges(gamma)
		assert_allclose((edges.a, edges.b), expected, rtol=0, atol=1e-15)

	def test_support_edges_gamma_tenth(self):
		edges = mp.support_edges(0.1)
		assert edges.a == pytest.approx(0.467544, abs=1e-6)
		assert edges.b == pytest.approx(1.732455, abs=1e-6)

	@pytest.mark.parametrize("gamma", [0.0, -1.0, math.inf, math.nan])
	def test_invalid_gamma(self, gamma):
		with pytest.raises(DomainError):
			mp.support_edges(gamma)

	@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
	def test_density_mass(self, gamma):
		edges = mp.support_edges(gamma)
		mass, _ = quad(lambda x: float(mp.mp_density(x, gamma)), edges.a, edges.b, limit=200)
		assert_allclose(mass, min(1.0, 1.0 / gamma), rtol=1e-7)

	def test_density_vanishes_outside(self):
		assert_allclose(mp.mp_density([-1.0, 0.0, 4.5, 10.0], 1.0), 0.0)

	@pytest.mark.parametrize("gamma, atom", [(0.25, 0.75), (1.0, 0.0), (3.0, 0.0)])
	def test_companion_law(self, gamma, atom):
		law = mp.companion_law(gamma)
		assert law.atom_weight == pytest.approx(atom)
		assert law.total_mass == pytest.approx(1.0)


class TestSupercritical:

	def test_threshold_carried(self):
		with pytest.raises(SubcriticalError) as info:
			mp.f_g(1.5, 1.0)
		assert info.value.threshold == 2.0
		assert "2.0" in str(info.value)

	def test_boundary_rejected(self):
		with pytest.raises(SubcriticalError):
			mp.check_supercritical(2.0, 1.0)

	def test_zero_gamma_accepted(self):
		mp.check_supercritical(1.01, 0.0)


class TestClosedForms:

	def test_f_g(self):
		assert mp.f_g(3, 1) == pytest.approx(1 / 3)
		assert mp.f_g(2, 0.25) == pytest.approx(0.5)

	def test_f_g2(self):
		assert mp.f_g2(3, 1) == pytest.approx(4 / 27, rel=1e-14)
		assert mp.f_g2(3, 1e-14) == pytest.approx(1 / 9, rel=1e-12)
		_, sigma = centering_scaling(3, 1)
		assert mp.f_g2(3, 1) == pytest.approx(2 / sigma ** 2, rel=1e-14)

	def test_f_g3(self):
		assert mp.f_g3(3, 1) == pytest.approx(8 / 81, rel=1e-14)

	def test_mu_g(self):
		assert mp.mu_g(3, 1) == pytest.approx(2 / 9, rel=1e-14)
		assert mp.mu_g(2, 0.25) == pytest.approx(4 / 9, rel=1e-14)
		assert mp.mu_g(3, 1e-300) == pytest.approx(0.0, abs=1e-200)

	def test_eta(self):
		assert mp.eta(3, 1) == pytest.approx(0.5)
		assert mp.eta(2, 0.25) == pytest.approx(0.25)
		rho, _ = centering_scaling(3, 1)
		assert mp.eta(3, 1) == pytest.approx(rho - mp.support_edges(1).b)
		assert 0 < mp.eta(2 + 1e-6, 1) < 1e-11

	@pytest.mark.parametrize("ell, gamma", [(3, 1), (2, 0.25), (5, 3), (1.5, 0.1)])
	def test_mu_g_limit_form(self, ell, gamma):
		assert_allclose(mp.mu_g_limit_form(ell, gamma), mp.mu_g(ell, gamma), rtol=1e-12)

	@pytest.mark.parametrize("ell, gamma", [(3, 1), (2, 0.25), (5, 3)])
	def test_rho_derivative(self, ell, gamma):
		step = 1e-6 * ell
		difference = (centering_scaling(ell + step, gamma)[0] - centering_scaling(ell - step, gamma)[0]) / (2 * step)
		assert_allclose(mp.rho_derivative(ell, gamma), difference, rtol=1e-8)

	def test_companion_stieltjes_at_centering(self):
		assert_allclose(mp.companion_stieltjes(1.0, 4.5), -1 / 3, rtol=1e-14)

	def test_companion_stieltjes_quadrature(self):
		value = mp.mp_expect(lambda lam: 1 / (lam - 100.0), 0.1, "companion")
		assert_allclose(mp.companion_stieltjes(0.1, 100.0), value, rtol=0, atol=1e-8)

	def test_companion_stieltjes_vanishes_from_below(self):
		values = [mp.companion_stieltjes(1.0, z) for z in (10.0, 1e3, 1e6, 1e9)]
		assert all(v < 0 for v in values)
		assert np.all(np.diff(values) > 0)
		assert abs(values[-1]) < 1e-8

	def test_companion_stieltjes_inside_bulk(self):
		with pytest.raises(DomainError):
			mp.companion_stieltjes(1.0, 3.0)


class TestQuadrature:

	def test_resolvent_moments(self, rng):
		for ell, gamma in random_points(rng):
			g = mp.resolvent_kernel(ell, gamma)
			assert_allclose(mp.mp_expect(g, gamma, "companion"), mp.f_g(ell, gamma), rtol=0, atol=1e-8)
			assert_allclose(mp.mp_expect(lambda lam: g(lam) ** 2, gamma, "companion"), mp.f_g2(ell, gamma),
							rtol=0, atol=1e-8)
			assert_allclose(mp.mp_expect(lambda lam: g(lam) ** 3, gamma, "companion"), mp.f_g3(ell, gamma),
							rtol=0, atol=1e-8)

	def test_bs_mean_of_resolvent(self, rng):
		for ell, gamma in random_points(rng):
			assert_allclose(mp.bs_mean(mp.resolvent_kernel(ell, gamma), gamma), mp.mu_g(ell, gamma), rtol=0, atol=1e-8)

	def test_bs_mean_of_constant(self):
		assert_allclose(mp.bs_mean(lambda x: 3.0 + 0 * x, 0.7), 0.0, atol=1e-12)

	def test_bs_mean_of_square(self):
		# real Gaussian case: mu(x^2) = gamma
		assert_allclose(mp.bs_mean(lambda x: x * x, 0.4), 0.4, rtol=1e-12)

	@pytest.mark.parametrize("gamma", [0.1, 0.5, 1.0, 2.0, 4.0])
	def test_moments(self, gamma):
		assert_allclose(mp.mp_expect(lambda x: x, gamma), 1.0, rtol=1e-10)
		assert_allclose(mp.mp_expect(lambda x: x * x, gamma), 1 + gamma, rtol=1e-10)
		assert_allclose(mp.mp_expect(lambda x: x, gamma, "companion"), gamma, rtol=1e-10)
		assert_allclose(mp.mp_expect(lambda x: x * x, gamma, "companion"), gamma * (1 + gamma), rtol=1e-10)

	@pytest.mark.parametrize("law", ["standard", "companion"])
	@pytest.mark.parametrize("gamma", [0.3, 1.0, 2.5])
	def test_total_mass(self, law, gamma):
		assert_allclose(mp.mp_expect(lambda x: np.ones_like(x), gamma, law), 1.0, rtol=1e-12)

	def test_inverse_moment(self):
		assert_allclose(mp.mp_expect(lambda x: 1 / x, 0.5), 2.0, rtol=1e-8)

	def test_undefined_at_atom(self):
		with pytest.raises(DomainError, match="atom"):
			mp.mp_expect(lambda x: 1 / x, 0.5, "companion")

	def test_unknown_law(self):
		with pytest.raises(DomainError):
			mp.mp_expect(lambda x: x, 0.5, "other")

	@pytest.mark.parametrize("gamma", [2.0, 4.0])
	def test_duality(self, gamma):
		f = lambda x: np.exp(-x) + x * x
		assert_allclose(mp.mp_expect_dual(f, gamma), mp.mp_expect(f, gamma), rtol=1e-10)

	def test_duality_requires_large_gamma(self):
		with pytest.raises(DomainError):
			mp.mp_expect_dual(lambda x: x, 0.5)

	def test_non_convergence(self):
		with pytest.raises(QuadratureError) as info:
			mp.theta_integral(np.abs)
		assert info.value.order >= mp.QUADRATURE_MAX_ORDER
