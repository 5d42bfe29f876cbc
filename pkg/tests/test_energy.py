#!/usr/bin/env python3
"""
Tests for the energy functionals and inequality audits
"""

import math
import unittest

import numpy as np

from app.core.errors import ConfigurationError, InputError, ShapeError
from app.physics.basis import unit_mode
from app.physics.energy import (
    default_mu0,
    dissipation_rate,
    energy,
    energy_identity_residual,
    epsilon_ceiling,
    estimate_monotonicity_constant,
    fit_sandwich_constants,
    lyapunov,
    lyapunov_drift,
    monotonicity_check,
    pair_energy,
    pair_energy_rate,
    sandwich_lower_shape,
    tail_energy_fraction,
)
from app.physics.model import State, odd_polynomial, random_coefficients, simple_physics
from tests.test_config import cubic_physics, damped_physics, line_basis, sine_coefficients


class TestEnergy(unittest.TestCase):

    def setUp(self):
        self.basis = line_basis(32)
        self.sine = sine_coefficients(self.basis)
        self.zero = np.zeros(self.basis.size)
        self.free = simple_physics(self.basis)

    def test_zero_state(self):
        parts = energy(self.basis, self.free, State(self.zero, self.zero))
        self.assertEqual((parts.kinetic, parts.elastic, parts.potential, parts.forcing), (0.0, 0.0, 0.0, 0.0))

    def test_kinetic_only(self):
        parts = energy(self.basis, self.free, State(self.zero, self.sine))
        self.assertAlmostEqual(parts.kinetic, math.pi / 4, places=12)
        self.assertAlmostEqual(parts.total, math.pi / 4, places=12)

    def test_cubic_potential(self):
        config = simple_physics(self.basis, nonlinearity=odd_polynomial([0.0, 1.0]))
        parts = energy(self.basis, config, State(self.sine, self.zero))
        self.assertAlmostEqual(parts.elastic, math.pi / 4, places=12)
        self.assertAlmostEqual(parts.potential, 3 * math.pi / 32, places=12)
        self.assertAlmostEqual(parts.total, math.pi / 4 + 3 * math.pi / 32, places=12)

    def test_forcing_term(self):
        h = np.zeros(self.basis.size)
        h[0] = 0.5
        config = simple_physics(self.basis, h=h)
        parts = energy(self.basis, config, State(self.sine, self.zero))
        self.assertAlmostEqual(parts.forcing, -0.5 * self.sine[0], places=14)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            energy(self.basis, self.free, State(np.zeros(3), np.zeros(3)))


class TestLyapunov(unittest.TestCase):

    def setUp(self):
        self.basis = line_basis(16)
        self.sine = sine_coefficients(self.basis)
        self.config = simple_physics(self.basis)

    def test_zero_epsilon_is_energy(self):
        state = State(self.sine, 0.5 * self.sine)
        self.assertEqual(lyapunov(self.basis, self.config, state, 0.0),
                         energy(self.basis, self.config, state).total)

    def test_sine_pair(self):
        state = State(self.sine, self.sine)
        expected = math.pi / 4 + math.pi / 4 + 0.1 * math.pi / 2
        self.assertAlmostEqual(lyapunov(self.basis, self.config, state, 0.1), expected, places=12)

    def test_negative_epsilon_rejected(self):
        with self.assertRaises(ConfigurationError):
            lyapunov(self.basis, self.config, State(self.sine, self.sine), -0.1)

    def test_epsilon_ceiling(self):
        """lambda_1 = 1, mu0 = 1/2 gives eps0 = 1/16"""
        self.assertAlmostEqual(epsilon_ceiling(self.basis, 0.5), 1.0 / 16, places=15)
        self.assertLess(epsilon_ceiling(self.basis, 1.0 - 1e-9), 1e-9)
        with self.assertRaises(ConfigurationError):
            epsilon_ceiling(self.basis, 1.0)

    def test_ceiling_controls_cross_term(self):
        """|eps (u_t, u)| <= (1/16)(1 - mu0/lambda_1)(||u_t||^2 + ||grad u||^2) for eps <= eps0"""
        mu0 = 0.5
        eps = epsilon_ceiling(self.basis, mu0)
        rng = np.random.default_rng(9)
        for _ in range(1000):
            state = State(random_coefficients(self.basis, rng), random_coefficients(self.basis, rng))
            cross = abs(eps * float(state.a @ state.b))
            bound = 0.5 * sandwich_lower_shape(self.basis, state, mu0)
            self.assertLessEqual(cross, bound * (1 + 1e-12))

    def test_default_mu0(self):
        self.assertEqual(default_mu0(self.basis, None), 0.5)
        self.assertEqual(default_mu0(self.basis, -0.5), 0.75)
        with self.assertRaises(ConfigurationError):
            default_mu0(self.basis, -2.0)

    def test_drift_reduces_to_dissipation_rate(self):
        config = cubic_physics(self.basis)
        rng = np.random.default_rng(1)
        state = State(random_coefficients(self.basis, rng), random_coefficients(self.basis, rng))
        self.assertEqual(lyapunov_drift(self.basis, config, state, 0.0), dissipation_rate(self.basis, config, state))


class TestEnergyIdentity(unittest.TestCase):

    def setUp(self):
        self.basis = line_basis(16)

    def test_damping_only_dissipates(self):
        config = damped_physics(self.basis)
        b = random_coefficients(self.basis, np.random.default_rng(3))
        rate = dissipation_rate(self.basis, config, State(np.zeros(self.basis.size), b))
        self.assertAlmostEqual(rate, -np.linalg.norm(b) ** 4, places=10)

    def test_residual_of_identical_states(self):
        state = State(np.zeros(self.basis.size), np.zeros(self.basis.size))
        self.assertEqual(energy_identity_residual(self.basis, damped_physics(self.basis), state, state, 0.1), 0.0)

    def test_non_positive_dt(self):
        state = State(np.zeros(self.basis.size), np.zeros(self.basis.size))
        with self.assertRaises(InputError):
            energy_identity_residual(self.basis, damped_physics(self.basis), state, state, 0.0)

    def test_sandwich_constants(self):
        config = cubic_physics(self.basis, forcing=0.0, kernel_weight=0.0)
        rng = np.random.default_rng(8)
        states = [State(random_coefficients(self.basis, rng), random_coefficients(self.basis, rng)) for _ in range(20)]
        constants = fit_sandwich_constants(self.basis, config, states)
        self.assertEqual(constants.mu0, 0.5)
        # F >= 0 and h = 0, so the lower bound needs no offset
        self.assertEqual(constants.lower, 0.0)
        self.assertGreater(constants.upper, 0.0)
        with self.assertRaises(InputError):
            fit_sandwich_constants(self.basis, config, [])

    def test_sandwich_offset_holds_on_fresh_states(self):
        """
        With f = 0 and h = 0.5 psi_1 the offset is max over a of a/2 - (7/16) a^2 = 1/7
        at a = 4/7 along mode 1; fitted once it must hold for any other state.
        """
        h = np.zeros(self.basis.size)
        h[0] = 0.5
        config = simple_physics(self.basis, h=h)
        zero = np.zeros(self.basis.size)
        training = [State(alpha * unit_mode(self.basis, 0), zero) for alpha in [0.0, 0.25, 4.0 / 7.0, 1.0, 2.0]]
        constants = fit_sandwich_constants(self.basis, config, training)
        self.assertAlmostEqual(constants.lower, 1.0 / 7.0, places=12)

        rng = np.random.default_rng(13)
        for _ in range(1000):
            scale = rng.uniform(0.0, 3.0)
            state = State(scale * random_coefficients(self.basis, rng), scale * random_coefficients(self.basis, rng))
            total = energy(self.basis, config, state).total
            self.assertGreaterEqual(total, sandwich_lower_shape(self.basis, state, constants.mu0)
                                    - constants.lower - 1e-12)


class TestMonotonicity(unittest.TestCase):

    def test_equal_vectors(self):
        report = monotonicity_check(np.array([1.0, 2.0]), np.array([1.0, 2.0]), 3.0)
        self.assertEqual(report.lhs, 0.0)
        self.assertEqual(report.empirical_ratio, 0.0)
        self.assertTrue(report.passed)

    def test_zero_second_vector(self):
        x = np.array([0.3, -1.2, 2.0])
        report = monotonicity_check(x, np.zeros(3), 3.0)
        self.assertAlmostEqual(report.lhs, np.linalg.norm(x) ** 3, places=12)
        self.assertAlmostEqual(report.empirical_ratio, 1.0, places=12)
        self.assertEqual(report.branch, "q>=2")

    def test_hand_pair(self):
        """x = (1, 0), y = (0, 1), q = 4: lhs 2, ||x - y||^4 = 4"""
        report = monotonicity_check(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 4.0)
        self.assertAlmostEqual(report.lhs, 2.0, places=14)
        self.assertAlmostEqual(report.empirical_ratio, 0.5, places=14)

    def test_sub_quadratic_branch(self):
        report = monotonicity_check(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 1.5)
        self.assertEqual(report.branch, "1<q<2")
        self.assertGreater(report.empirical_ratio, 0.0)

    def test_invalid_inputs(self):
        with self.assertRaises(InputError):
            monotonicity_check(np.zeros(2), np.zeros(2), 3.0)
        with self.assertRaises(InputError):
            monotonicity_check(np.ones(2), np.zeros(2), 1.0)
        with self.assertRaises(ShapeError):
            monotonicity_check(np.ones(2), np.ones(3), 3.0)

    def test_random_pairs(self):
        rng = np.random.default_rng(12)
        for q in (1.5, 2.5, 3.0, 4.0):
            for dim in (2, 16, 256):
                ratio, relative_lhs = estimate_monotonicity_constant(q, dim, 2000, rng, batch=500)
                self.assertGreater(ratio, 0.0)
                self.assertGreaterEqual(relative_lhs, -1e-14)
                if q == 4.0 and dim == 2:
                    self.assertLessEqual(ratio, 1.0)


class TestPairAndTail(unittest.TestCase):

    def setUp(self):
        self.basis = line_basis(8)
        self.sine = sine_coefficients(self.basis)
        self.zero = np.zeros(self.basis.size)

    def test_identical_states(self):
        state = State(self.sine, self.sine)
        self.assertEqual(pair_energy(self.basis, state, state), 0.0)

    def test_sine_against_rest(self):
        value = pair_energy(self.basis, State(self.sine, self.zero), State(self.zero, self.zero))
        self.assertAlmostEqual(value, math.pi / 4, places=12)

    def test_pair_rate_of_damped_copies(self):
        """Two states sharing velocity have zero pair-energy rate without a source"""
        config = damped_physics(self.basis)
        first = State(self.sine, self.sine)
        second = State(self.zero, self.sine)
        self.assertEqual(pair_energy_rate(self.basis, config, first, second), 0.0)

    def test_mode_one_only(self):
        pure = State(unit_mode(self.basis, 0), self.zero)
        self.assertEqual(tail_energy_fraction(self.basis, pure, 1), 0.0)
        # projection leaves quadrature round-off in the higher modes
        self.assertAlmostEqual(tail_energy_fraction(self.basis, State(self.sine, self.zero), 1), 0.0, places=14)

    def test_highest_mode_only(self):
        a = np.zeros(self.basis.size)
        a[-1] = 1.0
        self.assertEqual(tail_energy_fraction(self.basis, State(a, self.zero), self.basis.size - 1), 1.0)

    def test_equal_split(self):
        """Equal modal energy in modes 1 and 2 gives fraction 1/2 above cutoff 1"""
        a = np.zeros(self.basis.size)
        a[0] = 1.0
        a[1] = 0.5  # lambda_2 = 4
        self.assertAlmostEqual(tail_energy_fraction(self.basis, State(a, self.zero), 1), 0.5, places=15)

    def test_zero_state(self):
        self.assertEqual(tail_energy_fraction(self.basis, State(self.zero, self.zero), 2), 0.0)

    def test_cutoff_out_of_range(self):
        with self.assertRaises(InputError):
            tail_energy_fraction(self.basis, State(self.zero, self.zero), self.basis.size)


if __name__ == "__main__":
    unittest.main()
