#!/usr/bin/env python3
"""
Tests for the radial damping solve, Strang steps, trajectories and the resolvent solver
"""

import math
import unittest

import numpy as np

from app.core.errors import ConfigurationError, NumericalError
from app.physics.basis import l2_norm
from app.physics.energy import energy
from app.physics.integrator import (
    ResolventProblem,
    StepConfig,
    accretivity_form,
    damping_substep,
    exact_damping_substep,
    integrate,
    radial_damping_solve,
    resolvent_residual,
    resolvent_solve,
    step,
)
from app.physics.model import State, custom_pointwise, random_coefficients, simple_physics
from app.services.experiments import convergence_order, global_error_refinement
from tests.test_config import cubic_physics, damped_physics, free_physics, line_basis, sine_coefficients


def smooth_state(basis):
    """u = sin x + 0.3 sin 2x, u_t = 0.5 sin x"""
    a = np.zeros(basis.size)
    b = np.zeros(basis.size)
    scale = math.sqrt(math.pi / 2)
    a[0], a[1] = scale, 0.3 * scale
    b[0] = 0.5 * scale
    return State(a, b)


class TestRadialSolve(unittest.TestCase):

    def test_zero_radius(self):
        self.assertEqual(radial_damping_solve(0.0, 3.0, 2.0), 0.0)

    def test_zero_gain(self):
        self.assertEqual(radial_damping_solve(2.5, 0.0, 2.0), 2.5)

    def test_exact_root(self):
        """rho (1 + rho^2) = 2 at rho = 1"""
        self.assertAlmostEqual(radial_damping_solve(2.0, 1.0, 2.0), 1.0, places=15)

    def test_linear_exponent_closed_form(self):
        for c in np.logspace(-3, 3, 25):
            for r in np.logspace(-3, 3, 25):
                oracle = 2.0 * r / (1.0 + math.sqrt(1.0 + 4.0 * c * r))
                rho = radial_damping_solve(float(r), float(c), 1.0)
                self.assertLessEqual(abs(rho - oracle), 1e-12 * max(1.0, oracle))

    def test_residual_tolerance(self):
        for p in (0.5, 2.0, 5.0):
            for r in (1e-6, 0.3, 7.0, 1e4):
                rho = radial_damping_solve(r, 2.0, p)
                self.assertLessEqual(abs(rho * (1 + 2.0 * rho ** p) - r), 1e-13 * (1 + r))

    def test_exhausted_iterations(self):
        with self.assertRaises(NumericalError) as ctx:
            radial_damping_solve(1e6, 1e6, 3.0, tol=1e-13, max_iter=1)
        self.assertIn("bracket", ctx.exception.details)

    def test_invalid_arguments(self):
        with self.assertRaises(ConfigurationError):
            radial_damping_solve(-1.0, 1.0, 2.0)
        with self.assertRaises(ConfigurationError):
            radial_damping_solve(1.0, 1.0, 0.0)


class TestDampingSubstep(unittest.TestCase):

    def setUp(self):
        self.basis = line_basis(16)
        self.config = damped_physics(self.basis)
        self.rng = np.random.default_rng(21)

    def test_zero_velocity(self):
        self.assertFalse(np.any(damping_substep(self.basis, self.config, np.zeros(self.basis.size), 1.0)))

    def test_zero_step(self):
        b = self.rng.standard_normal(self.basis.size)
        np.testing.assert_array_equal(damping_substep(self.basis, self.config, b, 0.0), b)

    def test_norm_two_to_one(self):
        """k = 1, p = 2, tau = 1, ||b|| = 2 gives ||v|| = 1 along b"""
        b = self.rng.standard_normal(self.basis.size)
        b *= 2.0 / np.linalg.norm(b)
        v = damping_substep(self.basis, self.config, b, 1.0)
        self.assertAlmostEqual(l2_norm(self.basis, v), 1.0, places=14)
        np.testing.assert_allclose(v, 0.5 * b, atol=1e-15)

    def test_solves_implicit_equation(self):
        b = 3.0 * self.rng.standard_normal(self.basis.size)
        tau = 0.7
        v = damping_substep(self.basis, self.config, b, tau)
        np.testing.assert_allclose(v + tau * l2_norm(self.basis, v) ** 2 * v, b, atol=1e-12)

    def test_contractive(self):
        for _ in range(200):
            b = self.rng.standard_normal(self.basis.size) * self.rng.uniform(0, 20)
            tau = self.rng.uniform(0, 10)
            self.assertLessEqual(l2_norm(self.basis, damping_substep(self.basis, self.config, b, tau)),
                                 l2_norm(self.basis, b))
            self.assertLessEqual(l2_norm(self.basis, exact_damping_substep(self.basis, self.config, b, tau)),
                                 l2_norm(self.basis, b))


class TestExactDamping(unittest.TestCase):

    def setUp(self):
        self.basis = line_basis(16)
        self.config = damped_physics(self.basis)
        self.rng = np.random.default_rng(22)

    def test_strong_damping_keeps_direction(self):
        """k = 1, p = 2, b = 50 e_1, tau = 0.05 gives 50 / sqrt(251) along e_1"""
        b = np.zeros(self.basis.size)
        b[0] = 50.0
        v = exact_damping_substep(self.basis, self.config, b, 0.05)
        self.assertAlmostEqual(v[0], 50.0 / math.sqrt(251.0), places=12)
        self.assertFalse(np.any(v[1:]))

    def test_never_reverses_velocity(self):
        for _ in range(200):
            b = self.rng.standard_normal(self.basis.size) * self.rng.uniform(0, 1e3)
            tau = self.rng.uniform(0, 10)
            v = exact_damping_substep(self.basis, self.config, b, tau)
            self.assertGreaterEqual(float(v @ b), 0.0)
            np.testing.assert_allclose(v * l2_norm(self.basis, b), b * l2_norm(self.basis, v), rtol=1e-12, atol=1e-9)

    def test_flow_property(self):
        b = 4.0 * self.rng.standard_normal(self.basis.size)
        once = exact_damping_substep(self.basis, self.config, b, 0.3)
        twice = exact_damping_substep(self.basis, self.config,
                                      exact_damping_substep(self.basis, self.config, b, 0.1), 0.2)
        np.testing.assert_allclose(once, twice, rtol=1e-12, atol=1e-14)

    def test_large_step_moves_with_velocity(self):
        b = np.zeros(self.basis.size)
        b[0] = 50.0
        new = step(self.basis, self.config, State(np.zeros(self.basis.size), b), StepConfig(dt=0.1))
        self.assertGreater(new.a[0], 0.0)
        self.assertGreater(new.b[0], 0.0)
        self.assertLess(new.b[0], 50.0)


class TestStep(unittest.TestCase):

    def test_zero_state_stays_zero(self):
        basis = line_basis(16)
        config = cubic_physics(basis, forcing=0.0)
        new = step(basis, config, State.zero(basis), StepConfig(dt=0.01))
        self.assertFalse(np.any(new.a) or np.any(new.b))
        self.assertAlmostEqual(new.time, 0.01, places=15)

    def test_free_wave_period(self):
        """A single mode returns to its start after one period 2 pi / sqrt(lambda_1)"""
        basis = line_basis(16)
        config = free_physics(basis)
        a = np.zeros(basis.size)
        b = np.zeros(basis.size)
        a[0], b[0] = 0.7, -0.2
        state0 = State(a, b)
        dt = 2 * math.pi / 1000
        trajectory = integrate(basis, config, state0, 2 * math.pi, StepConfig(dt=dt), snapshot_every=None)
        self.assertEqual(trajectory.steps, 1000)
        np.testing.assert_allclose(trajectory.final_state.a, a, atol=1e-10)
        np.testing.assert_allclose(trajectory.final_state.b, b, atol=1e-10)

    def test_energy_conservation_on_linear_core(self):
        basis = line_basis(64)
        config = free_physics(basis)
        rng = np.random.default_rng(2)
        state0 = State(random_coefficients(basis, rng), random_coefficients(basis, rng))
        trajectory = integrate(basis, config, state0, 100.0, StepConfig(dt=0.01), snapshot_every=None)
        self.assertEqual(trajectory.steps, 10_000)
        start = energy(basis, config, state0).total
        drift = abs(energy(basis, config, trajectory.final_state).total - start) / start
        self.assertLess(drift, 1e-9)

    def test_large_dt_kernel_warning(self):
        basis = line_basis(8)
        config = cubic_physics(basis, kernel_weight=2.0 / math.pi)
        with self.assertLogs("app.physics.integrator", level="WARNING"):
            step(basis, config, smooth_state(basis), StepConfig(dt=1.5))

    def test_step_config_validation(self):
        with self.assertRaises(ConfigurationError):
            StepConfig(dt=0.0)
        with self.assertRaises(ConfigurationError):
            StepConfig(dt=0.1, radial_tol=0.0)
        with self.assertRaises(ConfigurationError):
            StepConfig(dt=0.1, damping_rule="explicit")
        with self.assertRaises(ConfigurationError):
            StepConfig(dt=0.1, scheme="lie")


class TestIntegrate(unittest.TestCase):

    def setUp(self):
        self.basis = line_basis(16)

    def test_zero_horizon(self):
        state0 = smooth_state(self.basis)
        trajectory = integrate(self.basis, damped_physics(self.basis), state0, 0.0, StepConfig(dt=0.01))
        self.assertEqual(trajectory.steps, 0)
        self.assertEqual(len(trajectory.snapshots), 1)
        self.assertIs(trajectory.final_state, state0)
        self.assertEqual(trajectory.times, [0.0])

    def test_damped_energy_decreases(self):
        config = damped_physics(self.basis)
        state0 = smooth_state(self.basis)

        def observe(previous, state):
            return {"E": energy(self.basis, config, state).total}

        trajectory = integrate(self.basis, config, state0, 5.0, StepConfig(dt=0.01), [observe])
        energies = trajectory.column("E")
        self.assertLess(energies[-1], energies[0])
        self.assertTrue(np.all(np.diff(energies) <= 1e-14))

    def test_strides(self):
        trajectory = integrate(self.basis, damped_physics(self.basis), smooth_state(self.basis), 1.0,
                               StepConfig(dt=0.01), [lambda prev, s: {}], observe_every=10, snapshot_every=25)
        self.assertEqual(len(trajectory.observations), 11)
        self.assertEqual(len(trajectory.snapshots), 5)
        self.assertTrue(np.all(np.diff(trajectory.times) > 0))

    def test_final_step_always_observed(self):
        trajectory = integrate(self.basis, damped_physics(self.basis), smooth_state(self.basis), 1.05,
                               StepConfig(dt=0.01), [lambda prev, s: {}], observe_every=10, snapshot_every=None)
        self.assertEqual(trajectory.steps, 105)
        self.assertEqual(len(trajectory.observations), 12)
        self.assertAlmostEqual(trajectory.times[-1], 1.05, places=12)
        self.assertAlmostEqual(trajectory.times[-2], 1.0, places=12)

    def test_deterministic(self):
        config = cubic_physics(self.basis)
        runs = [integrate(self.basis, config, smooth_state(self.basis), 2.0, StepConfig(dt=0.01)) for _ in range(2)]
        for first, second in zip(runs[0].snapshots, runs[1].snapshots):
            np.testing.assert_array_equal(first.a, second.a)
            np.testing.assert_array_equal(first.b, second.b)

    def test_failure_returns_partial_trajectory(self):
        blow_up = custom_pointwise(lambda s: np.where(np.abs(s) > 5.0, np.nan, s), lambda s: 0.5 * s * s)
        config = simple_physics(self.basis, nonlinearity=blow_up)
        state0 = smooth_state(self.basis).scaled(10.0)
        trajectory = integrate(self.basis, config, state0, 1.0, StepConfig(dt=0.01))
        self.assertTrue(trajectory.failed)
        self.assertIn("step 1", trajectory.failure)
        self.assertEqual(trajectory.steps, 0)
        self.assertIs(trajectory.final_state, state0)

    def test_second_order_convergence(self):
        config = cubic_physics(self.basis)
        study = global_error_refinement(self.basis, config, smooth_state(self.basis), 1.0, StepConfig(dt=0.01),
                                        [0.04, 0.02, 0.01], reference_dt=0.00125)
        self.assertGreaterEqual(study.order, 1.7)
        self.assertLessEqual(study.order, 2.3)

    def test_implicit_euler_rule_is_first_order(self):
        config = damped_physics(self.basis)
        study = global_error_refinement(self.basis, config, smooth_state(self.basis), 1.0,
                                        StepConfig(dt=0.01, damping_rule="implicit_euler"),
                                        [0.04, 0.02, 0.01], reference_dt=0.00125)
        self.assertLess(study.order, 1.5)


class TestResolvent(unittest.TestCase):

    def setUp(self):
        self.basis = line_basis(32)
        self.rng = np.random.default_rng(17)

    def random_problem(self):
        return ResolventProblem(random_coefficients(self.basis, self.rng), random_coefficients(self.basis, self.rng))

    def test_zero_data(self):
        config = damped_physics(self.basis)
        zero = np.zeros(self.basis.size)
        solution = resolvent_solve(self.basis, config, ResolventProblem(zero, zero))
        self.assertFalse(np.any(solution.u) or np.any(solution.v))
        self.assertEqual(solution.sigma, 0.0)

    def test_linear_diagonal_oracle(self):
        config = simple_physics(self.basis, k=0.0)
        problem = self.random_problem()
        lam = self.basis.eigenvalues
        solution = resolvent_solve(self.basis, config, problem)
        expected_v = (problem.f1 - lam * problem.f0) / (lam + 1.0)
        np.testing.assert_allclose(solution.v, expected_v, atol=1e-14)
        np.testing.assert_allclose(solution.u, expected_v + problem.f0, atol=1e-14)

    def test_random_problems(self):
        for p in (0.5, 2.0, 5.0):
            config = damped_physics(self.basis, k=1.0, p=p)
            for _ in range(20):
                problem = self.random_problem()
                narrow = resolvent_solve(self.basis, config, problem)
                wide = resolvent_solve(self.basis, config, problem, bracket_scale=4.0)
                self.assertLess(narrow.residual, 1e-10)
                self.assertAlmostEqual(narrow.residual,
                                       resolvent_residual(self.basis, config, problem, narrow.u, narrow.v))
                self.assertLessEqual(abs(narrow.sigma - wide.sigma), 1e-12 * max(1.0, narrow.sigma))
                self.assertAlmostEqual(narrow.sigma, l2_norm(self.basis, narrow.v), places=12)

    def test_accretivity(self):
        config = cubic_physics(self.basis)
        for _ in range(200):
            first = State(random_coefficients(self.basis, self.rng), random_coefficients(self.basis, self.rng))
            second = State(random_coefficients(self.basis, self.rng), random_coefficients(self.basis, self.rng))
            scale = (first.phase_norm(self.basis) + second.phase_norm(self.basis)) ** 2 * \
                (1 + (l2_norm(self.basis, first.b) + l2_norm(self.basis, second.b)) ** 2)
            self.assertGreaterEqual(accretivity_form(self.basis, config, first, second), -1e-12 * scale)

    def test_accretivity_of_identical_points(self):
        state = State(sine_coefficients(self.basis), sine_coefficients(self.basis))
        self.assertEqual(accretivity_form(self.basis, damped_physics(self.basis), state, state), 0.0)


if __name__ == "__main__":
    unittest.main()
