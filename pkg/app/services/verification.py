"""
Property suite behind the ``verify`` command.

Each check returns a CheckResult; a check that raises is reported as failed
with the error message instead of aborting the suite.
"""

import logging
import math
import time
from typing import Callable, List

import numpy as np

from app.core.errors import NLWaveError
from app.physics.basis import build_basis, grad_norm, l2_norm, project, quadrature, to_physical
from app.physics.energy import estimate_monotonicity_constant, energy, monotonicity_check
from app.physics.integrator import (
    ResolventProblem,
    StepConfig,
    accretivity_form,
    damping_substep,
    integrate,
    radial_damping_solve,
    resolvent_solve,
)
from app.physics.model import (
    Kernel,
    State,
    lipschitz_audit,
    random_coefficients,
    separable_kernel,
    simple_physics,
    validate_assumptions,
)
from app.services.experiments import (
    ExperimentContext,
    energy_identity_refinement,
    initial_from_spec,
    simulate_run,
    weak_form_residual,
)
from schemas import CheckResult, VerifyReport

logger = logging.getLogger(__name__)

MONOTONICITY_EXPONENTS = (1.5, 2.5, 3.0, 4.0)
MONOTONICITY_DIMENSIONS = (2, 16, 256)
REFINEMENT_STEPS = (1e-2, 5e-3, 2.5e-3)
ORDER_WINDOW = (1.7, 2.3)
RESOLVENT_EXPONENTS = (0.5, 2.0, 5.0)
CONSERVATION_MODES = 64
CONSERVATION_STEPS = 10_000


def check_monotonicity(context: ExperimentContext) -> List[CheckResult]:
    samples = context.config.verify.monotonicity_pairs
    results = []
    for q in MONOTONICITY_EXPONENTS:
        for dim in MONOTONICITY_DIMENSIONS:
            ratio, relative_lhs = estimate_monotonicity_constant(q, dim, samples, context.rng)
            results.append(CheckResult(
                name=f"monotonicity q={q:g} dim={dim}",
                passed=relative_lhs >= -1e-14 and ratio > 0,
                value=ratio,
                threshold=0.0,
                detail=f"min relative lhs {relative_lhs:.3e}",
            ))
    hand = monotonicity_check(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 4.0)
    results.append(CheckResult(
        name="monotonicity constant q=4 hand pair",
        passed=hand.passed and hand.empirical_ratio <= 0.5 + 1e-12,
        value=hand.empirical_ratio,
        threshold=0.5,
    ))
    return results


def check_parseval_poincare(context: ExperimentContext) -> List[CheckResult]:
    basis = context.basis
    worst_parseval = 0.0
    worst_poincare = math.inf
    for _ in range(context.config.verify.random_vectors):
        a = context.rng.standard_normal(basis.size)
        u = to_physical(basis, a)
        norm = l2_norm(basis, a)
        worst_parseval = max(worst_parseval, abs(math.sqrt(quadrature(basis, u * u)) - norm) / norm)
        worst_poincare = min(worst_poincare, grad_norm(basis, a) ** 2 / (basis.lambda_1 * norm ** 2))
    return [
        CheckResult(name="parseval", passed=worst_parseval <= 1e-12, value=worst_parseval, threshold=1e-12),
        CheckResult(name="poincare", passed=worst_poincare >= 1.0 - 1e-12, value=worst_poincare, threshold=1.0),
    ]


def check_kernel_bound(context: ExperimentContext) -> List[CheckResult]:
    basis = context.basis
    samples = context.config.verify.kernel_samples
    worst = 0.0
    kernels = [Kernel(context.rng.standard_normal((basis.size, basis.size))) for _ in range(10)]
    if not context.physics.kernel.is_zero:
        kernels.append(context.physics.kernel)
    for kernel in kernels:
        v = context.rng.standard_normal((samples, basis.size))
        ratios = np.linalg.norm(v @ kernel.modal_matrix.T, axis=1) / (kernel.hs_norm * np.linalg.norm(v, axis=1))
        worst = max(worst, float(np.max(ratios)))

    line = build_basis(1, basis.modes_per_axis, [math.pi])
    rank_one = separable_kernel(line, [(2.0 / math.pi, np.sin, np.sin)])
    sine = project(line, np.sin)
    reproduction = float(np.max(np.abs(rank_one.modal_matrix @ sine - sine)))
    return [
        CheckResult(name="kernel bound ||Psi v|| <= ||K|| ||v||", passed=worst <= 1.0 + 1e-12,
                    value=worst, threshold=1.0),
        CheckResult(name="rank-one kernel reproduces sin", passed=reproduction <= 1e-12,
                    value=reproduction, threshold=1e-12),
        CheckResult(name="rank-one kernel norm", passed=abs(rank_one.hs_norm - 1.0) <= 1e-12,
                    value=rank_one.hs_norm, threshold=1.0),
    ]


def check_radial_solve(context: ExperimentContext) -> List[CheckResult]:
    side = int(math.ceil(math.sqrt(context.config.verify.radial_grid)))
    worst = 0.0
    for c in np.logspace(-3, 3, side):
        for r in np.logspace(-3, 3, side):
            rho = radial_damping_solve(float(r), float(c), 1.0)
            oracle = 2.0 * r / (1.0 + math.sqrt(1.0 + 4.0 * c * r))
            worst = max(worst, abs(rho - oracle) / max(1.0, oracle))
    exact = radial_damping_solve(2.0, 1.0, 2.0)

    basis = context.basis
    physics = simple_physics(basis, k=max(context.physics.k, 1.0), p=context.physics.p)
    growth = 0.0
    for _ in range(context.config.verify.random_vectors):
        b = context.rng.standard_normal(basis.size) * context.rng.uniform(0.0, 10.0)
        tau = float(context.rng.uniform(0.0, 5.0))
        before = l2_norm(basis, b)
        if before > 0:
            growth = max(growth, l2_norm(basis, damping_substep(basis, physics, b, tau)) / before)
    return [
        CheckResult(name="radial solve p=1 closed form", passed=worst <= 1e-12, value=worst, threshold=1e-12),
        CheckResult(name="radial solve p=2 c=1 r=2", passed=abs(exact - 1.0) <= 1e-15, value=exact, threshold=1.0),
        CheckResult(name="damping substep contractive", passed=growth <= 1.0, value=growth, threshold=1.0),
    ]


def check_accretivity(context: ExperimentContext) -> List[CheckResult]:
    basis, physics = context.basis, context.physics
    worst = math.inf
    for _ in range(context.config.verify.random_vectors):
        first = State(random_coefficients(basis, context.rng), random_coefficients(basis, context.rng))
        second = State(random_coefficients(basis, context.rng), random_coefficients(basis, context.rng))
        gap = State(first.a - second.a, first.b - second.b).phase_norm(basis)
        velocity = l2_norm(basis, first.b) + l2_norm(basis, second.b)
        scale = (first.phase_norm(basis) + second.phase_norm(basis)) ** 2 * (1.0 + physics.k * velocity ** physics.p)
        value = accretivity_form(basis, physics, first, second)
        if gap > 0:
            worst = min(worst, value / scale)
    return [CheckResult(name="discrete accretivity", passed=worst >= -1e-12, value=worst, threshold=-1e-12)]


def check_resolvent(context: ExperimentContext) -> List[CheckResult]:
    basis = context.basis
    tol = context.config.resolvent.tol
    k = context.physics.k if context.physics.k > 0 else 1.0
    results = []
    for p in RESOLVENT_EXPONENTS:
        physics = simple_physics(basis, k=k, p=p)
        worst_residual = 0.0
        worst_gap = 0.0
        for _ in range(context.config.verify.resolvent_problems):
            problem = ResolventProblem(random_coefficients(basis, context.rng), random_coefficients(basis, context.rng))
            narrow = resolvent_solve(basis, physics, problem, tol)
            wide = resolvent_solve(basis, physics, problem, tol, bracket_scale=3.0)
            worst_residual = max(worst_residual, narrow.residual, wide.residual)
            worst_gap = max(worst_gap, abs(narrow.sigma - wide.sigma) / max(1.0, narrow.sigma))
        results.append(CheckResult(name=f"resolvent residual p={p:g}", passed=worst_residual < tol,
                                   value=worst_residual, threshold=tol))
        results.append(CheckResult(name=f"resolvent uniqueness p={p:g}", passed=worst_gap <= 1e-12,
                                   value=worst_gap, threshold=1e-12))
    return results


def check_energy_identity(context: ExperimentContext) -> List[CheckResult]:
    basis, physics = context.basis, context.physics
    T = context.config.verify.refinement_T
    state0 = initial_from_spec(context, context.config.run.initial)
    study = energy_identity_refinement(basis, physics, state0, T, context.step_config, REFINEMENT_STEPS)
    if max(study.errors) <= 1e-11:
        # residual is already at round-off (e.g. the linear conservative core)
        order_ok = True
    else:
        order_ok = ORDER_WINDOW[0] <= study.order <= ORDER_WINDOW[1]
    errors = ", ".join(f"{e:.3e}" for e in study.errors)

    fine = simulate_run(basis, physics, state0, T, context.step_config.with_dt(1e-3), epsilon=0.0)
    if fine.failed:
        raise NLWaveError(fine.failure)
    positions = list(range(1, min(5, basis.size) + 1))
    weak = weak_form_residual(basis, physics, fine, positions)
    return [
        CheckResult(name="energy identity order", passed=order_ok, value=study.order,
                    threshold=ORDER_WINDOW[0], detail=f"max residuals {errors}"),
        CheckResult(name="weak form residual dt=1e-3", passed=weak < 1e-3, value=weak, threshold=1e-3),
    ]


def check_conservation(context: ExperimentContext) -> List[CheckResult]:
    line = build_basis(1, CONSERVATION_MODES, [math.pi])
    physics = simple_physics(line, k=0.0)
    state0 = State(random_coefficients(line, context.rng), random_coefficients(line, context.rng))
    step_config = StepConfig(dt=1e-2)
    trajectory = integrate(line, physics, state0, CONSERVATION_STEPS * step_config.dt, step_config,
                           snapshot_every=None)
    if trajectory.failed:
        raise NLWaveError(trajectory.failure)
    start = energy(line, physics, state0).total
    drift = abs(energy(line, physics, trajectory.final_state).total - start) / start
    return [CheckResult(name="energy conservation k=0 K=0 f=0 h=0", passed=drift < 1e-9, value=drift, threshold=1e-9)]


def check_assumptions(context: ExperimentContext) -> List[CheckResult]:
    report = validate_assumptions(context.physics, context.basis)
    lipschitz = lipschitz_audit(context.physics, context.basis, samples=50, radius=10.0, rng=context.rng)
    return [
        CheckResult(name="standing assumptions", passed=not report.warnings, value=report.mu_estimate,
                    threshold=-report.lambda_1, detail="; ".join(report.warnings)),
        CheckResult(name="local Lipschitz ratio of f", passed=math.isfinite(lipschitz.max_ratio),
                    value=lipschitz.max_ratio, detail=f"radius {lipschitz.radius:g}"),
    ]


CHECKS: List[Callable[[ExperimentContext], List[CheckResult]]] = [
    check_monotonicity,
    check_parseval_poincare,
    check_kernel_bound,
    check_radial_solve,
    check_accretivity,
    check_resolvent,
    check_energy_identity,
    check_conservation,
    check_assumptions,
]


def run_verify(context: ExperimentContext) -> VerifyReport:
    """Run every check; the report passes iff all checks pass."""
    results: List[CheckResult] = []
    for check in CHECKS:
        started = time.perf_counter()
        try:
            results.extend(check(context))
        except NLWaveError as e:
            logger.error("%s raised: %s", check.__name__, e.message)
            results.append(CheckResult(name=check.__name__, passed=False, detail=e.message))
        logger.info("%s finished in %.2fs", check.__name__, time.perf_counter() - started)
    return VerifyReport(passed=all(r.passed for r in results), checks=results)
