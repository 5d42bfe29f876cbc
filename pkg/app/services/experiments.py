"""
Experiment service: long runs, absorbing-set sweeps, pair contraction runs,
weak-form audits and refinement studies.

Trajectories inside a sweep or pair experiment are independent; they run on a
thread pool and results are merged by input index, so the output does not
depend on the number of workers.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from app.core.errors import ConfigurationError, InputError, NumericalError
from app.physics.basis import SpectralBasis, build_basis, grad_norm, l2_norm
from app.physics.energy import (
    default_mu0,
    energy,
    energy_identity_residual,
    epsilon_ceiling,
    lyapunov,
    lyapunov_drift,
    pair_energy,
    pair_energy_rate,
    tail_energy_fraction,
)
from app.physics.integrator import SplitStepper, StepConfig, Trajectory, integrate, step_count
from app.physics.model import (
    PhysicsConfig,
    State,
    antidamping,
    build_physics,
    damping,
    nonlinearity_apply,
    random_coefficients,
    realize_field,
)
from app.utils.expressions import evaluate_constant
from schemas import (
    PAIR_COLUMN,
    AbsorbingReport,
    InitialSpec,
    ObservationRecord,
    PairContractionReport,
    RunConfig,
    SimulateReport,
    TrajectorySettling,
)

logger = logging.getLogger(__name__)

# A trajectory whose tail supremum falls below this (relative to its start) counts as settled at rest
DECAY_FLOOR = 1e-10
STABILITY_TOLERANCE = 0.05


# -------------------- Initial Data --------------------

def initial_state(basis: SpectralBasis, rng: np.random.Generator, energy_level: float = 1.0) -> State:
    """
    Random phase point with j^{-1} decay in both components, scaled so that
    1/2 (||grad u||^2 + ||u_t||^2) = energy_level.
    """
    if energy_level < 0:
        raise ConfigurationError(f"energy must be non-negative, got {energy_level}")
    a = random_coefficients(basis, rng)
    b = random_coefficients(basis, rng)
    quadratic = 0.5 * (grad_norm(basis, a) ** 2 + l2_norm(basis, b) ** 2)
    factor = np.sqrt(energy_level / quadratic) if quadratic > 0 else 0.0
    return State(factor * a, factor * b)


def resolve_epsilon(basis: SpectralBasis, config: PhysicsConfig, epsilon: Optional[float]) -> float:
    """Explicit epsilon, or the admissible ceiling for the default mu0."""
    if epsilon is not None:
        return float(epsilon)
    try:
        return epsilon_ceiling(basis, default_mu0(basis, config.nonlinearity.mu))
    except ConfigurationError as e:
        logger.warning("no admissible epsilon (%s); using V_eps = E", e.message)
        return 0.0


# -------------------- Observers --------------------

def standard_observer(basis: SpectralBasis, config: PhysicsConfig, epsilon: float,
                      tail_cutoff: int) -> Callable[[Optional[State], State], Dict[str, float]]:
    """Observer producing the records.csv columns (apart from t) and the V_eps drift."""

    def observe(previous: Optional[State], state: State) -> Dict[str, float]:
        parts = energy(basis, config, state)
        if previous is None:
            resid = 0.0
        else:
            resid = energy_identity_residual(basis, config, previous, state, state.time - previous.time)
        return {
            "E_total": parts.total,
            "E_kin": parts.kinetic,
            "E_el": parts.elastic,
            "E_pot": parts.potential,
            "E_force": parts.forcing,
            "l2_u": l2_norm(basis, state.a),
            "l2_v": l2_norm(basis, state.b),
            "h1_u": grad_norm(basis, state.a),
            "V_eps": lyapunov(basis, config, state, epsilon),
            "V_drift": lyapunov_drift(basis, config, state, epsilon),
            "resid": resid,
            "tail_frac": tail_energy_fraction(basis, state, tail_cutoff),
        }

    return observe


def phase_norm_observer(basis: SpectralBasis):
    def observe(previous, state):
        return {"norm": state.phase_norm(basis)}
    return observe


def companion_observer(basis: SpectralBasis, config: PhysicsConfig, step_config: StepConfig,
                       companion: State) -> Callable[[Optional[State], State], Dict[str, float]]:
    """
    Advances a second trajectory in lockstep with the observed one and reports
    their pair energy. After a failure of the companion the column is left out.
    """
    stepper = SplitStepper(basis, config, step_config)
    tracked = {"state": companion, "failed": False}

    def observe(previous: Optional[State], state: State) -> Dict[str, float]:
        if tracked["failed"]:
            return {}
        other = tracked["state"]
        try:
            for _ in range(int(round((state.time - other.time) / step_config.dt))):
                other = stepper.advance(other)
        except NumericalError as e:
            logger.warning("companion trajectory failed at t = %.6g: %s", other.time, e.message)
            tracked["failed"] = True
            return {}
        other = State(other.a, other.b, state.time)
        tracked["state"] = other
        return {PAIR_COLUMN: pair_energy(basis, state, other)}

    return observe


def simulate_run(basis: SpectralBasis, config: PhysicsConfig, state0: State, T: float,
                 step_config: StepConfig, epsilon: Optional[float] = None,
                 tail_cutoff: Optional[int] = None, observe_every: int = 1,
                 snapshot_every: Optional[int] = 1, companion: Optional[State] = None) -> Trajectory:
    """One trajectory with the standard observation record (plus pair_E when a companion is given)."""
    cutoff = basis.size // 2 if tail_cutoff is None else tail_cutoff
    observers = [standard_observer(basis, config, resolve_epsilon(basis, config, epsilon), cutoff)]
    if companion is not None:
        companion.check(basis)
        observers.append(companion_observer(basis, config, step_config,
                                            State(companion.a, companion.b, state0.time)))
    return integrate(basis, config, state0, T, step_config, observers,
                     observe_every=observe_every, snapshot_every=snapshot_every)


def observation_records(trajectory: Trajectory) -> List[ObservationRecord]:
    return [ObservationRecord.model_validate(obs) for obs in trajectory.observations]


def summarize_run(basis: SpectralBasis, config: PhysicsConfig, trajectory: Trajectory) -> SimulateReport:
    """Final energy, the fitted growth rate C of E(t) <= E(0) + C t and the largest V_eps drift."""
    observations = trajectory.observations
    growth = None
    if len(observations) >= 2:
        growth = growth_rate_fit(trajectory.column("t"), trajectory.column("E_total"))
    drifts = [obs["V_drift"] for obs in observations if "V_drift" in obs]
    return SimulateReport(
        steps=trajectory.steps,
        final_energy=energy(basis, config, trajectory.final_state).total,
        growth_rate=growth,
        max_lyapunov_drift=max(drifts) if drifts else None,
        final_pair_energy=observations[-1].get(PAIR_COLUMN) if observations else None,
        failure=trajectory.failure,
    )


def _run_parallel(jobs: Sequence[Callable[[], object]], workers: int) -> List[object]:
    if workers < 1:
        raise ConfigurationError(f"workers must be at least 1, got {workers}")
    if workers == 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(lambda job: job(), jobs))


# -------------------- Absorbing Set Sweep --------------------

def _window_sup(times: np.ndarray, values: np.ndarray, start: float, end: float) -> float:
    mask = (times >= start - 1e-12) & (times <= end + 1e-12)
    if not np.any(mask):
        raise InputError(f"no observations in [{start}, {end}]")
    return float(np.max(values[mask]))


def settle_trajectory(scale: float, times: np.ndarray, norms: np.ndarray,
                      burn_in: float, T: float) -> TrajectorySettling:
    """Tail statistics of one norm history and its stabilization verdict."""
    initial = float(norms[0])
    last_half = _window_sup(times, norms, burn_in, T)
    last_quarter = _window_sup(times, norms, 0.5 * (burn_in + T), T)
    first_quarter = _window_sup(times, norms, burn_in, 0.5 * (burn_in + T))
    growing = last_quarter > (1.0 + STABILITY_TOLERANCE) * first_quarter
    at_rest = last_half <= DECAY_FLOOR * max(1.0, initial)
    stabilized = not growing and (abs(last_quarter - last_half) <= STABILITY_TOLERANCE * last_half or at_rest)

    # earliest time after which the norm never exceeds the tail level again
    ceiling = (1.0 + STABILITY_TOLERANCE) * last_half
    above = np.nonzero(norms > ceiling)[0]
    if above.size == 0:
        settling_time = float(times[0])
    elif above[-1] + 1 < times.size:
        settling_time = float(times[above[-1] + 1])
    else:
        settling_time = None

    return TrajectorySettling(
        scale=scale,
        initial_norm=initial,
        tail_sup=last_half,
        last_half_sup=last_half,
        last_quarter_sup=last_quarter,
        stabilized=stabilized,
        growing=growing,
        settling_time=settling_time if stabilized else None,
    )


def dissipativity_sweep(basis: SpectralBasis, config: PhysicsConfig, initial_scales: Sequence[float],
                        T: float, step_config: StepConfig, burn_in: Optional[float] = None,
                        rng: Optional[np.random.Generator] = None, base_state: Optional[State] = None,
                        workers: int = 1) -> AbsorbingReport:
    """
    Empirical absorbing radius: each scale s starts from the fixed random state
    rescaled to quadratic energy s; the sup of ||(u, u_t)|| over [burn_in, T] is
    recorded per trajectory. A radius is reported only when every tail settled.
    """
    scales = [float(s) for s in initial_scales]
    if len(scales) < 2 or any(s <= 0 for s in scales):
        raise ConfigurationError("a sweep needs at least two positive scales")
    burn_in = 0.5 * T if burn_in is None else float(burn_in)
    if not 0 <= burn_in < T:
        raise ConfigurationError(f"burn-in must lie in [0, T), got {burn_in} with T = {T}")
    if step_count(T, step_config.dt) < 4:
        raise ConfigurationError("T must cover at least four steps")

    if base_state is None:
        if rng is None:
            raise ConfigurationError("a sweep needs either a seeded rng or a base state")
        base_state = initial_state(basis, rng, 1.0)
    observer = phase_norm_observer(basis)

    def make_job(scale):
        def job():
            trajectory = integrate(basis, config, base_state.scaled(np.sqrt(scale)), T, step_config,
                                   [observer], snapshot_every=None)
            return scale, trajectory
        return job

    results = _run_parallel([make_job(s) for s in scales], workers)

    settlings = []
    for scale, trajectory in results:
        if trajectory.failed:
            settlings.append(TrajectorySettling(
                scale=scale,
                initial_norm=float(trajectory.observations[0]["norm"]),
                error=trajectory.failure,
            ))
            continue
        times = trajectory.column("t")
        norms = trajectory.column("norm")
        settlings.append(settle_trajectory(scale, times, norms, burn_in, T))

    conclusive = all(s.error is None and s.stabilized for s in settlings)
    if conclusive:
        tails = [s.tail_sup for s in settlings]
        radius = max(tails)
        smallest = min(tails)
        spread = radius / smallest if smallest > 0 else (1.0 if radius == 0 else float("inf"))
        message = f"all {len(settlings)} trajectories settled"
    else:
        radius = None
        spread = None
        failed = [s.scale for s in settlings if s.error is not None]
        growing = [s.scale for s in settlings if s.growing]
        unsettled = [s.scale for s in settlings if s.error is None and not s.stabilized and not s.growing]
        message = f"inconclusive: failed={failed} growing={growing} unsettled={unsettled}"
        logger.warning("dissipativity sweep %s", message)

    return AbsorbingReport(
        conclusive=conclusive,
        radius=radius,
        spread=spread,
        burn_in=burn_in,
        T=float(T),
        trajectories=settlings,
        message=message,
    )


# -------------------- Pair Contraction --------------------

def _states_at(basis: SpectralBasis, config: PhysicsConfig, state0: State, T_list: Sequence[float],
               step_config: StepConfig) -> Tuple[List[State], Optional[str]]:
    """States at each time in T_list (partial list and the failure on error)."""
    states = []
    current = state0
    done = 0
    for T in T_list:
        target = step_count(T, step_config.dt)
        trajectory = integrate(basis, config, current, (target - done) * step_config.dt, step_config,
                               snapshot_every=None)
        if trajectory.failed:
            return states, trajectory.failure
        current = trajectory.final_state
        done = target
        states.append(current)
    return states, None


def pair_contraction_experiment(basis: SpectralBasis, config: PhysicsConfig, initial_states: Sequence[State],
                                T_list: Sequence[float], step_config: StepConfig,
                                tail_cutoff: Optional[int] = None, workers: int = 1) -> PairContractionReport:
    """
    E^{n,m}(T) = 1/2 ||(u_n - u_m, u_t,n - u_t,m)||^2 for all pairs at each T,
    with the minimum over distinct pairs as summary and dE/dt of that closest
    pair as summary_rate.
    """
    if len(initial_states) < 2:
        raise ConfigurationError("a pair experiment needs at least two initial states")
    T_list = [float(T) for T in T_list]
    if not T_list or T_list[0] < 0 or any(b <= a for a, b in zip(T_list, T_list[1:])):
        raise ConfigurationError("T_list must be non-empty, non-negative and strictly increasing")
    for state in initial_states:
        state.check(basis)
    cutoff = basis.size // 2 if tail_cutoff is None else tail_cutoff

    def make_job(state):
        return lambda: _states_at(basis, config, state, T_list, step_config)

    results = _run_parallel([make_job(s) for s in initial_states], workers)
    errors = {index: failure for index, (_, failure) in enumerate(results) if failure is not None}
    for index, failure in errors.items():
        logger.error("pair trajectory %d failed: %s", index, failure)

    count = len(initial_states)
    matrices = []
    summary = []
    summary_rate = []
    for t_index in range(len(T_list)):
        matrix = [[None] * count for _ in range(count)]
        for n in range(count):
            if len(results[n][0]) > t_index:
                matrix[n][n] = 0.0
        for n in range(count):
            for m in range(n + 1, count):
                states_n, states_m = results[n][0], results[m][0]
                if len(states_n) > t_index and len(states_m) > t_index:
                    value = pair_energy(basis, states_n[t_index], states_m[t_index])
                    matrix[n][m] = value
                    matrix[m][n] = value
        distinct = [(matrix[n][m], n, m) for n in range(count) for m in range(n + 1, count)
                    if matrix[n][m] is not None]
        if distinct:
            value, n, m = min(distinct)
            summary.append(value)
            # rate of the closest pair
            summary_rate.append(pair_energy_rate(basis, config, results[n][0][t_index], results[m][0][t_index]))
        else:
            summary.append(None)
            summary_rate.append(None)
        matrices.append(matrix)

    final_fractions = []
    for states, _ in results:
        final_fractions.append(tail_energy_fraction(basis, states[-1], cutoff) if len(states) == len(T_list) else None)

    return PairContractionReport(
        T_list=T_list,
        matrices=matrices,
        summary=summary,
        summary_rate=summary_rate,
        tail_fraction_initial=[tail_energy_fraction(basis, s, cutoff) for s in initial_states],
        tail_fraction_final=final_fractions,
        errors=errors,
    )


# -------------------- Weak Form Audit --------------------

def weak_form_residual(basis: SpectralBasis, config: PhysicsConfig, trajectory: Trajectory,
                       test_mode_indices: Sequence[int]) -> float:
    """
    Audit of the weak identity against the basis modes psi_j (1-based positions):

        (u_t(t), psi_j) - (u_t(0), psi_j)
            = int_0^t [ (Psi(u_t) + h - k||u_t||^p u_t - f(u), psi_j) - (grad u, grad psi_j) ] ds

    with trapezoidal time integrals over the stored snapshots. Returns the
    largest mismatch over modes and snapshot times, divided by the largest
    magnitude among the individual terms.
    """
    snapshots = trajectory.snapshots
    if len(snapshots) < 3:
        raise InputError(f"weak-form audit needs at least 3 snapshots, got {len(snapshots)}")
    positions = [int(j) - 1 for j in test_mode_indices]
    if not positions or any(not 0 <= j < basis.size for j in positions):
        raise InputError(f"test mode positions must lie in 1..{basis.size}")

    times = np.array([s.time for s in snapshots])
    lam = basis.eigenvalues[positions]
    velocity = np.array([s.b[positions] for s in snapshots])
    terms = np.array([
        [
            antidamping(config, basis, s.b)[positions],
            config.h[positions],
            -damping(config, basis, s.b)[positions],
            -nonlinearity_apply(config, basis, s.a)[positions],
            -lam * s.a[positions],
        ]
        for s in snapshots
    ])

    integrals = cumulative_trapezoid(terms.sum(axis=1), times, axis=0, initial=0.0)
    mismatch = np.abs(velocity - velocity[0] - integrals)
    term_integrals = cumulative_trapezoid(np.abs(terms), times, axis=0, initial=0.0)
    scale = max(float(np.max(np.abs(velocity))), float(np.max(term_integrals)))
    if scale == 0.0:
        return 0.0
    return float(np.max(mismatch) / scale)


# -------------------- Refinement Studies --------------------

def growth_rate_fit(times: Sequence[float], energies: Sequence[float]) -> float:
    """Smallest C >= 0 with E(t) <= E(0) + C t along the upper envelope of E."""
    times = np.asarray(times, dtype=float)
    energies = np.asarray(energies, dtype=float)
    if times.shape != energies.shape or times.size < 2:
        raise InputError("growth fit needs at least two matching samples")
    envelope = np.maximum.accumulate(energies)
    elapsed = times - times[0]
    positive = elapsed > 0
    rates = (envelope[positive] - energies[0]) / elapsed[positive]
    return float(max(0.0, np.max(rates)))


def convergence_order(step_sizes: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(dt)."""
    step_sizes = np.asarray(step_sizes, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if step_sizes.size < 2 or step_sizes.shape != errors.shape:
        raise InputError("convergence order needs at least two (dt, error) pairs")
    if np.any(step_sizes <= 0) or np.any(errors <= 0):
        raise InputError("step sizes and errors must be positive")
    slope, _ = np.polyfit(np.log(step_sizes), np.log(errors), 1)
    return float(slope)


@dataclass(frozen=True)
class RefinementStudy:
    step_sizes: List[float]
    errors: List[float]
    order: float


def energy_identity_refinement(basis: SpectralBasis, config: PhysicsConfig, state0: State, T: float,
                               step_config: StepConfig, step_sizes: Sequence[float]) -> RefinementStudy:
    """Largest per-step energy-identity residual over [0, T] for each dt."""
    errors = []
    for dt in step_sizes:
        trajectory = simulate_run(basis, config, state0, T, step_config.with_dt(dt), epsilon=0.0,
                                  snapshot_every=None)
        if trajectory.failed:
            raise NumericalError(f"refinement run with dt = {dt} failed: {trajectory.failure}")
        errors.append(float(np.max(trajectory.column("resid")[1:])))
    return RefinementStudy(list(step_sizes), errors, convergence_order(step_sizes, errors))


def global_error_refinement(basis: SpectralBasis, config: PhysicsConfig, state0: State, T: float,
                            step_config: StepConfig, step_sizes: Sequence[float],
                            reference_dt: float) -> RefinementStudy:
    """Phase-norm error at T against a small-step reference solution."""

    def final_state(dt):
        trajectory = integrate(basis, config, state0, T, step_config.with_dt(dt), snapshot_every=None)
        if trajectory.failed:
            raise NumericalError(f"refinement run with dt = {dt} failed: {trajectory.failure}")
        return trajectory.final_state

    reference = final_state(reference_dt)
    errors = []
    for dt in step_sizes:
        state = final_state(dt)
        errors.append(State(state.a - reference.a, state.b - reference.b).phase_norm(basis))
    return RefinementStudy(list(step_sizes), errors, convergence_order(step_sizes, errors))


# -------------------- Config Wiring --------------------

@dataclass(frozen=True)
class ExperimentContext:
    """Everything a command needs, built once from a validated config and seed."""

    config: RunConfig
    seed: int
    basis: SpectralBasis
    physics: PhysicsConfig
    step_config: StepConfig
    rng: np.random.Generator


def build_context(config: RunConfig, seed: int = 0) -> ExperimentContext:
    """Basis, physics and step settings; random forcing draws come first from the seeded stream."""
    rng = np.random.default_rng(seed)
    basis_spec = config.basis
    lengths = [evaluate_constant(v) for v in basis_spec.lengths]
    if basis_spec.dim == 2 and len(lengths) == 1:
        lengths = lengths * 2
    basis = build_basis(basis_spec.dim, basis_spec.modes, lengths, basis_spec.dealias)
    physics = build_physics(config.physics, basis, rng)
    step = config.step
    step_config = StepConfig(
        dt=step.dt,
        scheme=step.scheme,
        radial_tol=step.radial_tol,
        radial_max_iter=step.radial_max_iter,
        damping_rule=step.damping_rule,
        kernel_rule=step.kernel_rule,
    )
    return ExperimentContext(config, seed, basis, physics, step_config, rng)


def initial_from_spec(context: ExperimentContext, spec: InitialSpec) -> State:
    if spec.kind == "random":
        return initial_state(context.basis, context.rng, spec.energy)
    return State(
        realize_field(spec.u, context.basis, context.rng),
        realize_field(spec.v, context.basis, context.rng),
    )
