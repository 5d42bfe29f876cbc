"""
Time evolution by Strang splitting and the stationary resolvent solver.

One step of size dt composes, in this order,

    source kick (dt/2) -> damping (dt/2) -> wave rotation (dt) -> damping (dt/2) -> source kick (dt/2)

* wave rotation: exact flow of a' = b, b' = -lambda a, per mode;
* damping: b' = -k ||b||^p b, integrated exactly along the direction of b
  (or by implicit Euler through the scalar radial equation
  rho (1 + c rho^p) = ||r||); the velocity never changes direction;
* source kick: b' = -f(u) + h + Psi(b) with u frozen (u does not move in this
  sub-flow). Psi is linear, so the kick is integrated exactly with a matrix
  exponential unless the frozen rule is requested.

The default rules (exact damping flow, exponential kick) make every sub-flow
exact, so the composition is second order.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from app.core.errors import ConfigurationError, NumericalError, ShapeError
from app.physics.basis import SpectralBasis, grad_norm, inner, l2_norm
from app.physics.model import PhysicsConfig, State, damping, nonlinearity_apply

logger = logging.getLogger(__name__)

Observer = Callable[[Optional[State], State], Dict[str, float]]


@dataclass(frozen=True)
class StepConfig:
    dt: float
    scheme: str = "strang"
    radial_tol: float = 1e-13
    radial_max_iter: int = 200
    damping_rule: str = "exact"
    kernel_rule: str = "exponential"

    def __post_init__(self):
        if not math.isfinite(self.dt) or self.dt <= 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.radial_tol <= 0:
            raise ConfigurationError(f"radial_tol must be positive, got {self.radial_tol}")
        if self.radial_max_iter < 1:
            raise ConfigurationError("radial_max_iter must be at least 1")
        if self.scheme != "strang":
            raise ConfigurationError(f"unknown scheme '{self.scheme}'")
        if self.damping_rule not in ("exact", "implicit_euler"):
            raise ConfigurationError(f"unknown damping rule '{self.damping_rule}'")
        if self.kernel_rule not in ("exponential", "frozen"):
            raise ConfigurationError(f"unknown kernel rule '{self.kernel_rule}'")

    def with_dt(self, dt: float) -> "StepConfig":
        return StepConfig(dt, self.scheme, self.radial_tol, self.radial_max_iter,
                          self.damping_rule, self.kernel_rule)


# -------------------- Radial Damping --------------------

def radial_damping_solve(r_norm: float, c: float, p: float,
                         tol: float = 1e-13, max_iter: int = 200) -> float:
    """
    Unique root rho >= 0 of rho (1 + c rho^p) = r_norm.

    Safeguarded Newton inside the bracket [0, r_norm], started from the right
    end where the residual is non-negative; bisection whenever a Newton
    iterate leaves the bracket.
    """
    if r_norm < 0 or c < 0 or p <= 0:
        raise ConfigurationError(f"radial solve needs r_norm >= 0, c >= 0, p > 0 (got {r_norm}, {c}, {p})")
    if r_norm == 0.0:
        return 0.0
    if c == 0.0:
        return float(r_norm)

    def residual(rho):
        return rho * (1.0 + c * rho ** p) - r_norm

    threshold = tol * (1.0 + r_norm)
    lo, hi = 0.0, float(r_norm)
    rho = hi
    g = residual(rho)
    for _ in range(max_iter):
        if g == 0.0:
            return rho
        if g > 0:
            hi = rho
        else:
            lo = rho
        slope = 1.0 + c * (p + 1.0) * rho ** p
        candidate = rho - g / slope
        if not lo <= candidate <= hi:
            candidate = 0.5 * (lo + hi)
        if candidate == rho or (abs(g) <= threshold and abs(candidate - rho) <= 4e-16 * rho):
            g_candidate = residual(candidate)
            return candidate if abs(g_candidate) <= abs(g) else rho
        rho = candidate
        g = residual(rho)

    if abs(g) <= threshold:
        return rho
    raise NumericalError(
        "radial damping solve did not converge",
        details={"bracket": [lo, hi], "residual": g, "r_norm": r_norm, "c": c, "p": p},
    )


def damping_substep(basis: SpectralBasis, config: PhysicsConfig, b, tau: float,
                    tol: float = 1e-13, max_iter: int = 200) -> np.ndarray:
    """Exact solution v of v + k tau ||v||^p v = b (implicit Euler on b' = -k||b||^p b)."""
    b = np.asarray(b, dtype=float)
    if b.shape != (basis.size,):
        raise ShapeError(f"expected {basis.size} modal coefficients, got shape {b.shape}")
    if tau < 0:
        raise ConfigurationError(f"tau must be non-negative, got {tau}")
    r_norm = l2_norm(basis, b)
    c = config.k * tau
    if tau == 0 or r_norm == 0.0 or c == 0.0:
        return b.copy()
    rho = radial_damping_solve(r_norm, c, config.p, tol, max_iter)
    return b / (1.0 + c * rho ** config.p)


def exact_damping_substep(basis: SpectralBasis, config: PhysicsConfig, b, tau: float) -> np.ndarray:
    """
    Exact flow of b' = -k ||b||^p b over tau.

    The direction of b is kept and its norm follows r' = -k r^(p+1), so
    ||v|| = ||b|| / (1 + p k tau ||b||^p)^(1/p).
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (basis.size,):
        raise ShapeError(f"expected {basis.size} modal coefficients, got shape {b.shape}")
    if tau < 0:
        raise ConfigurationError(f"tau must be non-negative, got {tau}")
    r_norm = l2_norm(basis, b)
    c = config.k * tau
    if tau == 0 or r_norm == 0.0 or c == 0.0:
        return b.copy()
    p = config.p
    return b / (1.0 + p * c * r_norm ** p) ** (1.0 / p)


# -------------------- Split Stepper --------------------

class SplitStepper:
    """Precomputed propagators for repeated steps with a fixed dt."""

    def __init__(self, basis: SpectralBasis, config: PhysicsConfig, step_config: StepConfig):
        config.check(basis)
        self.basis = basis
        self.config = config
        self.step_config = step_config
        dt = step_config.dt
        self.half = 0.5 * dt

        omega = np.sqrt(basis.eigenvalues)
        self._omega = omega
        self._cos = np.cos(omega * dt)
        self._sin = np.sin(omega * dt)

        kernel = config.kernel
        if dt * kernel.hs_norm >= 1.0:
            logger.warning("dt * ||K|| = %.3g >= 1; anti-damping kicks may be inaccurate", dt * kernel.hs_norm)

        self._kernel_matrix = None if kernel.is_zero else kernel.modal_matrix
        self._kick_propagator = None
        self._kick_integral = None
        if self._kernel_matrix is not None and step_config.kernel_rule == "exponential":
            n = basis.size
            block = np.zeros((2 * n, 2 * n))
            block[:n, :n] = self._kernel_matrix
            block[:n, n:] = np.eye(n)
            exponential = expm(self.half * block)
            self._kick_propagator = exponential[:n, :n]
            self._kick_integral = exponential[:n, n:]

    def kick(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """b' = -f(u) + h + Psi(b) over dt/2 with u frozen."""
        forcing = self.config.h - nonlinearity_apply(self.config, self.basis, a)
        if self._kernel_matrix is None:
            return b + self.half * forcing
        if self._kick_propagator is not None:
            return self._kick_propagator @ b + self._kick_integral @ forcing
        return b + self.half * (forcing + self._kernel_matrix @ b)

    def damp(self, b: np.ndarray) -> np.ndarray:
        sc = self.step_config
        if self.config.k == 0.0:
            return b
        if sc.damping_rule == "exact":
            return exact_damping_substep(self.basis, self.config, b, self.half)
        return damping_substep(self.basis, self.config, b, self.half, sc.radial_tol, sc.radial_max_iter)

    def rotate(self, a: np.ndarray, b: np.ndarray):
        """Exact flow of a' = b, b' = -lambda a over dt."""
        a_new = self._cos * a + (self._sin / self._omega) * b
        b_new = -self._omega * self._sin * a + self._cos * b
        return a_new, b_new

    def advance(self, state: State) -> State:
        a, b = state.a, state.b
        b = self.kick(a, b)
        b = self.damp(b)
        a, b = self.rotate(a, b)
        b = self.damp(b)
        b = self.kick(a, b)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise NumericalError("state became non-finite", details={"time": state.time + self.step_config.dt})
        return State(a, b, state.time + self.step_config.dt)


def step(basis: SpectralBasis, config: PhysicsConfig, state: State, step_config: StepConfig) -> State:
    """One Strang step of size step_config.dt."""
    state.check(basis)
    return SplitStepper(basis, config, step_config).advance(state)


# -------------------- Trajectories --------------------

@dataclass
class Trajectory:
    """Observations, strided snapshots and the final state of one run."""

    dt: float
    steps: int = 0
    observations: List[Dict[str, float]] = field(default_factory=list)
    snapshots: List[State] = field(default_factory=list)
    final_state: Optional[State] = None
    failure: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.failure is not None

    @property
    def times(self) -> List[float]:
        return [obs["t"] for obs in self.observations]

    def column(self, name: str) -> np.ndarray:
        return np.array([obs[name] for obs in self.observations], dtype=float)


def step_count(T: float, dt: float) -> int:
    """Number of whole steps of size dt that fit in [0, T]."""
    return int(math.floor(T / dt + 1e-9))


def integrate(basis: SpectralBasis, config: PhysicsConfig, state0: State, T: float,
              step_config: StepConfig, observers: Sequence[Observer] = (),
              observe_every: int = 1, snapshot_every: Optional[int] = 1) -> Trajectory:
    """
    Advance ``state0`` to time T (in whole steps).

    Observers are called with (previous state, current state) at t = 0 (previous
    is None), every ``observe_every`` steps and at the final step; their dicts are merged into one
    observation per sampled time. Snapshots are kept every ``snapshot_every``
    steps (never when None). A numerical failure stops the run and is recorded
    in ``failure``; the partial trajectory is returned.
    """
    if T < 0:
        raise ConfigurationError(f"T must be non-negative, got {T}")
    if observe_every < 1 or (snapshot_every is not None and snapshot_every < 1):
        raise ConfigurationError("observation and snapshot strides must be positive")
    state0.check(basis)
    stepper = SplitStepper(basis, config, step_config)
    trajectory = Trajectory(dt=step_config.dt)

    def observe(previous: Optional[State], current: State):
        record = {"t": current.time}
        for observer in observers:
            record.update(observer(previous, current))
        trajectory.observations.append(record)

    state = state0
    observe(None, state)
    if snapshot_every is not None:
        trajectory.snapshots.append(state)

    total = step_count(T, step_config.dt)
    for n in range(1, total + 1):
        try:
            new_state = stepper.advance(state)
        except NumericalError as e:
            trajectory.failure = f"step {n} (t = {state.time:.6g}): {e.message}"
            logger.error("integration failed at %s", trajectory.failure)
            break
        # time from the step counter avoids drift from repeated additions
        new_state = State(new_state.a, new_state.b, state0.time + n * step_config.dt)
        if n % observe_every == 0 or n == total:
            observe(state, new_state)
        if snapshot_every is not None and n % snapshot_every == 0:
            trajectory.snapshots.append(new_state)
        state = new_state
        trajectory.steps = n

    trajectory.final_state = state
    return trajectory


# -------------------- Resolvent --------------------

@dataclass(frozen=True)
class ResolventProblem:
    """Right-hand side (f0, f1) of (I + A) U = (f0, f1) with A(u, v) = (-v, -Lap u + k||v||^p v)."""

    f0: np.ndarray
    f1: np.ndarray


@dataclass(frozen=True)
class ResolventSolution:
    u: np.ndarray
    v: np.ndarray
    sigma: float
    residual: float


def resolvent_residual(basis: SpectralBasis, config: PhysicsConfig, problem: ResolventProblem,
                       u: np.ndarray, v: np.ndarray) -> float:
    """Relative residual of both components of (I + A)(u, v) = (f0, f1)."""
    lam = basis.eigenvalues
    first = u - v - problem.f0
    second = lam * u + damping(config, basis, v) + v - problem.f1
    first_scale = 1.0 + grad_norm(basis, problem.f0) + grad_norm(basis, u)
    second_scale = 1.0 + l2_norm(basis, problem.f1) + l2_norm(basis, lam * problem.f0) + l2_norm(basis, lam * u)
    return max(grad_norm(basis, first) / first_scale, l2_norm(basis, second) / second_scale)


def resolvent_solve(basis: SpectralBasis, config: PhysicsConfig, problem: ResolventProblem,
                    tol: float = 1e-10, bracket_scale: float = 1.0) -> ResolventSolution:
    """
    Solve -Lap v + k||v||^p v + v = f1 + Lap f0, then u = v + f0.

    With g = f1 - lambda f0, v(sigma)_j = g_j / (lambda_j + 1 + k sigma^p) and
    sigma is the unique fixed point of sigma = ||v(sigma)|| (the map is strictly
    decreasing in sigma), bracketed by [0, bracket_scale * ||v(0)||].
    """
    f0 = np.asarray(problem.f0, dtype=float)
    f1 = np.asarray(problem.f1, dtype=float)
    if f0.shape != (basis.size,) or f1.shape != (basis.size,):
        raise ShapeError(f"resolvent data must have {basis.size} modal coefficients")
    if bracket_scale < 1.0:
        raise ConfigurationError("bracket_scale must be at least 1")
    problem = ResolventProblem(f0, f1)
    lam = basis.eigenvalues
    g = f1 - lam * f0

    def profile(sigma):
        return g / (lam + 1.0 + config.k * sigma ** config.p)

    upper = l2_norm(basis, profile(0.0))
    if upper == 0.0:
        sigma = 0.0
    elif config.k == 0.0:
        sigma = upper
    else:
        try:
            sigma = brentq(lambda s: l2_norm(basis, profile(s)) - s, 0.0, bracket_scale * upper,
                           xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        except (ValueError, RuntimeError) as e:
            raise NumericalError(
                f"resolvent bracketing failed: {e}",
                details={"bracket": [0.0, bracket_scale * upper]},
            ) from e

    v = profile(sigma)
    u = v + f0
    residual = resolvent_residual(basis, config, problem, u, v)
    if residual > tol:
        logger.warning("resolvent residual %.3e above tolerance %.3e", residual, tol)
    return ResolventSolution(u=u, v=v, sigma=float(sigma), residual=float(residual))


def accretivity_form(basis: SpectralBasis, config: PhysicsConfig, first: State, second: State) -> float:
    """
    (A(U1) - A(U2), U1 - U2) in H1_0 x L2 with A(u, v) = (-v, -Lap u + k||v||^p v);
    the first component pairs through grad, i.e. weighted by lambda.
    """
    lam = basis.eigenvalues
    du = first.a - second.a
    dv = first.b - second.b
    position_part = inner(basis, -dv, lam * du)
    velocity_part = inner(basis, lam * du + damping(config, basis, first.b) - damping(config, basis, second.b), dv)
    return position_part + velocity_part
