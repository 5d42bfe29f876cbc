"""
Scalar functionals and inequality audits.

Everything here is a pure function of (basis, config, state): the energy and
its parts, the perturbed functional V_eps, the energy identity residual, the
monotonicity inequality for x -> ||x||^{q-2} x, the pair functional between two
trajectories and the share of energy held by high modes.
"""

from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np

from app.core.errors import ConfigurationError, InputError, ShapeError
from app.physics.basis import SpectralBasis, grad_norm, inner, l2_norm
from app.physics.model import (
    PhysicsConfig,
    State,
    antidamping,
    damping,
    nonlinearity_apply,
    potential_integral,
)


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    elastic: float
    potential: float
    forcing: float

    @property
    def total(self) -> float:
        return self.kinetic + self.elastic + self.potential + self.forcing


@dataclass(frozen=True)
class MonotonicityReport:
    exponent: float
    lhs: float
    branch: str
    empirical_ratio: float
    passed: bool


@dataclass(frozen=True)
class SandwichConstants:
    mu0: float
    lower: float
    upper: float


def _check_state(basis: SpectralBasis, state: State) -> State:
    if state.a.size != basis.size:
        raise ShapeError(f"state has {state.a.size} modes, basis has {basis.size}")
    return state


def energy(basis: SpectralBasis, config: PhysicsConfig, state: State) -> EnergyBreakdown:
    """E = 1/2 ||u_t||^2 + 1/2 ||grad u||^2 + int F(u) - int h u."""
    _check_state(basis, state)
    return EnergyBreakdown(
        kinetic=0.5 * l2_norm(basis, state.b) ** 2,
        elastic=0.5 * grad_norm(basis, state.a) ** 2,
        potential=potential_integral(config, basis, state.a),
        forcing=-inner(basis, config.h, state.a),
    )


def lyapunov(basis: SpectralBasis, config: PhysicsConfig, state: State, epsilon: float) -> float:
    """V_eps = E + eps (u_t, u)."""
    if epsilon < 0:
        raise ConfigurationError(f"epsilon must be non-negative, got {epsilon}")
    return energy(basis, config, state).total + epsilon * inner(basis, state.b, state.a)


def default_mu0(basis: SpectralBasis, mu: Optional[float]) -> float:
    """Midpoint of (max(0, -mu), lambda_1); mu = None is treated as mu >= 0."""
    lower = 0.0 if mu is None else max(0.0, -float(mu))
    if lower >= basis.lambda_1:
        raise ConfigurationError(
            f"no admissible mu0: -mu = {lower:.6g} is not below lambda_1 = {basis.lambda_1:.6g}"
        )
    return 0.5 * (lower + basis.lambda_1)


def epsilon_ceiling(basis: SpectralBasis, mu0: float) -> float:
    """
    eps0 = (1/8)(1 - mu0/lambda_1) sqrt(lambda_1): for eps <= eps0,
    |eps (u_t, u)| <= (1/16)(1 - mu0/lambda_1)(||u_t||^2 + ||grad u||^2).
    """
    lambda_1 = basis.lambda_1
    if not 0.0 < mu0 < lambda_1:
        raise ConfigurationError(f"mu0 must lie in (0, lambda_1 = {lambda_1:.6g}), got {mu0}")
    return 0.125 * (1.0 - mu0 / lambda_1) * np.sqrt(lambda_1)


def dissipation_rate(basis: SpectralBasis, config: PhysicsConfig, state: State) -> float:
    """dE/dt = -k ||u_t||^{p+2} + (Psi(u_t), u_t)."""
    _check_state(basis, state)
    b = state.b
    return -inner(basis, damping(config, basis, b), b) + inner(basis, antidamping(config, basis, b), b)


def energy_identity_residual(basis: SpectralBasis, config: PhysicsConfig,
                             state_before: State, state_after: State, dt: float) -> float:
    """|dE/dt - trapezoidal average of the dissipation rate| over one step."""
    if dt <= 0:
        raise InputError(f"dt must be positive, got {dt}")
    change = energy(basis, config, state_after).total - energy(basis, config, state_before).total
    rate = 0.5 * (dissipation_rate(basis, config, state_before) + dissipation_rate(basis, config, state_after))
    return abs(change / dt - rate)


def lyapunov_drift(basis: SpectralBasis, config: PhysicsConfig, state: State, epsilon: float) -> float:
    """
    dV_eps/dt from multiplying the equation by u_t + eps u:
    dE/dt + eps[-|grad u|^2 + |u_t|^2 - k|u_t|^p (u_t,u) - (f(u),u) + (Psi(u_t),u) + (h,u)].
    """
    _check_state(basis, state)
    a, b = state.a, state.b
    correction = (
        -grad_norm(basis, a) ** 2
        + l2_norm(basis, b) ** 2
        - inner(basis, damping(config, basis, b), a)
        - inner(basis, nonlinearity_apply(config, basis, a), a)
        + inner(basis, antidamping(config, basis, b), a)
        + inner(basis, config.h, a)
    )
    return dissipation_rate(basis, config, state) + epsilon * correction


# -------------------- Energy Bounds --------------------

def sandwich_lower_shape(basis: SpectralBasis, state: State, mu0: float) -> float:
    """(1/8)(1 - mu0/lambda_1)(||u_t||^2 + ||grad u||^2)."""
    quad = l2_norm(basis, state.b) ** 2 + grad_norm(basis, state.a) ** 2
    return 0.125 * (1.0 - mu0 / basis.lambda_1) * quad


def sandwich_upper_shape(basis: SpectralBasis, config: PhysicsConfig, state: State) -> float:
    """||u_t||^2 + ||grad u||^2 + ||grad u||^{(2N-2)/(N-2)} + 1."""
    N = config.nonlinearity.N
    g = grad_norm(basis, state.a)
    return l2_norm(basis, state.b) ** 2 + g ** 2 + g ** ((2.0 * N - 2.0) / (N - 2.0)) + 1.0


def fit_sandwich_constants(basis: SpectralBasis, config: PhysicsConfig,
                           states: Iterable[State], mu0: Optional[float] = None) -> SandwichConstants:
    """
    Fit C in  E >= lower_shape - C  (clamped at C >= 0) and in  E <= C * upper_shape.
    """
    if mu0 is None:
        mu0 = default_mu0(basis, config.nonlinearity.mu)
    lower = 0.0
    upper = 0.0
    count = 0
    for state in states:
        total = energy(basis, config, state).total
        lower = max(lower, sandwich_lower_shape(basis, state, mu0) - total)
        upper = max(upper, total / sandwich_upper_shape(basis, config, state))
        count += 1
    if count == 0:
        raise InputError("fitting sandwich constants needs at least one state")
    return SandwichConstants(mu0=mu0, lower=lower, upper=upper)


# -------------------- Monotonicity --------------------

def _duality_map(vectors: np.ndarray, norms: np.ndarray, q: float) -> np.ndarray:
    scale = np.zeros_like(norms)
    nonzero = norms > 0
    scale[nonzero] = norms[nonzero] ** (q - 2.0)
    return vectors * scale[..., None]


def _monotonicity_terms(x: np.ndarray, y: np.ndarray, q: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    nx = np.linalg.norm(x, axis=-1)
    ny = np.linalg.norm(y, axis=-1)
    diff = x - y
    lhs = np.sum((_duality_map(x, nx, q) - _duality_map(y, ny, q)) * diff, axis=-1)
    gap = np.linalg.norm(diff, axis=-1)
    if q >= 2.0:
        denominator = gap ** q
    else:
        denominator = gap ** 2 / (nx + ny) ** (2.0 - q)
    scale = np.maximum(nx, ny) ** q
    return lhs, denominator, scale


def monotonicity_check(x, y, q: float) -> MonotonicityReport:
    """
    (||x||^{q-2} x - ||y||^{q-2} y, x - y) against the lower bound shape
    ||x-y||^q (q >= 2) or ||x-y||^2 / (||x|| + ||y||)^{2-q} (1 < q < 2).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError(f"x and y must be vectors of equal length, got {x.shape} and {y.shape}")
    if q <= 1:
        raise InputError(f"q must exceed 1, got {q}")
    if not np.any(x) and not np.any(y):
        raise InputError("monotonicity check is undefined for x = y = 0")

    lhs, denominator, scale = _monotonicity_terms(x[None, :], y[None, :], q)
    lhs, denominator, scale = float(lhs[0]), float(denominator[0]), float(scale[0])
    ratio = lhs / denominator if denominator > 0 else 0.0
    return MonotonicityReport(
        exponent=q,
        lhs=lhs,
        branch="q>=2" if q >= 2 else "1<q<2",
        empirical_ratio=ratio,
        passed=lhs >= -1e-14 * scale,
    )


def estimate_monotonicity_constant(q: float, dim: int, samples: int, rng: np.random.Generator,
                                   batch: int = 10_000) -> Tuple[float, float]:
    """
    Empirical C_q: minimum of the branch ratio over random Gaussian pairs.
    Returns (minimum ratio, minimum scale-relative lhs).
    """
    if q <= 1:
        raise InputError(f"q must exceed 1, got {q}")
    min_ratio = np.inf
    min_relative_lhs = np.inf
    remaining = int(samples)
    while remaining > 0:
        count = min(batch, remaining)
        x = rng.standard_normal((count, dim))
        y = rng.standard_normal((count, dim))
        lhs, denominator, scale = _monotonicity_terms(x, y, q)
        valid = denominator > 0
        if np.any(valid):
            min_ratio = min(min_ratio, float(np.min(lhs[valid] / denominator[valid])))
        min_relative_lhs = min(min_relative_lhs, float(np.min(lhs / scale)))
        remaining -= count
    return min_ratio, min_relative_lhs


# -------------------- Pair Functional --------------------

def pair_energy(basis: SpectralBasis, state_a: State, state_b: State) -> float:
    """E^{n,m} = 1/2 (||grad(u_n - u_m)||^2 + ||u_t,n - u_t,m||^2)."""
    _check_state(basis, state_a)
    _check_state(basis, state_b)
    return 0.5 * (grad_norm(basis, state_a.a - state_b.a) ** 2 + l2_norm(basis, state_a.b - state_b.b) ** 2)


def pair_energy_rate(basis: SpectralBasis, config: PhysicsConfig, state_a: State, state_b: State) -> float:
    """
    dE^{n,m}/dt = (Psi(w_t), w_t) - (f(u_n) - f(u_m), w_t)
                  - k(||v_n||^p v_n - ||v_m||^p v_m, w_t),   w = u_n - u_m.
    """
    _check_state(basis, state_a)
    _check_state(basis, state_b)
    w_t = state_a.b - state_b.b
    source = nonlinearity_apply(config, basis, state_a.a) - nonlinearity_apply(config, basis, state_b.a)
    friction = damping(config, basis, state_a.b) - damping(config, basis, state_b.b)
    return (
        inner(basis, antidamping(config, basis, w_t), w_t)
        - inner(basis, source, w_t)
        - inner(basis, friction, w_t)
    )


def modal_energy(basis: SpectralBasis, state: State) -> np.ndarray:
    """Per-mode energy 1/2 (lambda_j a_j^2 + b_j^2)."""
    _check_state(basis, state)
    return 0.5 * (basis.eigenvalues * state.a ** 2 + state.b ** 2)


def tail_energy_fraction(basis: SpectralBasis, state: State, cutoff_index: int) -> float:
    """Share of modal energy in modes with (1-based) index above ``cutoff_index``."""
    if not 0 <= cutoff_index < basis.size:
        raise InputError(f"cutoff_index must lie in [0, {basis.size}), got {cutoff_index}")
    per_mode = modal_energy(basis, state)
    total = float(np.sum(per_mode))
    if total == 0.0:
        return 0.0
    return float(np.sum(per_mode[cutoff_index:]) / total)
