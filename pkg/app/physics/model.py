"""
Physics of the damped wave equation

    u_tt - Lap u + k ||u_t||^p u_t + f(u) = Psi(u_t) + h,   u = 0 on the boundary,

in modal coordinates: the phase point, the nonlocal damping, the anti-damping
kernel operator Psi, the source nonlinearity f with primitive F, the forcing h
and the checks of the standing assumptions on (k, p, f).
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from app.core.errors import ConfigurationError, ShapeError
from app.physics.basis import (
    SpectralBasis,
    grad_norm,
    l2_norm,
    project,
    quadrature,
    to_modal,
    to_physical,
)
from app.utils.binary_io import read_kernel_file
from app.utils.expressions import compile_expression, evaluate_constant
from schemas import AssumptionReport, FieldSpec, KernelSpec, LipschitzReport, NonlinearitySpec, PhysicsSpec

logger = logging.getLogger(__name__)


# -------------------- State --------------------

@dataclass(frozen=True, eq=False)
class State:
    """Phase point (u, u_t) in modal coordinates at time t."""

    a: np.ndarray
    b: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 1 or a.shape != b.shape:
            raise ShapeError(f"position and velocity must be equal-length vectors, got {a.shape} and {b.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ShapeError("state contains non-finite coefficients")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def zero(cls, basis: SpectralBasis, time: float = 0.0) -> "State":
        return cls(np.zeros(basis.size), np.zeros(basis.size), time)

    def check(self, basis: SpectralBasis) -> "State":
        if self.a.size != basis.size:
            raise ShapeError(f"state has {self.a.size} modes, basis has {basis.size}")
        return self

    def scaled(self, factor: float) -> "State":
        return State(factor * self.a, factor * self.b, self.time)

    def phase_norm(self, basis: SpectralBasis) -> float:
        """Norm in H1_0 x L2: sqrt(||grad u||^2 + ||u_t||^2)."""
        return float(np.hypot(grad_norm(basis, self.a), l2_norm(basis, self.b)))


# -------------------- Kernel --------------------

@dataclass(frozen=True, eq=False)
class Kernel:
    """Anti-damping operator Psi represented by its modal matrix."""

    modal_matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.modal_matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ShapeError(f"kernel modal matrix must be square, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ConfigurationError("kernel modal matrix has non-finite entries")
        matrix.setflags(write=False)
        object.__setattr__(self, "modal_matrix", matrix)

    @property
    def hs_norm(self) -> float:
        """Frobenius norm, i.e. ||K||_{L2(Omega x Omega)} in the orthonormal basis."""
        return float(np.linalg.norm(self.modal_matrix, "fro"))

    @property
    def size(self) -> int:
        return self.modal_matrix.shape[0]

    @property
    def is_zero(self) -> bool:
        return not np.any(self.modal_matrix)

    @classmethod
    def zero(cls, size: int) -> "Kernel":
        return cls(np.zeros((size, size)))


def separable_kernel(basis: SpectralBasis, terms: Sequence[Tuple[float, Callable, Callable]]) -> Kernel:
    """
    Kernel sum_i w_i g_i(x) h_i(y), projected mode by mode.

    Each term contributes w_i * (g_i)^ (h_i)^T where ^ is the modal projection.
    """
    matrix = np.zeros((basis.size, basis.size))
    for weight, left, right in terms:
        matrix += weight * np.outer(project(basis, left), project(basis, right))
    return Kernel(matrix)


# -------------------- Nonlinearity --------------------

@dataclass(frozen=True)
class Nonlinearity:
    """Source term f, its primitive F (F(0) = 0) and derivative f'."""

    kind: str
    f: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    F: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    df: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    N: int = 3
    mu: Optional[float] = None
    coeffs: Tuple[float, ...] = ()

    @property
    def growth_exponent(self) -> float:
        """Exponent 2/(N-2) of the growth condition on f'."""
        return 2.0 / (self.N - 2)


def _zero(s):
    return np.zeros_like(np.asarray(s, dtype=float))


def zero_nonlinearity(N: int = 3, mu: Optional[float] = None) -> Nonlinearity:
    return Nonlinearity("zero", _zero, _zero, _zero, N=N, mu=mu)


def odd_polynomial(coeffs: Sequence[float], N: int = 3, mu: Optional[float] = None) -> Nonlinearity:
    """f(s) = c1 s + c3 s^3 + c5 s^5 + ... for coeffs = [c1, c3, c5, ...]."""
    coeffs = tuple(float(c) for c in coeffs)
    full = np.zeros(2 * len(coeffs))
    full[1::2] = coeffs
    f = Polynomial(full)
    F = f.integ()
    df = f.deriv()
    return Nonlinearity("odd_polynomial", f, F, df, N=N, mu=mu, coeffs=coeffs)


def custom_pointwise(f: Callable, F: Callable, df: Optional[Callable] = None,
                     N: int = 3, mu: Optional[float] = None) -> Nonlinearity:
    """User-supplied f and F; f' falls back to a central difference."""
    if df is None:
        def df(s):
            s = np.asarray(s, dtype=float)
            step = 1e-6 * (1.0 + np.abs(s))
            return (f(s + step) - f(s - step)) / (2.0 * step)

    if abs(float(np.asarray(F(np.zeros(1)))[0])) > 1e-12:
        raise ConfigurationError("custom nonlinearity primitive must satisfy F(0) = 0")
    return Nonlinearity("custom_pointwise", f, F, df, N=N, mu=mu)


# -------------------- Physics Config --------------------

@dataclass(frozen=True, eq=False)
class PhysicsConfig:
    """Parameters of the equation: gain k, exponent p, kernel, forcing, nonlinearity."""

    k: float
    p: float
    kernel: Kernel
    h: np.ndarray
    nonlinearity: Nonlinearity

    def __post_init__(self):
        if not np.isfinite(self.p) or self.p <= 0:
            raise ConfigurationError(f"damping exponent p must be positive, got {self.p}")
        if not np.isfinite(self.k) or self.k < 0:
            raise ConfigurationError(f"damping gain k must be non-negative, got {self.k}")
        h = np.array(self.h, dtype=float)
        if h.ndim != 1 or h.size != self.kernel.size:
            raise ShapeError(f"forcing has {h.size} coefficients, kernel acts on {self.kernel.size}")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "p", float(self.p))
        if self.k == 0:
            logger.warning("k = 0: the damping term is switched off (outside the standing assumptions)")

    @property
    def size(self) -> int:
        return self.h.size

    def check(self, basis: SpectralBasis) -> "PhysicsConfig":
        if self.size != basis.size:
            raise ShapeError(f"physics config has {self.size} modes, basis has {basis.size}")
        return self


def simple_physics(basis: SpectralBasis, k: float = 1.0, p: float = 2.0,
                   kernel: Optional[Kernel] = None, h=None,
                   nonlinearity: Optional[Nonlinearity] = None) -> PhysicsConfig:
    """Convenience constructor with zero defaults for the optional parts."""
    return PhysicsConfig(
        k=k,
        p=p,
        kernel=kernel if kernel is not None else Kernel.zero(basis.size),
        h=np.zeros(basis.size) if h is None else h,
        nonlinearity=nonlinearity if nonlinearity is not None else zero_nonlinearity(),
    )


# -------------------- Operators --------------------

def _check_vector(basis: SpectralBasis, vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (basis.size,):
        raise ShapeError(f"expected {basis.size} modal coefficients, got shape {vec.shape}")
    return vec


def damping(config: PhysicsConfig, basis: SpectralBasis, b) -> np.ndarray:
    """k ||b||^p b."""
    b = _check_vector(basis, b)
    norm = l2_norm(basis, b)
    if norm == 0.0:
        return np.zeros_like(b)
    return config.k * norm ** config.p * b


def antidamping(config: PhysicsConfig, basis: SpectralBasis, b) -> np.ndarray:
    """Psi(b) = K^ b."""
    b = _check_vector(basis, b)
    if config.kernel.size != b.size:
        raise ShapeError(f"kernel acts on {config.kernel.size} modes, got {b.size}")
    return config.kernel.modal_matrix @ b


def nonlinearity_apply(config: PhysicsConfig, basis: SpectralBasis, a) -> np.ndarray:
    """Modal coefficients of f(u), evaluated pseudo-spectrally on the grid."""
    a = _check_vector(basis, a)
    if config.nonlinearity.kind == "zero":
        return np.zeros_like(a)
    return to_modal(basis, config.nonlinearity.f(to_physical(basis, a)))


def potential_integral(config: PhysicsConfig, basis: SpectralBasis, a) -> float:
    """Integral over the domain of F(u)."""
    a = _check_vector(basis, a)
    if config.nonlinearity.kind == "zero":
        return 0.0
    return quadrature(basis, config.nonlinearity.F(to_physical(basis, a)))


# -------------------- Assumption Checks --------------------

def validate_assumptions(config: PhysicsConfig, basis: SpectralBasis,
                         sample_range: float = 10.0, sample_count: int = 2001) -> AssumptionReport:
    """
    Sampled check of the growth bound |f'(s)| <= M(|s|^{2/(N-2)} + 1) and of
    the dissipativity margin liminf f' > -lambda_1.

    Violations are reported as warnings; nothing here raises on them.
    """
    if sample_range <= 0:
        raise ConfigurationError(f"sample_range must be positive, got {sample_range}")
    if sample_count < 2:
        raise ConfigurationError(f"sample_count must be at least 2, got {sample_count}")

    nonlinearity = config.nonlinearity
    s = np.linspace(-sample_range, sample_range, int(sample_count))
    slope = np.asarray(nonlinearity.df(s), dtype=float)
    envelope = np.abs(s) ** nonlinearity.growth_exponent + 1.0
    growth_constant = float(np.max(np.abs(slope) / envelope))

    outer = np.abs(s) >= sample_range / 2
    mu_estimate = float(np.min(slope[outer]))
    lambda_1 = basis.lambda_1
    dissipative = mu_estimate > -lambda_1

    warnings = []
    if config.k <= 0:
        warnings.append(f"k = {config.k} is not positive")
    if not np.isfinite(growth_constant):
        warnings.append("f' is not finite on the sampled range")
    if not dissipative:
        warnings.append(f"mu estimate {mu_estimate:.6g} does not exceed -lambda_1 = {-lambda_1:.6g}")
    if nonlinearity.mu is not None and nonlinearity.mu <= -lambda_1:
        warnings.append(f"declared mu {nonlinearity.mu:.6g} does not exceed -lambda_1 = {-lambda_1:.6g}")
    for message in warnings:
        logger.warning("assumption check: %s", message)

    return AssumptionReport(
        growth_constant=growth_constant,
        mu_estimate=mu_estimate,
        lambda_1=lambda_1,
        dissipative=dissipative,
        mu_declared=nonlinearity.mu,
        sample_range=float(sample_range),
        sample_count=int(sample_count),
        warnings=warnings,
    )


def lipschitz_audit(config: PhysicsConfig, basis: SpectralBasis, samples: int,
                    radius: float, rng: np.random.Generator) -> LipschitzReport:
    """
    Largest observed ratio
        ||f(u1) - f(u2)|| / ((|grad u1|^e + |grad u2|^e + 1) |grad(u1 - u2)|),  e = 2/(N-2),
    over random pairs with grad norms at most ``radius``.
    """
    exponent = config.nonlinearity.growth_exponent
    f = config.nonlinearity.f
    best = 0.0
    for _ in range(int(samples)):
        pair = []
        for _ in range(2):
            a = random_coefficients(basis, rng)
            a *= radius * rng.uniform(0.05, 1.0) / max(grad_norm(basis, a), 1e-300)
            pair.append(a)
        a1, a2 = pair
        gap = grad_norm(basis, a1 - a2)
        if gap == 0.0:
            continue
        diff = f(to_physical(basis, a1)) - f(to_physical(basis, a2))
        numerator = np.sqrt(max(quadrature(basis, diff * diff), 0.0))
        denominator = (grad_norm(basis, a1) ** exponent + grad_norm(basis, a2) ** exponent + 1.0) * gap
        best = max(best, numerator / denominator)
    return LipschitzReport(max_ratio=float(best), samples=int(samples), radius=float(radius))


# -------------------- Builders --------------------

def mode_weights(basis: SpectralBasis) -> np.ndarray:
    """Radial mode index |k| used for the 1/j decay profile."""
    return np.sqrt(np.sum(basis.mode_indices.astype(float) ** 2, axis=1))


def random_coefficients(basis: SpectralBasis, rng: np.random.Generator) -> np.ndarray:
    """Gaussian coefficients with 1/j decay."""
    return rng.standard_normal(basis.size) / mode_weights(basis)


def coordinate_names(basis: SpectralBasis):
    return ["x"] if basis.dim == 1 else ["x", "y"]


def realize_field(spec: FieldSpec, basis: SpectralBasis, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Modal coefficients of a configured field."""
    if spec.type == "zero":
        coeffs = np.zeros(basis.size)
    elif spec.type == "modal_list":
        coeffs = np.zeros(basis.size)
        for position, value in spec.modes:
            if position < 1 or position > basis.size:
                raise ConfigurationError(f"mode position {position} outside 1..{basis.size}")
            coeffs[position - 1] = value
    elif spec.type == "pointwise_expr":
        coeffs = project(basis, compile_expression(spec.expr, coordinate_names(basis)))
    else:
        if rng is None:
            raise ConfigurationError("random fields need a seeded generator")
        coeffs = random_coefficients(basis, rng)
    return spec.scale * coeffs


def build_kernel(spec: KernelSpec, basis: SpectralBasis) -> Kernel:
    if spec.type == "zero":
        return Kernel.zero(basis.size)
    if spec.type == "separable":
        names = coordinate_names(basis)
        terms = [
            (evaluate_constant(term.weight), compile_expression(term.left, names),
             compile_expression(term.right, names))
            for term in spec.terms
        ]
        kernel = separable_kernel(basis, terms)
    else:
        matrix = read_kernel_file(spec.path)
        if matrix.shape != (basis.size, basis.size):
            raise ConfigurationError(
                f"kernel file {spec.path} has shape {matrix.shape}, expected {(basis.size, basis.size)}"
            )
        kernel = Kernel(matrix)
    return Kernel(spec.scale * kernel.modal_matrix)


def build_nonlinearity(spec: NonlinearitySpec) -> Nonlinearity:
    if spec.kind == "zero":
        return zero_nonlinearity(N=spec.N, mu=spec.mu)
    if spec.kind == "odd_polynomial":
        return odd_polynomial(spec.coeffs, N=spec.N, mu=spec.mu)
    f = compile_expression(spec.f, ["s"])
    F = compile_expression(spec.F, ["s"])
    df = compile_expression(spec.df, ["s"]) if spec.df else None
    return custom_pointwise(f, F, df, N=spec.N, mu=spec.mu)


def build_physics(spec: PhysicsSpec, basis: SpectralBasis,
                  rng: Optional[np.random.Generator] = None) -> PhysicsConfig:
    """Turn the validated config section into a PhysicsConfig on ``basis``."""
    return PhysicsConfig(
        k=spec.k,
        p=spec.p,
        kernel=build_kernel(spec.kernel, basis),
        h=realize_field(spec.h, basis, rng),
        nonlinearity=build_nonlinearity(spec.nonlinearity),
    )
