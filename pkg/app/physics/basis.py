"""
Dirichlet sine eigenbasis of -Laplace on an interval or a rectangle.

Coefficients are taken with respect to the L2-orthonormal eigenfunctions
``sqrt(2/L) sin(k pi x / L)`` (tensor products in 2D), so Parseval holds without
weights. Modes are ordered lexicographically in (k1[, k2]).

Physical values live on the interior points of a uniform grid with ``G`` points
per axis, ``x_i = i L / (G + 1)``. The midpoint/trapezoid quadrature on that grid
integrates products of sines exactly up to total frequency ``2 (G + 1) - 1``; the
default ``G = 2M`` therefore integrates the quartic potential of a cubic
nonlinearity exactly, which is stricter than the 3/2 rule.
"""

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from app.core.errors import ConfigurationError, ShapeError

MIN_DEALIAS = 1.5
DEFAULT_DEALIAS = 2.0


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Immutable spectral discretization; safe to share between workers."""

    dim: int
    modes_per_axis: int
    lengths: Tuple[float, ...]
    dealias: float
    eigenvalues: np.ndarray
    mode_indices: np.ndarray
    axis_grids: Tuple[np.ndarray, ...]
    sine_matrices: Tuple[np.ndarray, ...] = field(repr=False)
    weights: Tuple[float, ...] = field(repr=False)

    @property
    def size(self) -> int:
        """Number of retained modes."""
        return int(self.eigenvalues.size)

    @property
    def grid_shape(self) -> Tuple[int, ...]:
        return tuple(g.size for g in self.axis_grids)

    @property
    def grid_size(self) -> int:
        return int(np.prod(self.grid_shape))

    @property
    def lambda_1(self) -> float:
        """First Dirichlet eigenvalue (Poincare constant)."""
        return float(np.min(self.eigenvalues))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.weights))

    def grid(self) -> Tuple[np.ndarray, ...]:
        """Physical coordinates of the quadrature nodes, flattened row-major."""
        if self.dim == 1:
            return (self.axis_grids[0].copy(),)
        x1, x2 = np.meshgrid(self.axis_grids[0], self.axis_grids[1], indexing="ij")
        return (x1.ravel(), x2.ravel())

    def spec(self) -> dict:
        """Serializable description used in run manifests."""
        return {"dim": self.dim, "modes": self.modes_per_axis, "lengths": list(self.lengths)}

    def same_as(self, other: "SpectralBasis") -> bool:
        return (
            self.dim == other.dim
            and self.modes_per_axis == other.modes_per_axis
            and self.lengths == other.lengths
        )


def build_basis(dim: int, modes_per_axis: int, lengths: Sequence[float],
                dealias: float = DEFAULT_DEALIAS) -> SpectralBasis:
    """Build the sine basis with analytic eigenvalues and its quadrature grid."""
    if dim not in (1, 2):
        raise ConfigurationError(f"dim must be 1 or 2, got {dim}")
    if int(modes_per_axis) != modes_per_axis or modes_per_axis < 1:
        raise ConfigurationError(f"modes_per_axis must be a positive integer, got {modes_per_axis}")
    lengths = tuple(float(v) for v in lengths)
    if len(lengths) != dim:
        raise ConfigurationError(f"expected {dim} length(s), got {len(lengths)}")
    if any(not math.isfinite(v) or v <= 0 for v in lengths):
        raise ConfigurationError(f"lengths must be positive, got {list(lengths)}")
    if dealias < MIN_DEALIAS:
        raise ConfigurationError(f"dealias factor must be at least {MIN_DEALIAS}, got {dealias}")

    m = int(modes_per_axis)
    points = max(int(math.ceil(dealias * m)), int(math.ceil(MIN_DEALIAS * m)))
    k = np.arange(1, m + 1, dtype=float)

    axis_grids: List[np.ndarray] = []
    sine_matrices: List[np.ndarray] = []
    weights: List[float] = []
    for length in lengths:
        nodes = np.arange(1, points + 1, dtype=float) * length / (points + 1)
        axis_grids.append(nodes)
        sine_matrices.append(math.sqrt(2.0 / length) * np.sin(np.outer(nodes, k) * math.pi / length))
        weights.append(length / (points + 1))

    if dim == 1:
        mode_indices = k.astype(int).reshape(-1, 1)
        eigenvalues = (k * math.pi / lengths[0]) ** 2
    else:
        k1, k2 = np.meshgrid(k, k, indexing="ij")
        mode_indices = np.stack([k1.ravel(), k2.ravel()], axis=1).astype(int)
        eigenvalues = (k1.ravel() * math.pi / lengths[0]) ** 2 + (k2.ravel() * math.pi / lengths[1]) ** 2

    for arr in (eigenvalues, mode_indices, *axis_grids, *sine_matrices):
        arr.setflags(write=False)

    return SpectralBasis(
        dim=dim,
        modes_per_axis=m,
        lengths=lengths,
        dealias=float(dealias),
        eigenvalues=eigenvalues,
        mode_indices=mode_indices,
        axis_grids=tuple(axis_grids),
        sine_matrices=tuple(sine_matrices),
        weights=tuple(weights),
    )


def _check_modal(basis: SpectralBasis, coeffs) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.size,):
        raise ShapeError(f"expected {basis.size} modal coefficients, got shape {coeffs.shape}")
    return coeffs


def _check_grid(basis: SpectralBasis, values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (basis.grid_size,):
        raise ShapeError(f"expected {basis.grid_size} grid values, got shape {values.shape}")
    return values


def to_physical(basis: SpectralBasis, modal_coeffs) -> np.ndarray:
    """Evaluate a modal expansion on the quadrature grid (flattened row-major)."""
    a = _check_modal(basis, modal_coeffs)
    if basis.dim == 1:
        return basis.sine_matrices[0] @ a
    s1, s2 = basis.sine_matrices
    m = basis.modes_per_axis
    return (s1 @ a.reshape(m, m) @ s2.T).ravel()


def to_modal(basis: SpectralBasis, grid_values) -> np.ndarray:
    """Project grid values onto the retained modes by exact discrete quadrature."""
    u = _check_grid(basis, grid_values)
    if basis.dim == 1:
        return basis.weights[0] * (basis.sine_matrices[0].T @ u)
    s1, s2 = basis.sine_matrices
    grid = u.reshape(basis.grid_shape)
    return basis.cell_volume * (s1.T @ grid @ s2).ravel()


def quadrature(basis: SpectralBasis, grid_values) -> float:
    """Integral over the domain of a field sampled on the grid."""
    u = _check_grid(basis, grid_values)
    return float(basis.cell_volume * np.sum(u))


def l2_norm(basis: SpectralBasis, modal_coeffs) -> float:
    a = _check_modal(basis, modal_coeffs)
    return float(np.sqrt(a @ a))


def grad_norm(basis: SpectralBasis, modal_coeffs) -> float:
    a = _check_modal(basis, modal_coeffs)
    return float(np.sqrt(a @ (basis.eigenvalues * a)))


def inner(basis: SpectralBasis, first, second) -> float:
    """L2 inner product of two modal expansions."""
    return float(_check_modal(basis, first) @ _check_modal(basis, second))


def project(basis: SpectralBasis, func) -> np.ndarray:
    """Modal coefficients of a callable sampled on the grid."""
    return to_modal(basis, func(*basis.grid()))


def mode_position(basis: SpectralBasis, indices: Sequence[int]) -> int:
    """Position in the coefficient vector of the mode with the given indices."""
    indices = tuple(int(i) for i in indices)
    if len(indices) != basis.dim or any(i < 1 or i > basis.modes_per_axis for i in indices):
        raise ShapeError(f"mode {indices} is not retained by the basis")
    if basis.dim == 1:
        return indices[0] - 1
    return (indices[0] - 1) * basis.modes_per_axis + (indices[1] - 1)


def unit_mode(basis: SpectralBasis, position: int) -> np.ndarray:
    """Coefficient vector selecting a single mode (0-based position)."""
    vec = np.zeros(basis.size)
    vec[position] = 1.0
    return vec
