"""Uniform 1-D space-time grid and the discrete operators built on it.

Spatial fields live on nodes of a uniform mesh over (0, 1); gradients live on
cells.  The nodal quadrature is trapezoidal (lumped P1 mass), cell quantities
use midpoint weights.  All solvers in this package share these operators, so
transposition identities between them hold exactly in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded

from .errors import ShapeError


@dataclass(frozen=True)
class Grid:
    """Uniform mesh: ``n_space`` cells on (0, 1), ``n_time`` steps on (0, T)."""

    n_space: int
    n_time: int
    t_final: float

    def __post_init__(self) -> None:
        if self.n_space < 2:
            raise ValueError(f"n_space must be >= 2, got {self.n_space}")
        if self.n_time < 1:
            raise ValueError(f"n_time must be >= 1, got {self.n_time}")
        if not self.t_final > 0.0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")

    @property
    def h(self) -> float:
        return 1.0 / self.n_space

    @property
    def tau(self) -> float:
        return self.t_final / self.n_time

    @property
    def n_nodes(self) -> int:
        return self.n_space + 1

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_space + 1)

    @property
    def cell_midpoints(self) -> np.ndarray:
        x = self.nodes
        return 0.5 * (x[:-1] + x[1:])

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.n_time + 1)

    def node_weights(self) -> np.ndarray:
        """Trapezoid weights in space (without the factor h)."""
        m = np.ones(self.n_space + 1)
        m[0] = m[-1] = 0.5
        return m

    def time_weights(self) -> np.ndarray:
        """Trapezoid weights in time (without the factor tau)."""
        w = np.ones(self.n_time + 1)
        w[0] = w[-1] = 0.5
        return w

    def check_nodal(self, *arrays: np.ndarray) -> None:
        for a in arrays:
            if a.shape[-1] != self.n_space + 1:
                raise ShapeError(
                    f"expected {self.n_space + 1} nodal values, got shape {a.shape}"
                )

    def check_trajectory(self, *arrays: np.ndarray) -> None:
        for a in arrays:
            if a.shape != (self.n_time + 1, self.n_space + 1):
                raise ShapeError(
                    f"expected trajectory shape {(self.n_time + 1, self.n_space + 1)},"
                    f" got {a.shape}"
                )


# ---------------------------------------------------------------------------
# nodal <-> cell operators (G is the cell gradient; transposes are exact)
# ---------------------------------------------------------------------------


def cell_gradient(w: np.ndarray, h: float) -> np.ndarray:
    """Forward difference per cell: (w[i+1] - w[i]) / h."""
    return np.diff(w, axis=-1) / h


def cell_gradient_t(q: np.ndarray, h: float) -> np.ndarray:
    """Euclidean transpose of :func:`cell_gradient` (cells -> nodes)."""
    out = np.zeros(q.shape[:-1] + (q.shape[-1] + 1,))
    out[..., :-1] -= q
    out[..., 1:] += q
    return out / h


def cell_average(w: np.ndarray) -> np.ndarray:
    """Midpoint value per cell from nodal values."""
    return 0.5 * (w[..., :-1] + w[..., 1:])


def cell_average_t(q: np.ndarray) -> np.ndarray:
    """Euclidean transpose of :func:`cell_average`."""
    out = np.zeros(q.shape[:-1] + (q.shape[-1] + 1,))
    out[..., :-1] += 0.5 * q
    out[..., 1:] += 0.5 * q
    return out


def node_from_cell(q: np.ndarray) -> np.ndarray:
    """Nodal value as the mean of adjacent cell values (one-sided at ends)."""
    n_cells = q.shape[-1]
    out = np.empty(q.shape[:-1] + (n_cells + 1,))
    out[..., 0] = q[..., 0]
    out[..., -1] = q[..., -1]
    out[..., 1:-1] = 0.5 * (q[..., :-1] + q[..., 1:])
    return out


def node_from_cell_t(v: np.ndarray) -> np.ndarray:
    """Euclidean transpose of :func:`node_from_cell` (nodes -> cells)."""
    n_cells = v.shape[-1] - 1
    out = np.zeros(v.shape[:-1] + (n_cells,))
    out += 0.5 * v[..., :-1]
    out += 0.5 * v[..., 1:]
    out[..., 0] += 0.5 * v[..., 0]
    out[..., -1] += 0.5 * v[..., -1]
    return out


# ---------------------------------------------------------------------------
# stiffness / mass helpers
# ---------------------------------------------------------------------------


def lumped_mass(grid: Grid) -> np.ndarray:
    """Diagonal of the lumped P1 mass matrix (length n_space + 1)."""
    return grid.h * grid.node_weights()


def apply_stiffness(coeff_cells: np.ndarray, w: np.ndarray, h: float) -> np.ndarray:
    """Apply K(c) = G^T diag(h c) G to nodal values."""
    return cell_gradient_t(h * coeff_cells * cell_gradient(w, h), h)


def stiffness_band(coeff_cells: np.ndarray, h: float) -> np.ndarray:
    """Symmetric band (2 x n_nodes) of K(c) for use with solveh_banded."""
    n_nodes = coeff_cells.shape[-1] + 1
    band = np.zeros((2, n_nodes))
    band[1, :-1] += coeff_cells / h
    band[1, 1:] += coeff_cells / h
    band[0, 1:] = -coeff_cells / h
    return band


def solve_spd_banded(band: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a symmetric positive definite tridiagonal system."""
    return solveh_banded(band, rhs, lower=False)


def add_diagonal(band: np.ndarray, diag: np.ndarray) -> np.ndarray:
    out = band.copy()
    out[1] += diag
    return out


def quad_space(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Trapezoid quadrature of nodal values over the spatial domain."""
    return grid.h * np.tensordot(values, grid.node_weights(), axes=([-1], [0]))


def inner_space(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return quad_space(grid, a * b)


def norm_space(grid: Grid, a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(quad_space(grid, a * a), 0.0))


def inner_spacetime(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """Trapezoid-in-time, trapezoid-in-space inner product on trajectories."""
    per_level = inner_space(grid, a, b)
    return float(grid.tau * np.dot(grid.time_weights(), per_level))


def norm_spacetime(grid: Grid, a: np.ndarray) -> float:
    return float(np.sqrt(max(inner_spacetime(grid, a, a), 0.0)))
