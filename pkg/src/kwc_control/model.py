"""Core data types, the regularized absolute value family, energies and cost.

The model couples an order parameter eta (Neumann boundary) with an
orientation angle theta (homogeneous Dirichlet boundary) on (0, 1).  The
regularization f_eps(xi) = sqrt(eps^2 + xi^2) smooths the singular |xi| flux;
its derivatives feed the linearized and adjoint solvers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import mesh
from .errors import ConfigurationError, ShapeError, SubdifferentialPointError
from .mesh import Grid


# ---------------------------------------------------------------------------
# regularized absolute value family
# ---------------------------------------------------------------------------


def f_eps(eps: float, xi):
    """sqrt(eps^2 + xi^2); equals |xi| at eps = 0."""
    if eps < 0.0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    return np.sqrt(eps * eps + np.square(xi))


def f_eps_prime(eps: float, xi):
    """Derivative xi / sqrt(eps^2 + xi^2), always in [-1, 1]."""
    if eps < 0.0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if eps == 0.0 and np.any(np.asarray(xi) == 0.0):
        raise SubdifferentialPointError(
            "derivative of |xi| at xi = 0 is set-valued; use a sign selection"
        )
    return xi / np.sqrt(eps * eps + np.square(xi))


def f_eps_second(eps: float, xi):
    """Second derivative eps^2 / (eps^2 + xi^2)^(3/2), nonnegative."""
    if eps < 0.0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if eps == 0.0 and np.any(np.asarray(xi) == 0.0):
        raise SubdifferentialPointError(
            "second derivative of |xi| at xi = 0 is undefined"
        )
    s = eps * eps + np.square(xi)
    return eps * eps / (s * np.sqrt(s))


# ---------------------------------------------------------------------------
# field containers
# ---------------------------------------------------------------------------


@dataclass
class FieldPair:
    """Space-time trajectory of a coupled pair of nodal fields.

    ``first`` is the eta-like component (Neumann), ``second`` the theta-like
    component (Dirichlet); both have shape (n_time + 1, n_space + 1).
    """

    first: np.ndarray
    second: np.ndarray

    def __post_init__(self) -> None:
        self.first = np.asarray(self.first, dtype=float)
        self.second = np.asarray(self.second, dtype=float)
        if self.first.shape != self.second.shape or self.first.ndim != 2:
            raise ShapeError(
                f"components must share a 2-D shape, got {self.first.shape} "
                f"and {self.second.shape}"
            )

    def validate(self, grid: Grid, dirichlet_tol: float = 0.0) -> None:
        grid.check_trajectory(self.first, self.second)
        if not (np.all(np.isfinite(self.first)) and np.all(np.isfinite(self.second))):
            raise ValueError("field pair contains non-finite entries")
        bc = max(np.abs(self.second[:, 0]).max(), np.abs(self.second[:, -1]).max())
        if bc > dirichlet_tol:
            raise ValueError(
                f"second component violates Dirichlet ends by {bc:.3e}"
            )

    def copy(self) -> "FieldPair":
        return FieldPair(self.first.copy(), self.second.copy())

    @staticmethod
    def zeros(grid: Grid) -> "FieldPair":
        shape = (grid.n_time + 1, grid.n_space + 1)
        return FieldPair(np.zeros(shape), np.zeros(shape))


@dataclass
class ControlPair:
    """Space-time forcing pair [u, v] on the full grid."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ShapeError(
                f"components must share a 2-D shape, got {self.u.shape} "
                f"and {self.v.shape}"
            )

    def validate(self, grid: Grid) -> None:
        grid.check_trajectory(self.u, self.v)
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ValueError("control pair contains non-finite entries")

    def copy(self) -> "ControlPair":
        return ControlPair(self.u.copy(), self.v.copy())

    @staticmethod
    def zeros(grid: Grid) -> "ControlPair":
        shape = (grid.n_time + 1, grid.n_space + 1)
        return ControlPair(np.zeros(shape), np.zeros(shape))


ScalarFunc = Callable[[np.ndarray], np.ndarray]


@dataclass
class ModelParams:
    """Physical coefficients, cost weights, initial data and targets."""

    nu: float
    eps: float
    delta_star: float
    m_eta: float
    m_theta: float
    m_u: float
    m_v: float
    g: ScalarFunc
    g_prime: ScalarFunc
    big_g: ScalarFunc
    alpha: ScalarFunc
    alpha_prime: ScalarFunc
    alpha_second: ScalarFunc
    alpha0: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dt_alpha0: Callable[[np.ndarray, np.ndarray], np.ndarray]
    eta0: np.ndarray
    theta0: np.ndarray
    eta_ad: np.ndarray = None
    theta_ad: np.ndarray = None
    eps_floor: float = 1.0e-8
    inner_tol: float = 1.0e-10
    m_max: int = 100
    max_tau_halvings: int = 5
    working_range: tuple = (-10.0, 10.0)

    @property
    def eps_effective(self) -> float:
        return max(self.eps, self.eps_floor)

    def validate(self, grid: Grid, n_samples: int = 257) -> None:
        """Check the structural assumptions on a sampled working range."""
        if not self.nu > 0.0:
            raise ConfigurationError(f"nu must be positive, got {self.nu}")
        if self.eps < 0.0:
            raise ConfigurationError(f"eps must be nonnegative, got {self.eps}")
        if not 0.0 < self.delta_star < 1.0:
            raise ConfigurationError(
                f"delta_star must lie in (0, 1), got {self.delta_star}"
            )
        for name in ("m_eta", "m_theta", "m_u", "m_v"):
            if getattr(self, name) < 0.0:
                raise ConfigurationError(f"{name} must be nonnegative")
        lo, hi = self.working_range
        s = np.linspace(lo, hi, n_samples)
        if np.any(self.alpha(s) < self.delta_star - 1e-12):
            raise ConfigurationError("alpha(s) < delta_star on the working range")
        if abs(float(np.asarray(self.alpha_prime(0.0)))) > 1e-12:
            raise ConfigurationError("alpha_prime(0) must vanish")
        if np.any(self.alpha_second(s) < -1e-12):
            raise ConfigurationError("alpha_second < 0 on the working range")
        if np.any(self.big_g(s) < -1e-12):
            raise ConfigurationError("G must be nonnegative on the working range")
        step = 1e-4
        fd = (self.big_g(s + step) - self.big_g(s - step)) / (2.0 * step)
        if np.max(np.abs(fd - self.g(s))) > 1e-5 * (1.0 + np.max(np.abs(self.g(s)))):
            raise ConfigurationError("numerical derivative of G does not match g")
        tt, xx = np.meshgrid(grid.times, grid.nodes, indexing="ij")
        a0 = self.alpha0(tt, xx)
        if np.any(a0 < self.delta_star - 1e-12):
            raise ConfigurationError("alpha0 < delta_star on the grid")
        grid.check_nodal(np.asarray(self.eta0), np.asarray(self.theta0))
        th0 = np.asarray(self.theta0)
        if abs(th0[0]) > 0.0 or abs(th0[-1]) > 0.0:
            raise ConfigurationError("theta0 must vanish at both ends")
        if not np.all(np.isfinite(np.asarray(self.eta0))):
            raise ConfigurationError("eta0 contains non-finite entries")
        if self.eta_ad is not None:
            grid.check_trajectory(np.asarray(self.eta_ad), np.asarray(self.theta_ad))

    def alpha0_on_grid(self, grid: Grid) -> np.ndarray:
        tt, xx = np.meshgrid(grid.times, grid.nodes, indexing="ij")
        return np.asarray(self.alpha0(tt, xx), dtype=float) * np.ones_like(tt)

    def dt_alpha0_on_grid(self, grid: Grid) -> np.ndarray:
        tt, xx = np.meshgrid(grid.times, grid.nodes, indexing="ij")
        return np.asarray(self.dt_alpha0(tt, xx), dtype=float) * np.ones_like(tt)


# ---------------------------------------------------------------------------
# energies and cost
# ---------------------------------------------------------------------------


def energy_phi(params: ModelParams, grid: Grid, eta: np.ndarray,
               theta: np.ndarray) -> float:
    """Regularized free energy at a single time level.

    (1/2)int |d_x eta|^2 + (1/2)int eta^2
    + (1/2)int (nu f_eps(d_x theta) + alpha(eta)/nu)^2,
    with cell-midpoint quadrature for gradient terms and trapezoid for nodal
    terms.
    """
    grid.check_nodal(eta, theta)
    h = grid.h
    deta = mesh.cell_gradient(eta, h)
    dtheta = mesh.cell_gradient(theta, h)
    grad_term = 0.5 * h * np.sum(deta * deta)
    mass_term = 0.5 * mesh.quad_space(grid, eta * eta)
    alpha_cells = mesh.cell_average(params.alpha(eta))
    pack = params.nu * f_eps(params.eps, dtheta) + alpha_cells / params.nu
    singular_term = 0.5 * h * np.sum(pack * pack)
    return float(grad_term + mass_term + singular_term)


def potential_g_hat(params: ModelParams, grid: Grid, eta: np.ndarray,
                    theta: np.ndarray) -> float:
    """Nonconvex remainder int (G(eta) - eta^2/2 - alpha(eta)^2/(2 nu^2))."""
    grid.check_nodal(eta, theta)
    a = params.alpha(eta)
    integrand = params.big_g(eta) - 0.5 * eta * eta - a * a / (2.0 * params.nu ** 2)
    return float(mesh.quad_space(grid, integrand))


def cost_J(params: ModelParams, grid: Grid, state: FieldPair,
           control: ControlPair) -> float:
    """Quadratic tracking cost over the space-time cylinder.

    (m_eta/2)|eta - eta_ad|^2 + (m_theta/2)|theta - theta_ad|^2
    + (m_u/2)|u|^2 + (m_v/2)|v|^2, trapezoid quadrature in both variables.
    """
    state.validate(grid, dirichlet_tol=np.inf)
    control.validate(grid)
    total = 0.0
    if params.m_eta > 0.0:
        r = state.first - np.asarray(params.eta_ad)
        total += 0.5 * params.m_eta * mesh.inner_spacetime(grid, r, r)
    if params.m_theta > 0.0:
        r = state.second - np.asarray(params.theta_ad)
        total += 0.5 * params.m_theta * mesh.inner_spacetime(grid, r, r)
    if params.m_u > 0.0:
        total += 0.5 * params.m_u * mesh.inner_spacetime(grid, control.u, control.u)
    if params.m_v > 0.0:
        total += 0.5 * params.m_v * mesh.inner_spacetime(grid, control.v, control.v)
    return float(total)
