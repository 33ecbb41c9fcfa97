"""Linearization, exact discrete adjoint, and cost gradient.

The linearized solver is the exact Jacobian of the semi-implicit forward
scheme, and the adjoint sweep is its algebraic transpose in the discrete
space-time inner product.  This pairing makes the conjugacy identity hold
to machine precision and keeps finite-difference gradient checks clean;
the continuous adjoint equations are then satisfied to O(tau + h^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mesh
from .errors import ShapeError
from .linear_p import Sextuplet
from .mesh import Grid
from .model import ControlPair, FieldPair, ModelParams, cost_J, f_eps, \
    f_eps_prime, f_eps_second
from .state import solve_state


def reverse_time(obj):
    """Flip the time axis; an involution on every supported container."""
    if isinstance(obj, FieldPair):
        return FieldPair(obj.first[::-1].copy(), obj.second[::-1].copy())
    if isinstance(obj, ControlPair):
        return ControlPair(obj.u[::-1].copy(), obj.v[::-1].copy())
    if isinstance(obj, Sextuplet):
        return obj.reverse_time()
    if isinstance(obj, np.ndarray):
        return obj[::-1].copy()
    raise TypeError(f"cannot reverse time on {type(obj).__name__}")


@dataclass
class LinearizationCoeffs:
    """Frozen coefficients of the linearization around a state trajectory.

    ``sext`` carries the sampled sextuplet (a = alpha0, b = 0,
    mu = alpha''(eta) f_eps(d_x theta), lam = g'(eta),
    omega = alpha'(eta) f_eps'(d_x theta), A = alpha(eta) f_eps''(d_x
    theta)); the state itself is kept so the exact tangent of the forward
    scheme can be replayed.
    """

    sext: Sextuplet
    state: FieldPair
    params: ModelParams
    grid: Grid


@dataclass
class AdjointCoeffs:
    """Time-reversed sextuplet: [a, b] = reversed [alpha0, -dt alpha0]."""

    sext: Sextuplet


def linearization_coeffs(params: ModelParams, grid: Grid,
                         state: FieldPair) -> LinearizationCoeffs:
    state.validate(grid, dirichlet_tol=1e-12)
    eps = params.eps_effective
    h = grid.h
    slope = mesh.cell_gradient(state.second, h)
    f_bar = mesh.node_from_cell(f_eps(eps, slope))
    fp_bar = mesh.node_from_cell(f_eps_prime(eps, slope))
    fs_bar = mesh.node_from_cell(f_eps_second(eps, slope))
    eta = state.first
    sext = Sextuplet(
        a=params.alpha0_on_grid(grid),
        b=np.zeros_like(eta),
        mu=params.alpha_second(eta) * f_bar,
        lam=params.g_prime(eta),
        omega=params.alpha_prime(eta) * fp_bar,
        big_a=params.alpha(eta) * fs_bar,
    )
    return LinearizationCoeffs(sext=sext, state=state, params=params,
                               grid=grid)


def adjoint_coeffs(lin: LinearizationCoeffs) -> AdjointCoeffs:
    grid = lin.grid
    params = lin.params
    rev = lin.sext.reverse_time()
    rev.a = params.alpha0_on_grid(grid)[::-1].copy()
    rev.b = -params.dt_alpha0_on_grid(grid)[::-1].copy()
    rev.dt_a = None
    rev.dx_a = None
    rev.fill_derivatives(grid)
    return AdjointCoeffs(sext=rev)


class _SweepWorkspace:
    """Per-step arrays shared by the tangent and transpose sweeps."""

    def __init__(self, params: ModelParams, grid: Grid, state: FieldPair):
        eps_f = params.eps_effective
        h = grid.h
        n = grid.n_time
        eta = state.first
        theta = state.second
        self.grid = grid
        self.params = params
        self.md = mesh.lumped_mass(grid)
        slope = mesh.cell_gradient(theta, h)
        f_bar = mesh.node_from_cell(f_eps(params.eps, slope))
        # reaction linearization at every level
        self.c1 = params.g_prime(eta) + params.alpha_second(eta) * f_bar
        self.ap = params.alpha_prime(eta)
        self.fp = f_eps_prime(eps_f, slope)
        self.a0 = params.alpha0_on_grid(grid)
        self.eta_band = mesh.add_diagonal(
            grid.tau * mesh.stiffness_band(np.ones(grid.n_space), h),
            self.md)
        self.z_bands = []
        tau = grid.tau
        for k in range(n + 1):
            alpha_cells = mesh.cell_average(params.alpha(eta[k]))
            curvature = params.nu ** 2 \
                + alpha_cells * f_eps_second(eps_f, slope[k])
            band = mesh.add_diagonal(
                tau * mesh.stiffness_band(curvature, h),
                self.md * self.a0[k])
            self.z_bands.append(band)
        self.alpha_cells = [mesh.cell_average(params.alpha(eta[k]))
                            for k in range(n + 1)]

    def solve_eta(self, rhs: np.ndarray) -> np.ndarray:
        return mesh.solve_spd_banded(self.eta_band, rhs)

    def solve_z(self, k: int, rhs: np.ndarray) -> np.ndarray:
        band = self.z_bands[k]
        n_nodes = band.shape[1]
        sub = np.zeros((2, n_nodes - 2))
        sub[1] = band[1, 1:-1]
        sub[0, 1:] = band[0, 2:-1]
        out = np.zeros(n_nodes)
        out[1:-1] = mesh.solve_spd_banded(sub, rhs[1:-1])
        return out


def tangent_apply(ws: _SweepWorkspace, forcing_h: np.ndarray,
                  forcing_k: np.ndarray) -> FieldPair:
    """Exact directional derivative of the forward scheme.

    ``forcing_h`` / ``forcing_k`` are the right-hand sides already scaled
    by the control weights; zero initial data.
    """
    grid = ws.grid
    tau = grid.tau
    h = grid.h
    md = ws.md
    n = grid.n_time
    chi = np.zeros((n + 1, grid.n_space + 1))
    gam = np.zeros_like(chi)
    for k in range(1, n + 1):
        coupling = ws.ap[k - 1] * mesh.node_from_cell(
            ws.fp[k - 1] * mesh.cell_gradient(gam[k - 1], h))
        rhs = md * (chi[k - 1] - tau * (ws.c1[k - 1] * chi[k - 1] + coupling)
                    + tau * forcing_h[k])
        chi[k] = ws.solve_eta(rhs)
        u_chi = mesh.cell_gradient_t(
            h * ws.fp[k] * mesh.cell_average(ws.ap[k] * chi[k]), h)
        rhs_z = md * (ws.a0[k] * gam[k - 1] + tau * forcing_k[k]) \
            - tau * u_chi
        gam[k] = ws.solve_z(k, rhs_z)
    return FieldPair(chi, gam)


def transpose_apply(ws: _SweepWorkspace, lam: np.ndarray,
                    sig: np.ndarray) -> tuple:
    """Algebraic transpose of :func:`tangent_apply`.

    ``lam`` and ``sig`` are Euclidean covectors per level (levels 1..n
    used).  Returns (q, y) with q[0] = y[0] = 0.
    """
    grid = ws.grid
    tau = grid.tau
    h = grid.h
    md = ws.md
    n = grid.n_time
    q = np.zeros((n + 1, grid.n_space + 1))
    y = np.zeros_like(q)
    for k in range(n, 0, -1):
        rhs_y = sig[k].copy()
        if k < n:
            rhs_y += md * ws.a0[k + 1] * y[k + 1]
            rhs_y -= tau * mesh.cell_gradient_t(
                ws.fp[k] * mesh.node_from_cell_t(
                    ws.ap[k] * md * q[k + 1]), h)
        y[k] = ws.solve_z(k, rhs_y)
        u_t_y = ws.ap[k] * mesh.cell_average_t(
            h * ws.fp[k] * mesh.cell_gradient(y[k], h))
        rhs_q = lam[k] - tau * u_t_y
        if k < n:
            rhs_q += md * (1.0 - tau * ws.c1[k]) * q[k + 1]
        q[k] = ws.solve_eta(rhs_q)
    return q, y


def solve_linearized(coeffs: LinearizationCoeffs, grid: Grid,
                     h_dir: np.ndarray, k_dir: np.ndarray) -> FieldPair:
    """Linearized state response to a control direction [h, k].

    Solves the tangent system with forcing [M_u h, M_v k] and zero initial
    data.
    """
    if grid is not coeffs.grid and (grid.n_space != coeffs.grid.n_space
                                    or grid.n_time != coeffs.grid.n_time):
        raise ShapeError("direction grid does not match coefficient grid")
    params = coeffs.params
    ws = _SweepWorkspace(params, grid, coeffs.state)
    h_dir = np.asarray(h_dir, dtype=float)
    k_dir = np.asarray(k_dir, dtype=float)
    grid.check_trajectory(h_dir, k_dir)
    return tangent_apply(ws, params.m_u * h_dir, params.m_v * k_dir)


def _tracking_covectors(params: ModelParams, grid: Grid,
                        state: FieldPair) -> tuple:
    md = mesh.lumped_mass(grid)
    tau = grid.tau
    w = grid.time_weights()
    lam = np.zeros_like(state.first)
    sig = np.zeros_like(state.second)
    for k in range(1, grid.n_time + 1):
        lam[k] = w[k] * tau * md * params.m_eta \
            * (state.first[k] - np.asarray(params.eta_ad)[k])
        sig[k] = w[k] * tau * md * params.m_theta \
            * (state.second[k] - np.asarray(params.theta_ad)[k])
    return lam, sig


def solve_adjoint(params: ModelParams, grid: Grid,
                  state: FieldPair) -> FieldPair:
    """Backward multiplier pair [p, z] for the tracking residuals.

    Computed by the exact transpose sweep and reported on a half-step
    shifted ladder so the terminal levels are exactly zero, matching the
    continuous terminal condition; the shift is O(tau).
    """
    lam, sig = _tracking_covectors(params, grid, state)
    ws = _SweepWorkspace(params, grid, state)
    q, y = transpose_apply(ws, lam, sig)
    w = grid.time_weights()
    p = np.zeros_like(q)
    z = np.zeros_like(y)
    for k in range(grid.n_time):
        p[k] = q[k + 1] / w[k + 1]
        z[k] = y[k + 1] / w[k + 1]
    return FieldPair(p, z)


def gradient(params: ModelParams, grid: Grid,
             control: ControlPair) -> tuple:
    """Cost gradient [M_u(u + p), M_v(v + z)] via one forward and one
    transpose sweep; returns (ControlPair, diagnostics dict)."""
    state, reports = solve_state(params, grid, control)
    lam, sig = _tracking_covectors(params, grid, state)
    ws = _SweepWorkspace(params, grid, state)
    q, y = transpose_apply(ws, lam, sig)
    w = grid.time_weights()
    p_star = np.zeros_like(q)
    z_star = np.zeros_like(y)
    for k in range(1, grid.n_time + 1):
        p_star[k] = q[k] / w[k]
        z_star[k] = y[k] / w[k]
    grad = ControlPair(params.m_u * (control.u + p_star),
                       params.m_v * (control.v + z_star))
    cost = cost_J(params, grid, state, control)
    diag = {
        "cost": cost,
        "state": state,
        "adjoint": FieldPair(p_star, z_star),
        "grad_norm": np.sqrt(
            mesh.inner_spacetime(grid, grad.u, grad.u)
            + mesh.inner_spacetime(grid, grad.v, grad.v)),
        "adjoint_norm": np.sqrt(
            mesh.inner_spacetime(grid, p_star, p_star)
            + mesh.inner_spacetime(grid, z_star, z_star)),
        "step_reports": reports,
    }
    return grad, diag


def conjugacy_check(params: ModelParams, grid: Grid, state: FieldPair,
                    trials: int = 20, seed: int = 0) -> float:
    """Max relative defect of (P* y, x) = (y, P x) over random trials."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    ws = _SweepWorkspace(params, grid, state)
    md = mesh.lumped_mass(grid)
    tau = grid.tau
    w = grid.time_weights()
    shape = (grid.n_time + 1, grid.n_space + 1)
    worst = 0.0
    for _ in range(trials):
        x1 = rng.standard_normal(shape)
        x2 = rng.standard_normal(shape)
        y1 = rng.standard_normal(shape)
        y2 = rng.standard_normal(shape)
        forward = tangent_apply(ws, params.m_u * x1, params.m_v * x2)
        lam = (w[:, None] * tau * params.m_u) * (md[None, :] * y1)
        sig = (w[:, None] * tau * params.m_v) * (md[None, :] * y2)
        q, y = transpose_apply(ws, lam, sig)
        star1 = q / w[:, None]
        star2 = y / w[:, None]
        lhs = mesh.inner_spacetime(grid, star1, x1) \
            + mesh.inner_spacetime(grid, star2, x2)
        rhs = mesh.inner_spacetime(grid, y1, forward.first) \
            + mesh.inner_spacetime(grid, y2, forward.second)
        scale = max(abs(lhs), abs(rhs), 1e-300)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst
