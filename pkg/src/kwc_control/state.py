"""Time stepping for the coupled order-parameter / orientation system.

Two schemes are provided.  ``solve_state`` is a fast semi-implicit splitting:
the eta step treats diffusion implicitly and the reaction terms explicitly,
the theta step resolves the regularized singular diffusion with lagged
(Kacanov) inner iterations.  ``solve_state_minmove`` is the implicit
minimizing-movement scheme, where every step minimizes a shifted-convex
functional to tight tolerance; it is slower and serves as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from . import mesh
from .errors import ConfigurationError, NumericalError
from .mesh import Grid
from .model import ControlPair, FieldPair, ModelParams, energy_phi, f_eps, \
    f_eps_prime, f_eps_second, potential_g_hat


@dataclass
class ThetaInnerReport:
    """Outcome of the lagged-diffusivity loop inside one theta step."""

    iterations: int
    residual: float
    converged: bool


@dataclass
class StateStepReport:
    """Per-step diagnostics for the semi-implicit trajectory."""

    step_index: int
    inner_iterations: int
    inner_residual: float
    energy_phi: float
    energy_total: float
    dissipation_residual: float


def _solve_dirichlet(band: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve the interior block of a tridiagonal SPD system, zero ends."""
    n_nodes = band.shape[1]
    sub = np.zeros((2, n_nodes - 2))
    sub[1] = band[1, 1:-1]
    sub[0, 1:] = band[0, 2:-1]
    out = np.zeros(n_nodes)
    out[1:-1] = mesh.solve_spd_banded(sub, rhs[1:-1])
    return out


def step_eta(params: ModelParams, grid: Grid, eta_prev: np.ndarray,
             theta_prev: np.ndarray, u_slice: np.ndarray,
             tau: float) -> np.ndarray:
    """Semi-implicit step for the order parameter (Neumann ends).

    Diffusion is implicit; the reaction g(eta) and the coupling
    alpha'(eta) f_eps(d_x theta) are taken at the previous level.
    """
    if not tau > 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    grid.check_nodal(eta_prev, theta_prev, u_slice)
    md = mesh.lumped_mass(grid)
    f_bar = mesh.node_from_cell(
        f_eps(params.eps, mesh.cell_gradient(theta_prev, grid.h)))
    explicit = params.m_u * u_slice - params.g(eta_prev) \
        - params.alpha_prime(eta_prev) * f_bar
    rhs = md * (eta_prev + tau * explicit)
    band = tau * mesh.stiffness_band(np.ones(grid.n_space), grid.h)
    band = mesh.add_diagonal(band, md)
    eta_new = mesh.solve_spd_banded(band, rhs)
    if not np.all(np.isfinite(eta_new)):
        raise NumericalError("eta step produced non-finite values")
    return eta_new


def _theta_nonlinear_solve(grid: Grid, mass_diag: np.ndarray,
                           flux_scale: float, alpha_cells: np.ndarray,
                           nu: float, eps_eff: float, rhs: np.ndarray,
                           theta_init: np.ndarray, tol: float,
                           m_max: int) -> tuple:
    """Solve mass*theta + flux_scale * div-form flux(theta) = rhs (Dirichlet).

    The flux is nu^2 d_x theta + alpha f_eps'(d_x theta).  Runs lagged
    (Kacanov) sweeps until the iterate is close, then polishes with Newton
    steps; both phases are single SPD tridiagonal solves.
    """
    h = grid.h
    theta = theta_init.copy()
    theta[0] = theta[-1] = 0.0

    def objective(w):
        slope = mesh.cell_gradient(w, h)
        convex = h * np.sum(0.5 * nu ** 2 * slope * slope
                            + alpha_cells * f_eps(eps_eff, slope))
        return float(0.5 * np.dot(mass_diag * w, w)
                     + flux_scale * convex - np.dot(rhs, w))

    obj = objective(theta)
    update = np.inf
    iterations = 0
    for m in range(1, m_max + 1):
        slope = mesh.cell_gradient(theta, h)
        if m <= 3 or update > 1.0e-2:
            diffusivity = nu ** 2 + alpha_cells / np.sqrt(
                eps_eff * eps_eff + slope * slope)
            band = flux_scale * mesh.stiffness_band(diffusivity, h)
            band = mesh.add_diagonal(band, mass_diag)
            theta_next = _solve_dirichlet(band, rhs)
            delta = theta_next - theta
        else:
            flux = nu ** 2 * slope + alpha_cells * f_eps_prime(eps_eff, slope)
            residual = mass_diag * theta \
                + flux_scale * mesh.cell_gradient_t(h * flux, h) - rhs
            curvature = nu ** 2 + alpha_cells * f_eps_second(eps_eff, slope)
            band = flux_scale * mesh.stiffness_band(curvature, h)
            band = mesh.add_diagonal(band, mass_diag)
            delta = -_solve_dirichlet(band, residual)
            # the step functional is strictly convex; backtrack until the
            # full or damped Newton step decreases it
            scale = 1.0
            for _ in range(40):
                candidate = objective(theta + scale * delta)
                if candidate <= obj:
                    break
                scale *= 0.5
            delta = scale * delta
            theta_next = theta + delta
        update = float(np.max(np.abs(delta)) / (1.0 + np.max(np.abs(theta_next))))
        theta = theta_next
        obj = objective(theta)
        iterations = m
        if update < tol:
            break
    converged = update < tol
    if not np.all(np.isfinite(theta)):
        raise NumericalError("theta solve produced non-finite values")
    return theta, iterations, update, converged


def step_theta(params: ModelParams, grid: Grid, theta_prev: np.ndarray,
               eta_new: np.ndarray, v_slice: np.ndarray, tau: float,
               t_new: float = 0.0) -> tuple:
    """Implicit step for the orientation angle via lagged diffusivity.

    The nonlinear flux alpha(eta) f_eps'(d_x theta) + nu^2 d_x theta is
    linearized as D * d_x theta with D refreshed from the previous inner
    iterate (with a Newton polish close to the limit); each inner pass is
    one SPD tridiagonal solve with Dirichlet ends pinned to zero.
    """
    if not tau > 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    grid.check_nodal(theta_prev, eta_new, v_slice)
    md = mesh.lumped_mass(grid)
    a0 = np.asarray(params.alpha0(np.full(grid.n_space + 1, t_new), grid.nodes),
                    dtype=float) * np.ones(grid.n_space + 1)
    alpha_cells = mesh.cell_average(params.alpha(eta_new))
    rhs = md * a0 * theta_prev + tau * md * (params.m_v * v_slice)
    theta, iterations, residual, converged = _theta_nonlinear_solve(
        grid, md * a0, tau, alpha_cells, params.nu, params.eps_effective,
        rhs, theta_prev, params.inner_tol, params.m_max)
    return theta, ThetaInnerReport(iterations, residual, converged)


def _advance_theta(params: ModelParams, grid: Grid, theta_prev: np.ndarray,
                   eta_new: np.ndarray, v_slice: np.ndarray, tau: float,
                   t_new: float) -> tuple:
    """Theta step with the local tau-halving retry policy."""
    theta, report = step_theta(params, grid, theta_prev, eta_new, v_slice,
                               tau, t_new)
    halvings = 0
    while not report.converged and halvings < params.max_tau_halvings:
        halvings += 1
        pieces = 2 ** halvings
        sub_tau = tau / pieces
        theta = theta_prev.copy()
        total_iter = 0
        ok = True
        for j in range(pieces):
            theta, rep = step_theta(params, grid, theta, eta_new, v_slice,
                                    sub_tau, t_new - tau + (j + 1) * sub_tau)
            total_iter += rep.iterations
            ok = ok and rep.converged
        report = ThetaInnerReport(total_iter, rep.residual, ok)
    if not report.converged:
        raise NumericalError(
            f"theta inner loop failed after {params.max_tau_halvings} "
            f"tau halvings (residual {report.residual:.3e})")
    return theta, report


def solve_state(params: ModelParams, grid: Grid,
                control: ControlPair) -> tuple:
    """Advance the full trajectory with the semi-implicit splitting.

    Returns (FieldPair, list of StateStepReport); each report carries the
    energy audit terms for the dissipation identity.
    """
    control.validate(grid)
    tau = grid.tau
    n = grid.n_time
    eta = np.empty((n + 1, grid.n_space + 1))
    theta = np.empty_like(eta)
    eta[0] = np.asarray(params.eta0, dtype=float)
    theta[0] = np.asarray(params.theta0, dtype=float)
    reports = []
    e_prev = energy_phi(params, grid, eta[0], theta[0]) \
        + potential_g_hat(params, grid, eta[0], theta[0])
    times = grid.times
    for k in range(1, n + 1):
        eta[k] = step_eta(params, grid, eta[k - 1], theta[k - 1],
                          control.u[k], tau)
        theta[k], inner = _advance_theta(params, grid, theta[k - 1], eta[k],
                                         control.v[k], tau, times[k])
        phi_k = energy_phi(params, grid, eta[k], theta[k])
        e_k = phi_k + potential_g_hat(params, grid, eta[k], theta[k])
        d_eta = eta[k] - eta[k - 1]
        d_theta = theta[k] - theta[k - 1]
        a0 = np.asarray(params.alpha0(np.full(grid.n_space + 1, times[k]),
                                      grid.nodes), dtype=float) \
            * np.ones(grid.n_space + 1)
        rate = (mesh.quad_space(grid, d_eta * d_eta)
                + mesh.quad_space(grid, a0 * d_theta * d_theta)) / tau
        work = mesh.inner_space(grid, params.m_u * control.u[k], d_eta) \
            + mesh.inner_space(grid, params.m_v * control.v[k], d_theta)
        residual = float(rate + e_k - e_prev - work)
        reports.append(StateStepReport(
            step_index=k, inner_iterations=inner.iterations,
            inner_residual=inner.residual, energy_phi=phi_k,
            energy_total=e_k, dissipation_residual=residual))
        e_prev = e_k
    return FieldPair(eta, theta), reports


# ---------------------------------------------------------------------------
# minimizing-movement scheme
# ---------------------------------------------------------------------------


def lipschitz_shift(params: ModelParams, n_samples: int = 4001) -> float:
    """Lipschitz bound for the nonconvex gradient part, sampled on the
    working range: 1 + |g'|_inf + nu^-2 |(alpha alpha')'|_inf."""
    lo, hi = params.working_range
    s = np.linspace(lo, hi, n_samples)
    gp = np.max(np.abs(params.g_prime(s)))
    cross = np.max(np.abs(params.alpha(s) * params.alpha_second(s)
                          + params.alpha_prime(s) ** 2))
    return float(1.0 + gp + cross / params.nu ** 2)


def _operator_bounds(params: ModelParams, grid: Grid) -> tuple:
    """(kappa0, a_star) for the time-derivative operator diag(1, alpha0)."""
    a0 = params.alpha0_on_grid(grid)
    da0 = params.dt_alpha0_on_grid(grid)
    kappa0 = min(1.0, float(a0.min()))
    a_star = max(1.0, float(np.abs(a0).max()), float(np.abs(da0).max()))
    return kappa0, a_star


def _eta_residual(params, grid, eta, eta_prev, theta, f_eta, tau, shift):
    """Euclidean residual of the eta row of the implicit step."""
    md = mesh.lumped_mass(grid)
    h = grid.h
    alpha_cells = mesh.cell_average(params.alpha(eta))
    pack = params.nu * f_eps(params.eps, mesh.cell_gradient(theta, h)) \
        + alpha_cells / params.nu
    r = md * (1.0 / tau + 2.0 * shift) * (eta - eta_prev)
    r += mesh.apply_stiffness(np.ones(grid.n_space), eta, h)
    r += params.alpha_prime(eta) * mesh.cell_average_t(h * pack) / params.nu
    r += md * (params.g(eta)
               - params.alpha(eta) * params.alpha_prime(eta) / params.nu ** 2)
    r -= md * f_eta
    return r


def _eta_jacobian_band(params, grid, eta, theta, tau, shift):
    """Tridiagonal Jacobian of ``_eta_residual`` in (3, n) banded form."""
    md = mesh.lumped_mass(grid)
    h = grid.h
    n_nodes = grid.n_space + 1
    sym = mesh.stiffness_band(np.ones(grid.n_space), h)
    ab = np.zeros((3, n_nodes))
    ab[0, 1:] = sym[0, 1:]
    ab[1] = sym[1]
    ab[2, :-1] = sym[0, 1:]
    alpha_cells = mesh.cell_average(params.alpha(eta))
    pack = params.nu * f_eps(params.eps, mesh.cell_gradient(theta, h)) \
        + alpha_cells / params.nu
    ap = params.alpha_prime(eta)
    diag = md * (1.0 / tau + 2.0 * shift)
    diag = diag + params.alpha_second(eta) \
        * mesh.cell_average_t(h * pack) / params.nu
    diag = diag + md * (params.g_prime(eta)
                        - (ap * ap + params.alpha(eta)
                           * params.alpha_second(eta)) / params.nu ** 2)
    # exact curvature of the packed term: (1/nu^2) diag(a') Avg^T h Avg diag(a')
    quarter = 0.25 * h / params.nu ** 2
    t_diag = np.zeros(n_nodes)
    t_diag[0] = t_diag[-1] = quarter
    t_diag[1:-1] = 2.0 * quarter
    t_off = quarter * np.ones(grid.n_space)
    ab[1] += diag + ap * ap * t_diag
    ab[0, 1:] += ap[:-1] * ap[1:] * t_off
    ab[2, :-1] += ap[:-1] * ap[1:] * t_off
    return ab


def _theta_residual(params, grid, theta, theta_prev, eta, f_theta, tau,
                    shift, a0):
    """Euclidean residual of the theta row, interior nodes only."""
    md = mesh.lumped_mass(grid)
    h = grid.h
    alpha_cells = mesh.cell_average(params.alpha(eta))
    flux = params.nu ** 2 * mesh.cell_gradient(theta, h) \
        + alpha_cells * f_eps_prime(params.eps_effective,
                                    mesh.cell_gradient(theta, h))
    r = md * ((a0 / tau + 2.0 * shift) * (theta - theta_prev) - f_theta)
    r += mesh.cell_gradient_t(h * flux, h)
    r[0] = r[-1] = 0.0
    return r


def solve_state_minmove(params: ModelParams, grid: Grid,
                        control: ControlPair, shift: float = None,
                        min_tol: float = 1.0e-9,
                        max_outer: int = 200) -> FieldPair:
    """Implicit trajectory by per-step minimization with convexity shift.

    Every step solves the inclusion
    (1/tau) A0(t_i)(w - w_prev) + 2 L (w - w_prev) + dPhi(w) + G(w) = f_i
    by alternating a Newton eta-block with a lagged-diffusivity theta-block
    until the combined variational gradient norm drops below ``min_tol``.
    Forcing is the trapezoid average of the two bounding control levels.
    """
    control.validate(grid)
    kappa0, a_star = _operator_bounds(params, grid)
    shift_l0 = lipschitz_shift(params)
    shift = float(shift) if shift is not None else shift_l0 + 1.0
    tau = grid.tau
    bound = (5.0 * shift + a_star) * tau
    if not bound < kappa0:
        raise ConfigurationError(
            f"step-size condition (5L + A*) tau < kappa0 violated: "
            f"(5*{shift:.6g} + {a_star:.6g}) * {tau:.6g} = {bound:.6g} "
            f">= kappa0 = {kappa0:.6g}; decrease tau or the working range")
    md = mesh.lumped_mass(grid)
    n = grid.n_time
    eta = np.empty((n + 1, grid.n_space + 1))
    theta = np.empty_like(eta)
    eta[0] = np.asarray(params.eta0, dtype=float)
    theta[0] = np.asarray(params.theta0, dtype=float)
    times = grid.times
    for k in range(1, n + 1):
        f_eta = 0.5 * params.m_u * (control.u[k - 1] + control.u[k])
        f_theta = 0.5 * params.m_v * (control.v[k - 1] + control.v[k])
        a0 = np.asarray(params.alpha0(np.full(grid.n_space + 1, times[k]),
                                      grid.nodes), dtype=float) \
            * np.ones(grid.n_space + 1)
        e = eta[k - 1].copy()
        t = theta[k - 1].copy()
        gnorm = np.inf
        for outer in range(max_outer):
            # eta block: damped Newton on the scalar residual
            for newton in range(60):
                r = _eta_residual(params, grid, e, eta[k - 1], t, f_eta,
                                  tau, shift)
                if np.max(np.abs(r / md)) < 0.05 * min_tol:
                    break
                ab = _eta_jacobian_band(params, grid, e, t, tau, shift)
                e = e - solve_banded((1, 1), ab, r)
            # theta block: lagged diffusivity with shifted mass
            alpha_cells = mesh.cell_average(params.alpha(e))
            rhs = md * ((a0 / tau + 2.0 * shift) * theta[k - 1] + f_theta)
            t, _, _, _ = _theta_nonlinear_solve(
                grid, md * (a0 / tau + 2.0 * shift), 1.0, alpha_cells,
                params.nu, params.eps_effective, rhs, t,
                0.01 * params.inner_tol, params.m_max)
            r_eta = _eta_residual(params, grid, e, eta[k - 1], t, f_eta,
                                  tau, shift)
            r_theta = _theta_residual(params, grid, t, theta[k - 1], e,
                                      f_theta, tau, shift, a0)
            gnorm = math.sqrt(
                float(mesh.quad_space(grid, (r_eta / md) ** 2))
                + float(mesh.quad_space(grid, (r_theta / md) ** 2)))
            if gnorm <= min_tol:
                break
        if gnorm > min_tol:
            raise NumericalError(
                f"minimizing-movement step {k} stalled at gradient norm "
                f"{gnorm:.3e} > {min_tol:.1e}")
        eta[k] = e
        theta[k] = t
    return FieldPair(eta, theta)


def minmove_energy_audit(params: ModelParams, grid: Grid, traj: FieldPair,
                         control: ControlPair, shift: float = None) -> dict:
    """Evaluate the per-step energy inequality of the implicit scheme.

    Returns arrays 'lhs' and 'rhs' (one entry per step): the decrease of
    Phi + F_L plus the kinetic term against the a-priori bound
    (1 + 4 L^2)/kappa0 * tau * (r1 + |f_i|^2).  The exponential Gronwall
    factor in r0 is computed in log space and may saturate to infinity.
    """
    kappa0, a_star = _operator_bounds(params, grid)
    shift_l0 = lipschitz_shift(params)
    shift = float(shift) if shift is not None else shift_l0 + 1.0
    tau = grid.tau
    n = grid.n_time
    zero = np.zeros(grid.n_space + 1)
    g_hat_zero = potential_g_hat(params, grid, zero, zero)
    # |G(0)|_X^2 with alpha'(0) = 0 reduces to the squared mean of g(0)
    g0 = float(np.asarray(params.g(np.zeros(1)))[0])
    c_hat0 = abs(g_hat_zero) + g0 * g0 / (2.0 * shift_l0)

    def f_hat_l(eta_lvl, theta_lvl):
        w_sq = float(mesh.quad_space(grid, eta_lvl ** 2 + theta_lvl ** 2))
        return potential_g_hat(params, grid, eta_lvl, theta_lvl) \
            + shift * w_sq + c_hat0

    f_sq = np.empty(n)
    for k in range(1, n + 1):
        fe = 0.5 * params.m_u * (control.u[k - 1] + control.u[k])
        ft = 0.5 * params.m_v * (control.v[k - 1] + control.v[k])
        f_sq[k - 1] = float(mesh.quad_space(grid, fe ** 2 + ft ** 2))
    w0_sq = float(mesh.quad_space(grid, traj.first[0] ** 2
                                  + traj.second[0] ** 2))
    phi0 = energy_phi(params, grid, traj.first[0], traj.second[0])
    fl0 = f_hat_l(traj.first[0], traj.second[0])
    t_final = grid.t_final
    log_r0 = math.log((1.0 + 2.0 * shift ** 2) / shift) \
        + 4.0 * t_final * (a_star + 5.0 * shift) / kappa0 \
        + math.log(tau * float(np.sum(f_sq))
                   + t_final * (w0_sq + phi0 + fl0) + 1e-300)
    r0 = math.exp(log_r0) if log_r0 < 700.0 else math.inf
    r1 = 2.0 * (w0_sq + r0 / kappa0)
    lhs = np.empty(n)
    rhs = np.empty(n)
    total_prev = phi0 + fl0
    for k in range(1, n + 1):
        de = traj.first[k] - traj.first[k - 1]
        dt = traj.second[k] - traj.second[k - 1]
        kinetic = (kappa0 / (2.0 * tau)) \
            * float(mesh.quad_space(grid, de ** 2 + dt ** 2))
        total_k = energy_phi(params, grid, traj.first[k], traj.second[k]) \
            + f_hat_l(traj.first[k], traj.second[k])
        lhs[k - 1] = kinetic + total_k - total_prev
        rhs[k - 1] = (1.0 + 4.0 * shift ** 2) / kappa0 * tau \
            * (r1 + f_sq[k - 1])
        total_prev = total_k
    return {"lhs": lhs, "rhs": rhs, "shift": shift, "kappa0": kappa0,
            "a_star": a_star, "r0": r0, "r1": r1}
