"""Gradient descent for the tracking problem and continuation in eps.

The descent uses the plain L2(Q) gradient [M_u(u + p), M_v(v + z)] with a
Barzilai-Borwein step proposal and Armijo backtracking, so every accepted
step strictly decreases the cost.  Continuation re-optimizes along a
decreasing eps ladder with warm starts and certifies the limiting
optimality conditions by residuals: the sign-inclusion of the regularized
flux and the weak-form defect of the limiting z-equation.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import mesh
from .adjoint import gradient
from .errors import ConfigurationError
from .mesh import Grid
from .model import ControlPair, FieldPair, ModelParams, f_eps_prime
from .state import solve_state


@dataclass
class OptimizeReport:
    """History of one descent run."""

    iterations: int
    cost_history: list
    residual_history: list
    step_sizes: list
    converged: bool


@dataclass
class LimitCertificate:
    """Residual evidence gathered along an eps-continuation run."""

    eps_sequence: list
    control_drift: list
    sgn_violation: float
    weak_form_residual: float
    facet_fraction: list = field(default_factory=list)
    reports: list = field(default_factory=list)


def _control_inner(grid: Grid, a: ControlPair, b: ControlPair) -> float:
    return mesh.inner_spacetime(grid, a.u, b.u) \
        + mesh.inner_spacetime(grid, a.v, b.v)


def _cost_only(params: ModelParams, grid: Grid,
               control: ControlPair) -> float:
    from .model import cost_J
    state, _ = solve_state(params, grid, control)
    return cost_J(params, grid, state, control)


def optimize(params: ModelParams, grid: Grid, initial_control: ControlPair,
             tol: float, max_iter: int) -> tuple:
    """Drive the stationarity residual |[M_u(u+p), M_v(v+z)]| below tol.

    Armijo constant 1e-4 with step halving; the Barzilai-Borwein quotient
    seeds the step from iteration 1 on.  Returns (control, OptimizeReport).
    """
    if not tol > 0.0:
        raise ConfigurationError(f"tol must be positive, got {tol}")
    if params.m_u + params.m_v <= 0.0:
        raise ConfigurationError(
            "m_u + m_v must be positive: without control regularization "
            "the stationarity condition degenerates")
    control = initial_control.copy()
    grad, diag = gradient(params, grid, control)
    cost = diag["cost"]
    residual = float(diag["grad_norm"])
    cost_history = [cost]
    residual_history = [residual]
    step_sizes = []
    prev_control = None
    prev_grad = None
    step = 1.0
    converged = residual <= tol
    iterations = 0
    c1 = 1.0e-4
    while not converged and iterations < max_iter:
        gnorm_sq = _control_inner(grid, grad, grad)
        if gnorm_sq == 0.0:
            converged = True
            break
        if prev_control is not None:
            s_u = control.u - prev_control.u
            s_v = control.v - prev_control.v
            y_u = grad.u - prev_grad.u
            y_v = grad.v - prev_grad.v
            ss = mesh.inner_spacetime(grid, s_u, s_u) \
                + mesh.inner_spacetime(grid, s_v, s_v)
            sy = mesh.inner_spacetime(grid, s_u, y_u) \
                + mesh.inner_spacetime(grid, s_v, y_v)
            if np.isfinite(sy) and sy > 0.0:
                step = min(max(ss / sy, 1.0e-12), 1.0e12)
        accepted = False
        trial_step = step
        for _ in range(40):
            trial = ControlPair(control.u - trial_step * grad.u,
                                control.v - trial_step * grad.v)
            trial_cost = _cost_only(params, grid, trial)
            if trial_cost <= cost - c1 * trial_step * gnorm_sq:
                accepted = True
                break
            trial_step *= 0.5
        if not accepted:
            break
        prev_control = control
        prev_grad = grad
        control = trial
        grad, diag = gradient(params, grid, control)
        cost = diag["cost"]
        residual = float(diag["grad_norm"])
        iterations += 1
        cost_history.append(cost)
        residual_history.append(residual)
        step_sizes.append(trial_step)
        converged = residual <= tol
    report = OptimizeReport(iterations=iterations,
                            cost_history=cost_history,
                            residual_history=residual_history,
                            step_sizes=step_sizes, converged=converged)
    return control, report


# ---------------------------------------------------------------------------
# residuals of the optimality system
# ---------------------------------------------------------------------------


def _dual_norm_sq_level(grid: Grid, covector: np.ndarray,
                        dirichlet: bool) -> float:
    """Squared H^1-dual norm of a Euclidean covector at one level."""
    md = mesh.lumped_mass(grid)
    band = mesh.stiffness_band(np.ones(grid.n_space), grid.h)
    band = mesh.add_diagonal(band, md)
    if dirichlet:
        n_nodes = band.shape[1]
        sub = np.zeros((2, n_nodes - 2))
        sub[1] = band[1, 1:-1]
        sub[0, 1:] = band[0, 2:-1]
        r = mesh.solve_spd_banded(sub, covector[1:-1])
        return float(np.dot(covector[1:-1], r))
    r = mesh.solve_spd_banded(band, covector)
    return float(np.dot(covector, r))


def _w0_dual_norm(grid: Grid, r: np.ndarray) -> float:
    """Dual norm of a space-time covector over test functions psi with
    psi(0) = 0, Dirichlet ends: |psi|^2 = |d_t psi|^2 + |d_x psi|^2.

    ``r`` has shape (n_time, n_int): coefficients against psi at levels
    1..n_time and interior nodes.
    """
    n = grid.n_time
    n_int = grid.n_space - 1
    tau = grid.tau
    md_int = mesh.lumped_mass(grid)[1:-1]
    # time-difference Gram: tau * D^T diag(m) D with D = (I - sub)/tau
    d_mat = (sp.eye(n, format="csr")
             - sp.diags(np.ones(n - 1), -1, format="csr")) / tau
    gram_t = tau * (d_mat.T @ d_mat)
    band = mesh.stiffness_band(np.ones(grid.n_space), grid.h)
    k_int = sp.diags([band[0, 2:-1], band[1, 1:-1], band[0, 2:-1]],
                     [-1, 0, 1], format="csr")
    gram = sp.kron(gram_t, sp.diags(md_int)) \
        + sp.kron(tau * sp.eye(n), k_int)
    rhs = r.reshape(-1)
    sol = spsolve(gram.tocsc(), rhs)
    return float(np.sqrt(max(np.dot(rhs, sol), 0.0)))


def optimality_residuals(params: ModelParams, grid: Grid,
                         control: ControlPair) -> dict:
    """Residuals of the first-order optimality system at a control.

    Returns stationarity (gradient norm) plus the defects of the two
    limiting adjoint equations evaluated on the computed multipliers:

    * p-equation, tested against the Neumann nodal basis, with the
      coupling kept as the converged product omega * d_x z (no separate
      sign selection); the leftover is the gap between |d_x theta| and
      its regularization in the reaction coefficient.
    * z-equation, tested against discrete functions vanishing at t = 0;
      the identified terms (time pairing, nu^2 flux, omega p flux, data)
      are subtracted and the remainder is the action of the unresolved
      flux distribution, reported in the dual norm of the test space.

    The p-residual is scaled by the dual norm of its data term; the
    z-defect is scaled by the a priori bound on the flux functional,
    2 (1 + nu^2 + sup alpha0 + sup|omega|) (|[p, z]| + |data|), so both
    are dimensionless and the latter reads as the fraction of its
    guaranteed bound actually exercised.
    """
    from .adjoint import _SweepWorkspace, _tracking_covectors, \
        transpose_apply
    grad, diag = gradient(params, grid, control)
    state = diag["state"]
    lam, sig = _tracking_covectors(params, grid, state)
    ws = _SweepWorkspace(params, grid, state)
    q, y = transpose_apply(ws, lam, sig)
    tau = grid.tau
    h = grid.h
    n = grid.n_time
    md = mesh.lumped_mass(grid)
    w = grid.time_weights()
    eps = params.eps_effective
    a0 = params.alpha0_on_grid(grid)
    ones = np.ones(grid.n_space)
    # p-equation residual per level against the Neumann nodal basis;
    # the reaction coefficient uses the limit slope modulus |d_x theta|
    # where the sweep used its regularization, so the defect measures
    # exactly that substitution
    res_sq = 0.0
    data_sq = 0.0
    for k in range(1, n + 1):
        slope = mesh.cell_gradient(state.second[k], h)
        limit_c1 = params.g_prime(state.first[k]) \
            + params.alpha_second(state.first[k]) \
            * mesh.node_from_cell(np.abs(slope))
        q_next = q[k + 1] if k < n else np.zeros_like(q[k])
        xi_prod = params.alpha_prime(state.first[k]) * mesh.cell_average_t(
            h * f_eps_prime(eps, slope) * mesh.cell_gradient(y[k], h))
        r_eta = params.m_eta * (state.first[k]
                                - np.asarray(params.eta_ad)[k])
        cov = md * (q[k] - q_next) / tau \
            + mesh.apply_stiffness(ones, q[k], h) \
            + md * limit_c1 * q_next + xi_prod - w[k] * md * r_eta
        res_sq += tau * _dual_norm_sq_level(grid, cov / w[k],
                                            dirichlet=False)
        data_sq += tau * _dual_norm_sq_level(grid, md * r_eta,
                                             dirichlet=False)
    p_scale = np.sqrt(data_sq) if data_sq > 0.0 else 1.0
    p_residual = np.sqrt(res_sq) / p_scale
    # z-equation defect over the zero-at-start Dirichlet test space:
    # residual(psi) = (data, psi) - (a0 z, d_t psi)
    #               - (nu^2 d_x z + omega p, d_x psi)
    res_cov = np.zeros((n, grid.n_space - 1))
    omega_sup = 0.0
    pair_norm_sq = 0.0
    theta_data_sq = 0.0
    for k in range(1, n + 1):
        slope = mesh.cell_gradient(state.second[k], h)
        q_next = q[k + 1] if k < n else np.zeros_like(q[k])
        fp = f_eps_prime(eps, slope)
        flux = params.nu ** 2 * mesh.cell_gradient(y[k], h) \
            + fp * mesh.cell_average(params.alpha_prime(state.first[k])
                                     * q_next)
        time_cov = md * a0[k] * y[k]
        if k < n:
            time_cov = time_cov - md * a0[k + 1] * y[k + 1]
        cov = sig[k] - time_cov - tau * mesh.cell_gradient_t(h * flux, h)
        res_cov[k - 1] = cov[1:-1]
        omega_sup = max(omega_sup, float(
            np.max(np.abs(params.alpha_prime(state.first[k])))
            * np.max(np.abs(fp))))
        for fld in (q[k] / w[k], y[k] / w[k]):
            gv = mesh.cell_gradient(fld, h)
            pair_norm_sq += tau * (mesh.inner_space(grid, fld, fld)
                                   + h * float(np.dot(gv, gv)))
        r_theta = params.m_theta * (state.second[k]
                                    - np.asarray(params.theta_ad)[k])
        theta_data_sq += tau * mesh.inner_space(grid, r_theta, r_theta)
    z_scale = 2.0 * (1.0 + params.nu ** 2 + float(np.max(a0)) + omega_sup) \
        * (np.sqrt(pair_norm_sq) + np.sqrt(theta_data_sq))
    if z_scale <= 0.0:
        z_scale = 1.0
    z_residual = _w0_dual_norm(grid, res_cov) / z_scale
    return {
        "stationarity": float(diag["grad_norm"]),
        "p_equation": float(p_residual),
        "z_weak_form": float(z_residual),
        "p_equation_abs": float(np.sqrt(res_sq)),
        "z_weak_form_abs": float(_w0_dual_norm(grid, res_cov)),
        "cost": float(diag["cost"]),
    }


def sgn_violation_of(params: ModelParams, grid: Grid, state: FieldPair,
                     facet_tol: float = 1.0e-2) -> float:
    """Distance of the regularized flux from the sign subdifferential.

    On facet cells (|d_x theta| <= facet_tol) any value in [-1, 1] is
    admissible, so the violation is max(|f'| - 1, 0) = 0; elsewhere it is
    |f' - sign(d_x theta)|.  Returns the max over the cylinder.  The
    threshold treats a cell as flat when its slope is below the default
    1e-2; plateau slopes shrink proportionally to eps while grain ramps
    stay order one, so the split is unambiguous once eps is small.
    """
    slope = mesh.cell_gradient(state.second, grid.h)
    sel = f_eps_prime(params.eps_effective, slope)
    facet = np.abs(slope) <= facet_tol
    violation = np.where(facet, np.maximum(np.abs(sel) - 1.0, 0.0),
                         np.abs(sel - np.sign(slope)))
    return float(np.max(violation))


def facet_fraction_of(grid: Grid, state: FieldPair,
                      facet_tol: float = 1.0e-2) -> float:
    """Fraction of final-time cells where the angle is locally constant."""
    slope = mesh.cell_gradient(state.second[-1], grid.h)
    return float(np.mean(np.abs(slope) <= facet_tol))


def eps_continuation(params: ModelParams, grid: Grid, eps_list,
                     tol: float, max_iter: int = 200) -> tuple:
    """Warm-started re-optimization along a decreasing eps ladder.

    Returns (final control, LimitCertificate).  The certificate records
    the control drift between consecutive levels, the facet fraction of
    each optimized state, and the sign/weak-form residuals at the last
    level.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e2 >= e1 for e1, e2 in zip(eps_list, eps_list[1:])):
        raise ConfigurationError("eps_list must be strictly decreasing")
    if eps_list[-1] < params.eps_floor:
        raise ConfigurationError(
            f"final eps {eps_list[-1]} is below eps_floor "
            f"{params.eps_floor}")
    control = ControlPair.zeros(grid)
    drift = []
    fractions = []
    reports = []
    prev = None
    current = params
    for eps in eps_list:
        current = dataclasses.replace(current, eps=eps)
        control, rep = optimize(current, grid, control, tol, max_iter)
        reports.append(rep)
        state, _ = solve_state(current, grid, control)
        fractions.append(facet_fraction_of(grid, state))
        if prev is not None:
            du = control.u - prev.u
            dv = control.v - prev.v
            drift.append(float(np.sqrt(
                mesh.inner_spacetime(grid, du, du)
                + mesh.inner_spacetime(grid, dv, dv))))
        prev = control.copy()
    state, _ = solve_state(current, grid, control)
    residuals = optimality_residuals(current, grid, control)
    cert = LimitCertificate(
        eps_sequence=eps_list,
        control_drift=drift,
        sgn_violation=sgn_violation_of(current, grid, state),
        weak_form_residual=residuals["z_weak_form"],
        facet_fraction=fractions,
        reports=reports,
    )
    return control, cert
