"""Descent loop, continuation, and optimality residuals."""

import dataclasses

import numpy as np
import pytest

from kwc_control import mesh
from kwc_control.adjoint import (_SweepWorkspace, _tracking_covectors,
                                 transpose_apply)
from kwc_control.errors import ConfigurationError
from kwc_control.mesh import Grid
from kwc_control.model import ControlPair, f_eps_second
from kwc_control.optimize import (_w0_dual_norm, eps_continuation,
                                  facet_fraction_of, optimality_residuals,
                                  optimize, sgn_violation_of)
from kwc_control.problems import (default_params, make_alpha, smooth_params,
                                  zero_control)
from kwc_control.state import solve_state


GRID = Grid(n_space=40, n_time=40, t_final=0.2)


def test_uncontrolled_target_needs_no_iterations():
    params = smooth_params(GRID)
    state, _ = solve_state(params, GRID, zero_control(GRID))
    params = dataclasses.replace(params, eta_ad=state.first.copy(),
                                 theta_ad=state.second.copy())
    control, report = optimize(params, GRID, zero_control(GRID),
                               tol=1e-10, max_iter=50)
    assert report.iterations == 0
    assert report.converged
    assert not control.u.any()


def test_descent_is_monotone_and_converges():
    params = smooth_params(GRID, m_u=0.1, m_v=0.1, targets="zero")
    control, report = optimize(params, GRID, zero_control(GRID),
                               tol=1e-6, max_iter=200)
    assert report.converged
    diffs = np.diff(report.cost_history)
    assert np.all(diffs <= 0.0)
    assert report.residual_history[-1] <= 1e-6
    assert len(report.step_sizes) == report.iterations


def test_rejects_degenerate_regularization():
    params = smooth_params(GRID)
    params = dataclasses.replace(params, m_u=0.0, m_v=0.0)
    with pytest.raises(ConfigurationError):
        optimize(params, GRID, zero_control(GRID), tol=1e-6, max_iter=5)
    with pytest.raises(ConfigurationError):
        optimize(smooth_params(GRID), GRID, zero_control(GRID),
                 tol=-1.0, max_iter=5)


def test_continuation_input_validation():
    params = default_params(GRID)
    with pytest.raises(ConfigurationError, match="decreasing"):
        eps_continuation(params, GRID, [1e-2, 1e-1], tol=1e-4)
    with pytest.raises(ConfigurationError, match="eps_floor"):
        eps_continuation(params, GRID, [1e-1, 1e-12], tol=1e-4)


def test_single_level_continuation_matches_optimize():
    params = default_params(GRID, eps=3e-2)
    c_opt, rep = optimize(params, GRID, zero_control(GRID),
                          tol=1e-6, max_iter=50)
    c_cont, cert = eps_continuation(params, GRID, [3e-2], tol=1e-6,
                                    max_iter=50)
    assert np.array_equal(c_opt.u, c_cont.u)
    assert np.array_equal(c_opt.v, c_cont.v)
    assert cert.eps_sequence == [3e-2]
    assert cert.control_drift == []


def test_sgn_violation_small_when_slopes_are_bimodal():
    params = default_params(GRID, eps=1e-3)
    state, _ = solve_state(params, GRID, zero_control(GRID))
    assert sgn_violation_of(params, GRID, state) <= 1e-2
    assert 0.0 <= facet_fraction_of(GRID, state) <= 1.0


def test_linear_decoupled_residuals_near_machine():
    """With constant alpha and linear g the p-equation defect has no
    regularization gap left, so it collapses to rounding."""
    params = smooth_params(GRID, m_u=0.1, m_v=0.1)
    al, ap, asec = make_alpha("constant", {"value": 0.5})
    params = dataclasses.replace(params, alpha=al, alpha_prime=ap,
                                 alpha_second=asec)
    control, report = optimize(params, GRID, zero_control(GRID),
                               tol=1e-8, max_iter=100)
    res = optimality_residuals(params, GRID, control)
    assert res["stationarity"] <= 1e-8
    assert res["p_equation"] < 1e-10


def test_z_defect_matches_direct_flux_assembly():
    """The reported z-equation defect must equal the directly assembled
    action of the regularized curvature flux, to rounding."""
    params = default_params(GRID, eps=1e-2)
    control = zero_control(GRID)
    res = optimality_residuals(params, GRID, control)
    state, _ = solve_state(params, GRID, control)
    lam, sig = _tracking_covectors(params, GRID, state)
    ws = _SweepWorkspace(params, GRID, state)
    _, y = transpose_apply(ws, lam, sig)
    h, tau = GRID.h, GRID.tau
    cov = np.zeros((GRID.n_time, GRID.n_space - 1))
    for k in range(1, GRID.n_time + 1):
        slope = mesh.cell_gradient(state.second[k], h)
        flux = mesh.cell_average(params.alpha(state.first[k])) \
            * f_eps_second(params.eps_effective, slope) \
            * mesh.cell_gradient(y[k], h)
        cov[k - 1] = (tau * mesh.cell_gradient_t(h * flux, h))[1:-1]
    direct = _w0_dual_norm(GRID, cov)
    assert res["z_weak_form_abs"] == pytest.approx(direct, rel=1e-9)


def test_p_residual_shrinks_with_eps():
    values = []
    for eps in (1e-1, 1e-2, 1e-3):
        params = default_params(GRID, eps=eps)
        res = optimality_residuals(params, GRID, zero_control(GRID))
        values.append(res["p_equation"])
    assert values[2] < values[1] < values[0]
    assert values[2] < 0.2 * values[1]
