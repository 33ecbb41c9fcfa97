"""Discrete adjoint: conjugacy, gradient oracles, structure."""

import dataclasses

import numpy as np
import pytest

from kwc_control import mesh
from kwc_control.adjoint import (conjugacy_check, gradient,
                                 linearization_coeffs, reverse_time,
                                 solve_adjoint, solve_linearized)
from kwc_control.mesh import Grid
from kwc_control.model import ControlPair, FieldPair, cost_J
from kwc_control.problems import default_params, smooth_params, zero_control
from kwc_control.state import solve_state


@pytest.fixture(scope="module")
def setup():
    grid = Grid(n_space=40, n_time=40, t_final=0.2)
    params = smooth_params(grid)
    state, _ = solve_state(params, grid, zero_control(grid))
    return grid, params, state


def test_conjugacy_machine_precision(setup):
    grid, params, state = setup
    defect = conjugacy_check(params, grid, state, trials=10, seed=2)
    assert defect < 1e-11


def test_gradient_without_tracking_is_regularization(setup):
    grid, params, _ = setup
    params = dataclasses.replace(params, m_eta=0.0, m_theta=0.0)
    rng = np.random.default_rng(0)
    shape = (grid.n_time + 1, grid.n_space + 1)
    control = ControlPair(rng.standard_normal(shape),
                          rng.standard_normal(shape))
    grad, _ = gradient(params, grid, control)
    assert np.allclose(grad.u, params.m_u * control.u, atol=1e-12)
    assert np.allclose(grad.v, params.m_v * control.v, atol=1e-12)


def test_gradient_matches_central_differences(setup):
    grid, params, _ = setup
    rng = np.random.default_rng(4)
    shape = (grid.n_time + 1, grid.n_space + 1)
    base = ControlPair(0.5 * rng.standard_normal(shape),
                       0.5 * rng.standard_normal(shape))
    d = ControlPair(rng.standard_normal(shape), rng.standard_normal(shape))
    grad, _ = gradient(params, grid, base)
    directional = mesh.inner_spacetime(grid, grad.u, d.u) \
        + mesh.inner_spacetime(grid, grad.v, d.v)
    delta = 1e-4

    def cost_at(c):
        state, _ = solve_state(params, grid, c)
        return cost_J(params, grid, state, c)

    fd = (cost_at(ControlPair(base.u + delta * d.u, base.v + delta * d.v))
          - cost_at(ControlPair(base.u - delta * d.u,
                                base.v - delta * d.v))) / (2 * delta)
    assert abs(fd - directional) / abs(directional) < 1e-3


def test_adjoint_terminal_levels_vanish(setup):
    grid, params, state = setup
    adj = solve_adjoint(params, grid, state)
    assert not adj.first[-1].any()
    assert not adj.second[-1].any()
    assert not np.isnan(adj.first).any()


def test_adjoint_of_perfect_tracking_is_zero(setup):
    grid, params, state = setup
    matched = dataclasses.replace(params, eta_ad=state.first.copy(),
                                  theta_ad=state.second.copy())
    adj = solve_adjoint(matched, grid, state)
    assert np.max(np.abs(adj.first)) < 1e-14
    assert np.max(np.abs(adj.second)) < 1e-14


def test_linearized_response_is_linear(setup):
    grid, params, state = setup
    coeffs = linearization_coeffs(params, grid, state)
    rng = np.random.default_rng(9)
    shape = (grid.n_time + 1, grid.n_space + 1)
    h1, k1 = rng.standard_normal(shape), rng.standard_normal(shape)
    out1 = solve_linearized(coeffs, grid, h1, k1)
    out2 = solve_linearized(coeffs, grid, 3.0 * h1, 3.0 * k1)
    assert np.allclose(out2.first, 3.0 * out1.first, atol=1e-12)
    assert np.allclose(out2.second, 3.0 * out1.second, atol=1e-12)


def test_gradient_scaling_in_tracking_weights(setup):
    """The adjoint part of the gradient is linear in the tracking data:
    doubling both tracking weights (state held fixed) doubles it."""
    grid, params, _ = setup
    control = zero_control(grid)
    g1, _ = gradient(params, grid, control)
    doubled = dataclasses.replace(params, m_eta=2 * params.m_eta,
                                  m_theta=2 * params.m_theta)
    g2, _ = gradient(doubled, grid, control)
    part1 = g1.u - params.m_u * control.u
    part2 = g2.u - params.m_u * control.u
    assert np.allclose(part2, 2.0 * part1, atol=1e-12)
    assert np.allclose(g2.v - params.m_v * control.v,
                       2.0 * (g1.v - params.m_v * control.v), atol=1e-12)


def test_reverse_time_involution_on_fields():
    arr = np.arange(12.0).reshape(3, 4)
    pair = FieldPair(arr.copy(), arr[::-1].copy())
    back = reverse_time(reverse_time(pair))
    assert np.array_equal(back.first, pair.first)
    assert np.array_equal(back.second, pair.second)
