"""Semi-implicit state solver: oracles and structural properties."""

import numpy as np
import pytest

from kwc_control import mesh
from kwc_control.mesh import Grid
from kwc_control.model import ControlPair, energy_phi, potential_g_hat
from kwc_control.problems import (default_params, make_alpha, make_g,
                                  smooth_params, zero_control)
from kwc_control.state import solve_state


def equilibrium_params(grid):
    """g(1) = 0 and flat angle make [1, 0] a steady state at eps = 0."""
    return default_params(grid, eps=0.0, eta_level=1.0,
                          theta_amplitude=0.0)


def test_equilibrium_is_exact():
    grid = Grid(n_space=30, n_time=40, t_final=0.4)
    params = equilibrium_params(grid)
    state, reports = solve_state(params, grid, zero_control(grid))
    assert np.max(np.abs(state.first - 1.0)) < 1e-12
    assert np.max(np.abs(state.second)) < 1e-12
    assert all(abs(r.dissipation_residual) < 1e-10 for r in reports)


def test_eta_heat_mode_decay():
    """With alpha constant and g = identity the eta equation is linear:
    eta(t) = e^{-(1 + pi^2) t} cos(pi x)."""
    grid = Grid(n_space=160, n_time=400, t_final=0.2)
    params = default_params(grid, eta_level=0.0, theta_amplitude=0.0)
    g, gp, big = make_g("identity")
    al, ap, asec = make_alpha("constant", {"value": 0.5})
    params.g, params.g_prime, params.big_g = g, gp, big
    params.alpha, params.alpha_prime, params.alpha_second = al, ap, asec
    params.eta0 = np.cos(np.pi * grid.nodes)
    state, _ = solve_state(params, grid, zero_control(grid))
    rate = 1.0 + np.pi ** 2
    exact = np.exp(-rate * grid.t_final) * np.cos(np.pi * grid.nodes)
    err = np.max(np.abs(state.first[-1] - exact))
    # implicit Euler: error ~ tau * rate^2 * T / 2
    assert err < 1.5 * grid.tau * rate ** 2 * grid.t_final / 2


def test_energy_non_increasing_zero_forcing():
    grid = Grid(n_space=60, n_time=80, t_final=0.4)
    for eps in (1e-1, 1e-3):
        params = default_params(grid, eps=eps)
        state, reports = solve_state(params, grid, zero_control(grid))
        e0 = energy_phi(params, grid, state.first[0], state.second[0]) \
            + potential_g_hat(params, grid, state.first[0], state.second[0])
        totals = [e0] + [r.energy_total for r in reports]
        increments = np.diff(totals)
        assert np.max(increments) <= 10.0 * grid.tau * abs(e0)


def test_dissipation_residual_first_order():
    grid_c = Grid(n_space=50, n_time=40, t_final=0.2)
    grid_f = Grid(n_space=50, n_time=160, t_final=0.2)
    worst = {}
    for grid in (grid_c, grid_f):
        params = default_params(grid, eps=1e-2)
        _, reports = solve_state(params, grid, zero_control(grid))
        worst[grid.n_time] = max(abs(r.dissipation_residual)
                                 for r in reports)
    # refining tau by 4 should shrink the defect by roughly 4
    assert worst[160] < 0.5 * worst[40]


def test_facet_fraction_grows_as_eps_shrinks():
    grid = Grid(n_space=60, n_time=60, t_final=0.3)
    fractions = []
    for eps in (1e-1, 1e-2, 1e-3):
        params = default_params(grid, eps=eps)
        state, _ = solve_state(params, grid, zero_control(grid))
        slope = mesh.cell_gradient(state.second[-1], grid.h)
        fractions.append(np.mean(np.abs(slope) <= 1e-2))
    assert fractions[0] <= fractions[1] <= fractions[2]
    assert fractions[2] > 0.3


def test_inner_iterations_within_budget():
    grid = Grid(n_space=60, n_time=60, t_final=0.3)
    for eps in (1e-1, 1e-4, 0.0):
        params = default_params(grid, eps=eps)
        _, reports = solve_state(params, grid, zero_control(grid))
        assert max(r.inner_iterations for r in reports) <= params.m_max
        assert all(np.isfinite(r.energy_total) for r in reports)


def test_forcing_moves_the_state():
    grid = Grid(n_space=40, n_time=40, t_final=0.2)
    params = smooth_params(grid)
    control = ControlPair(np.ones((grid.n_time + 1, grid.n_space + 1)),
                          np.zeros((grid.n_time + 1, grid.n_space + 1)))
    base, _ = solve_state(params, grid, zero_control(grid))
    pushed, _ = solve_state(params, grid, control)
    diff = np.max(np.abs(pushed.first - base.first))
    assert diff > 1e-4
