"""Regularized absolute value, containers, energies."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kwc_control.errors import (ConfigurationError, ShapeError,
                                SubdifferentialPointError)
from kwc_control.mesh import Grid
from kwc_control.model import (ControlPair, FieldPair, cost_J, energy_phi,
                               f_eps, f_eps_prime, f_eps_second,
                               potential_g_hat)
from kwc_control.problems import default_params, zero_control


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
small_eps = st.floats(min_value=0.0, max_value=10.0, allow_nan=False)


@given(eps=small_eps, xi=finite)
@settings(max_examples=300, deadline=None)
def test_f_eps_close_to_abs(eps, xi):
    assert abs(f_eps(eps, xi) - abs(xi)) <= eps + 1e-12


@given(e1=small_eps, e2=small_eps, xi=finite)
@settings(max_examples=300, deadline=None)
def test_f_eps_lipschitz_in_eps(e1, e2, xi):
    assert abs(f_eps(e1, xi) - f_eps(e2, xi)) <= abs(e1 - e2) + 1e-12


@given(eps=st.floats(min_value=1e-6, max_value=10.0), xi=finite)
@settings(max_examples=300, deadline=None)
def test_f_eps_prime_bounded(eps, xi):
    fp = f_eps_prime(eps, xi)
    assert -1.0 <= fp <= 1.0
    # exact product identity used in the energy gradient
    assert f_eps(eps, xi) * fp == pytest.approx(xi, abs=1e-9 * (1 + abs(xi)))


def test_f_eps_derivatives_match_fd():
    rng = np.random.default_rng(3)
    xi = rng.uniform(-2.0, 2.0, size=200)
    eps = 0.05
    d = 1e-6
    fd1 = (f_eps(eps, xi + d) - f_eps(eps, xi - d)) / (2 * d)
    fd2 = (f_eps_prime(eps, xi + d) - f_eps_prime(eps, xi - d)) / (2 * d)
    assert np.max(np.abs(fd1 - f_eps_prime(eps, xi))) < 1e-6
    assert np.max(np.abs(fd2 - f_eps_second(eps, xi))) < 1e-4


def test_f_eps_singular_point_raises():
    assert f_eps(0.0, 0.3) == pytest.approx(0.3)
    with pytest.raises(SubdifferentialPointError):
        f_eps_prime(0.0, np.array([0.0, 1.0]))
    with pytest.raises(SubdifferentialPointError):
        f_eps_second(0.0, 0.0)


def test_field_pair_shape_and_dirichlet_checks():
    grid = Grid(n_space=8, n_time=4, t_final=0.1)
    good = FieldPair(np.zeros((5, 9)), np.zeros((5, 9)))
    good.validate(grid)
    with pytest.raises(ShapeError):
        FieldPair(np.zeros((5, 9)), np.zeros((5, 8)))
    bad = FieldPair(np.zeros((5, 9)), np.ones((5, 9)))
    with pytest.raises(ValueError):
        bad.validate(grid, dirichlet_tol=1e-12)


def test_params_validation_rejects_bad_delta_star():
    grid = Grid(n_space=8, n_time=4, t_final=0.1)
    params = default_params(grid)
    params.delta_star = 1.5
    with pytest.raises(ConfigurationError, match="delta_star"):
        params.validate(grid)


def test_energy_and_cost_closed_forms():
    grid = Grid(n_space=200, n_time=10, t_final=0.1)
    params = default_params(grid, eps=0.0)
    eta = np.ones(grid.n_space + 1)
    theta = np.zeros(grid.n_space + 1)
    # Phi = (1/2)|eta|^2 + (1/2)|nu f(0) + alpha(1)/nu|^2
    expected = 0.5 + 0.5 * (params.alpha(1.0) / params.nu) ** 2
    assert energy_phi(params, grid, eta, theta) == pytest.approx(expected)
    # G(1) = 0, so the auxiliary potential is pure quadratic corrections
    expected_g = -0.5 - params.alpha(1.0) ** 2 / (2 * params.nu ** 2)
    assert potential_g_hat(params, grid, eta, theta) \
        == pytest.approx(expected_g)


def test_cost_quadrature_constant_fields():
    grid = Grid(n_space=50, n_time=20, t_final=0.4)
    params = default_params(grid, targets="zero")
    n_lvl, n_nod = grid.n_time + 1, grid.n_space + 1
    state = FieldPair(2.0 * np.ones((n_lvl, n_nod)),
                      np.zeros((n_lvl, n_nod)))
    control = ControlPair(np.ones((n_lvl, n_nod)),
                          np.zeros((n_lvl, n_nod)))
    # J = T * (m_eta/2 * 4 + m_u/2 * 1)
    expected = grid.t_final * (0.5 * params.m_eta * 4.0
                               + 0.5 * params.m_u)
    assert cost_J(params, grid, state, control) == pytest.approx(expected)


def test_zero_control_is_zero():
    grid = Grid(n_space=10, n_time=5, t_final=0.1)
    c = zero_control(grid)
    assert not c.u.any() and not c.v.any()
