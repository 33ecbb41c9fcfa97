"""Linear parabolic system: oracle, coefficient class, stability probe."""

import numpy as np
import pytest

from kwc_control.errors import CoefficientClassError
from kwc_control.mesh import Grid
from kwc_control.linear_p import (Sextuplet, solve_P, stability_constant,
                                  stability_probe)


def identity_sextuplet(grid):
    shape = (grid.n_time + 1, grid.n_space + 1)
    sext = Sextuplet(a=np.ones(shape), b=np.zeros(shape),
                     mu=np.zeros(shape), lam=np.zeros(shape),
                     omega=np.zeros(shape), big_a=np.ones(shape))
    sext.fill_derivatives(grid)
    return sext


def test_heat_oracle_both_components():
    grid = Grid(n_space=100, n_time=400, t_final=0.25)
    sext = identity_sextuplet(grid)
    nu = 0.5
    p0 = np.cos(np.pi * grid.nodes)
    z0 = np.sin(np.pi * grid.nodes)
    z0[0] = z0[-1] = 0.0
    zero = np.zeros((grid.n_time + 1, grid.n_space + 1))
    pair = solve_P(sext, grid, p0, z0, zero, zero, nu)
    t = grid.t_final
    p_exact = np.exp(-np.pi ** 2 * t) * np.cos(np.pi * grid.nodes)
    z_exact = np.exp(-(1 + nu ** 2) * np.pi ** 2 * t) \
        * np.sin(np.pi * grid.nodes)
    assert np.max(np.abs(pair.first[-1] - p_exact)) < 5e-3
    assert np.max(np.abs(pair.second[-1] - z_exact)) < 5e-3


def test_superposition_is_exact():
    grid = Grid(n_space=30, n_time=20, t_final=0.1)
    sext = identity_sextuplet(grid)
    rng = np.random.default_rng(7)
    shape = (grid.n_time + 1, grid.n_space + 1)
    h1, k1 = rng.standard_normal(shape), rng.standard_normal(shape)
    h2, k2 = rng.standard_normal(shape), rng.standard_normal(shape)
    zero_ic = np.zeros(grid.n_space + 1)
    a = solve_P(sext, grid, zero_ic, zero_ic, h1, k1, 0.3)
    b = solve_P(sext, grid, zero_ic, zero_ic, h2, k2, 0.3)
    c = solve_P(sext, grid, zero_ic, zero_ic, h1 + h2, k1 + k2, 0.3)
    assert np.allclose(a.first + b.first, c.first, atol=1e-12)
    assert np.allclose(a.second + b.second, c.second, atol=1e-12)


def test_coefficient_class_rejects_sign_changing_a():
    grid = Grid(n_space=20, n_time=10, t_final=0.1)
    sext = identity_sextuplet(grid)
    sext.a = sext.a - 2.0
    with pytest.raises(CoefficientClassError):
        sext.validate(grid, nu=0.3)


def test_coefficient_class_rejects_degenerate_big_a():
    grid = Grid(n_space=20, n_time=10, t_final=0.1)
    sext = identity_sextuplet(grid)
    sext.big_a = np.zeros_like(sext.big_a)
    with pytest.raises(CoefficientClassError):
        sext.validate(grid, nu=0.0)


def test_reverse_time_is_involution():
    grid = Grid(n_space=10, n_time=6, t_final=0.1)
    sext = identity_sextuplet(grid)
    rng = np.random.default_rng(1)
    sext.mu = rng.standard_normal(sext.mu.shape)
    back = sext.reverse_time().reverse_time()
    assert np.allclose(back.mu, sext.mu)
    assert np.allclose(back.dt_a, sext.dt_a)


def test_stability_probe_identical_data_within_bound():
    grid = Grid(n_space=40, n_time=40, t_final=0.1)
    sext = identity_sextuplet(grid)
    shape = (grid.n_time + 1, grid.n_space + 1)
    rng = np.random.default_rng(5)
    p0 = rng.standard_normal(grid.n_space + 1)
    z0 = rng.standard_normal(grid.n_space + 1)
    z0[0] = z0[-1] = 0.0
    h = rng.standard_normal(shape)
    k = rng.standard_normal(shape)
    data = (p0, z0, h, k)
    report = stability_probe(sext, sext, data, data, grid, nu=0.3)
    assert report.within_bound
    assert np.max(report.lhs) < 1e-20


def test_stability_probe_forcing_perturbation():
    grid = Grid(n_space=40, n_time=40, t_final=0.1)
    sext = identity_sextuplet(grid)
    shape = (grid.n_time + 1, grid.n_space + 1)
    rng = np.random.default_rng(6)
    p0 = rng.standard_normal(grid.n_space + 1)
    z0 = rng.standard_normal(grid.n_space + 1)
    z0[0] = z0[-1] = 0.0
    h = rng.standard_normal(shape)
    k = rng.standard_normal(shape)
    dh = 1e-3 * rng.standard_normal(shape)
    report = stability_probe(sext, sext, (p0, z0, h, k),
                             (p0, z0, h + dh, k), grid, nu=0.3)
    assert report.within_bound
    assert report.c0_star == pytest.approx(
        stability_constant(sext, grid, 0.3))
