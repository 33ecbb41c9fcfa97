"""Grid, quadrature, and operator transpose identities."""

import numpy as np
import pytest

from kwc_control import mesh
from kwc_control.mesh import Grid


GRID = Grid(n_space=17, n_time=9, t_final=0.3)


def test_grid_geometry():
    assert GRID.h == pytest.approx(1.0 / 17)
    assert GRID.tau == pytest.approx(0.3 / 9)
    assert len(GRID.nodes) == 18
    assert len(GRID.cell_midpoints) == 17
    assert GRID.times[-1] == pytest.approx(0.3)


def test_quadrature_exact_for_linear():
    values = 2.0 + 3.0 * GRID.nodes
    assert mesh.quad_space(GRID, values) == pytest.approx(3.5)


def test_gradient_transpose_identity():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(GRID.n_space + 1)
    c = rng.standard_normal(GRID.n_space)
    lhs = np.dot(mesh.cell_gradient(v, GRID.h), c)
    rhs = np.dot(v, mesh.cell_gradient_t(c, GRID.h))
    assert lhs == pytest.approx(rhs, rel=1e-13)


def test_average_transpose_identity():
    rng = np.random.default_rng(1)
    v = rng.standard_normal(GRID.n_space + 1)
    c = rng.standard_normal(GRID.n_space)
    lhs = np.dot(mesh.cell_average(v), c)
    rhs = np.dot(v, mesh.cell_average_t(c))
    assert lhs == pytest.approx(rhs, rel=1e-13)


def test_stiffness_matches_band_solve():
    rng = np.random.default_rng(2)
    coef = 0.5 + rng.random(GRID.n_space)
    v = rng.standard_normal(GRID.n_space + 1)
    band = mesh.stiffness_band(coef, GRID.h)
    band = mesh.add_diagonal(band, mesh.lumped_mass(GRID))
    rhs = mesh.lumped_mass(GRID) * v + mesh.apply_stiffness(coef, v, GRID.h)
    back = mesh.solve_spd_banded(band, rhs)
    assert np.max(np.abs(back - v)) < 1e-10


def test_spacetime_inner_product_constant():
    ones = np.ones((GRID.n_time + 1, GRID.n_space + 1))
    assert mesh.inner_spacetime(GRID, ones, ones) == pytest.approx(0.3)
