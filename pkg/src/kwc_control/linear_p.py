"""Solver for the general linear parabolic pair system.

The system couples a Neumann field p and a Dirichlet field z through a
coefficient sextuplet (a, b, mu, lambda, omega, A):

    d_t p - d_x^2 p + (mu + lam) p + omega d_x z = h
    a d_t z + b z - d_x((A + nu^2) d_x z + omega p) = k

Each implicit Euler step solves the two equations as one coupled sparse
block system, so the scheme is linear in the data to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import mesh
from .errors import CoefficientClassError, ShapeError
from .mesh import Grid
from .model import FieldPair


@dataclass
class Sextuplet:
    """Node-sampled coefficients (a, b, mu, lam, omega, big_a) on the grid.

    ``dt_a`` and ``dx_a`` hold the sampled derivatives of a; when omitted
    they are filled by finite differences of ``a``.
    """

    a: np.ndarray
    b: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    omega: np.ndarray
    big_a: np.ndarray
    dt_a: np.ndarray = None
    dx_a: np.ndarray = None

    def __post_init__(self) -> None:
        arrays = [np.asarray(getattr(self, n), dtype=float)
                  for n in ("a", "b", "mu", "lam", "omega", "big_a")]
        shape = arrays[0].shape
        if any(x.shape != shape for x in arrays) or arrays[0].ndim != 2:
            raise ShapeError("sextuplet members must share a 2-D shape")
        self.a, self.b, self.mu, self.lam, self.omega, self.big_a = arrays

    def fill_derivatives(self, grid: Grid) -> None:
        if self.dt_a is None:
            self.dt_a = np.gradient(self.a, grid.tau, axis=0)
        if self.dx_a is None:
            self.dx_a = np.gradient(self.a, grid.h, axis=1)

    def validate(self, grid: Grid, nu: float = 0.0) -> None:
        """Membership test for the admissible coefficient class.

        Failures name the violated requirement.  ``nu`` > 0 relaxes the
        positivity of the diffusion coefficient to inf(A + nu^2) > 0,
        which is how the solver actually uses A.
        """
        grid.check_trajectory(self.a, self.b, self.mu, self.lam,
                              self.omega, self.big_a)
        self.fill_derivatives(grid)
        if not np.all(np.isfinite(self.a)) \
                or not np.all(np.isfinite(self.dt_a)) \
                or not np.all(np.isfinite(self.dx_a)) \
                or self.a.min() <= 0.0:
            raise CoefficientClassError(
                "coefficient a: requires a Lipschitz in (t, x) with "
                f"inf a > 0; got inf a = {self.a.min():.3e}")
        for name, arr in (("b", self.b), ("lambda", self.lam),
                          ("omega", self.omega)):
            if not np.all(np.isfinite(arr)):
                raise CoefficientClassError(
                    f"coefficient {name}: requires bounded values")
        if not np.all(np.isfinite(self.mu)) or self.mu.min() < 0.0:
            raise CoefficientClassError(
                "coefficient mu: requires mu >= 0 everywhere; got "
                f"min mu = {self.mu.min():.3e}")
        floor = self.big_a.min() + nu * nu
        if not np.all(np.isfinite(self.big_a)) or floor <= 0.0:
            raise CoefficientClassError(
                "coefficient A: requires inf(A + nu^2) > 0; got "
                f"{floor:.3e}")

    def reverse_time(self) -> "Sextuplet":
        rev = lambda x: None if x is None else x[::-1].copy()
        return Sextuplet(rev(self.a), rev(self.b), rev(self.mu),
                         rev(self.lam), rev(self.omega), rev(self.big_a),
                         dt_a=None if self.dt_a is None
                         else -self.dt_a[::-1].copy(),
                         dx_a=rev(self.dx_a))


def solve_P(sext: Sextuplet, grid: Grid, p0: np.ndarray, z0: np.ndarray,
            h_force: np.ndarray, k_force: np.ndarray,
            nu: float) -> FieldPair:
    """Advance the coupled linear system with implicit Euler.

    ``h_force`` and ``k_force`` are trajectory-shaped arrays holding the
    p-equation and z-equation forcings.  Returns the full trajectory with
    level 0 = (p0, z0).
    """
    sext.validate(grid, nu=nu)
    grid.check_nodal(p0, z0)
    h_force = np.asarray(h_force, dtype=float)
    k_force = np.asarray(k_force, dtype=float)
    grid.check_trajectory(h_force, k_force)
    h = grid.h
    tau = grid.tau
    n_nodes = grid.n_space + 1
    n_int = n_nodes - 2
    md = mesh.lumped_mass(grid)
    k1 = mesh.stiffness_band(np.ones(grid.n_space), h)
    # dense-free assembly of the Neumann stiffness as sparse once
    k1_mat = sp.diags([k1[0, 1:], k1[1], k1[0, 1:]], [-1, 0, 1],
                      format="csr")
    grad_rows = sp.diags([-np.ones(grid.n_space), np.ones(grid.n_space)],
                         [0, 1], shape=(grid.n_space, n_nodes),
                         format="csr") / h
    avg_rows = sp.diags([0.5 * np.ones(grid.n_space),
                         0.5 * np.ones(grid.n_space)], [0, 1],
                        shape=(grid.n_space, n_nodes), format="csr")
    n2c = sp.lil_matrix((n_nodes, grid.n_space))
    n2c[0, 0] = 1.0
    n2c[-1, -1] = 1.0
    for i in range(1, n_nodes - 1):
        n2c[i, i - 1] = 0.5
        n2c[i, i] = 0.5
    n2c = n2c.tocsr()
    restrict = sp.eye(n_nodes, format="csr")[1:-1]

    p = np.empty((grid.n_time + 1, n_nodes))
    z = np.empty_like(p)
    p[0] = np.asarray(p0, dtype=float)
    z[0] = np.asarray(z0, dtype=float)
    z[0, 0] = z[0, -1] = 0.0
    m_diag = sp.diags(md)
    lu = None
    prev_slice = None
    for k in range(1, grid.n_time + 1):
        coeff_slice = np.stack([sext.a[k], sext.b[k], sext.mu[k],
                                sext.lam[k], sext.omega[k], sext.big_a[k]])
        if lu is not None and prev_slice is not None \
                and np.array_equal(coeff_slice, prev_slice):
            rhs_p = md * (p[k - 1] / tau + h_force[k])
            rhs_z = (md * (sext.a[k] * z[k - 1] / tau + k_force[k]))[1:-1]
            sol = lu.solve(np.concatenate([rhs_p, rhs_z]))
            p[k] = sol[:n_nodes]
            z[k] = 0.0
            z[k, 1:-1] = sol[n_nodes:]
            continue
        prev_slice = coeff_slice
        mu_lam = sext.mu[k] + sext.lam[k]
        omega = sext.omega[k]
        a_cells = mesh.cell_average(sext.big_a[k]) + nu * nu
        # p block: M/tau + K1 + M diag(mu+lam), coupling M diag(omega) n2c G
        block_pp = m_diag / tau + k1_mat + sp.diags(md * mu_lam)
        block_pz = sp.diags(md * omega) @ n2c @ grad_rows @ restrict.T
        # z block rows (interior): M a/tau + M diag(b) + K(A + nu^2),
        # coupling G^T diag(h) Avg diag(omega)
        stiff_z = grad_rows.T @ sp.diags(h * a_cells) @ grad_rows
        block_zz = restrict @ (sp.diags(md * sext.a[k] / tau)
                               + sp.diags(md * sext.b[k])
                               + stiff_z) @ restrict.T
        block_zp = restrict @ grad_rows.T \
            @ sp.diags(np.full(grid.n_space, h)) @ avg_rows @ sp.diags(omega)
        system = sp.bmat([[block_pp, block_pz],
                          [block_zp, block_zz]], format="csc")
        lu = splu(system)
        rhs_p = md * (p[k - 1] / tau + h_force[k])
        rhs_z = (md * (sext.a[k] * z[k - 1] / tau + k_force[k]))[1:-1]
        sol = lu.solve(np.concatenate([rhs_p, rhs_z]))
        p[k] = sol[:n_nodes]
        z[k] = 0.0
        z[k, 1:-1] = sol[n_nodes:]
    out = FieldPair(p, z)
    out.validate(grid)
    return out


# ---------------------------------------------------------------------------
# discrete dual norms and the stability estimate
# ---------------------------------------------------------------------------


def dual_norm_sq_neumann(grid: Grid, f: np.ndarray) -> float:
    """Squared dual norm of a nodal functional via the H^1 Riesz map."""
    md = mesh.lumped_mass(grid)
    band = mesh.stiffness_band(np.ones(grid.n_space), grid.h)
    band = mesh.add_diagonal(band, md)
    r = mesh.solve_spd_banded(band, md * f)
    return float(np.dot(md * f, r))


def dual_norm_sq_dirichlet(grid: Grid, f: np.ndarray) -> float:
    """Squared dual norm against the Dirichlet H^1 space."""
    md = mesh.lumped_mass(grid)
    band = mesh.stiffness_band(np.ones(grid.n_space), grid.h)
    band = mesh.add_diagonal(band, md)
    n_nodes = band.shape[1]
    sub = np.zeros((2, n_nodes - 2))
    sub[1] = band[1, 1:-1]
    sub[0, 1:] = band[0, 2:-1]
    rhs = (md * f)[1:-1]
    r = mesh.solve_spd_banded(sub, rhs)
    return float(np.dot(rhs, r))


def _l4_norm_sq(grid: Grid, v: np.ndarray) -> float:
    """Squared L^4 norm of a nodal field."""
    return float(np.sqrt(max(mesh.quad_space(grid, v ** 4), 0.0)))


def z_norm(grid: Grid, pair: FieldPair) -> float:
    """Discrete analogue of the solution-space norm: sup-in-time H norm
    plus the H^1-in-space and dual-time-derivative seminorms."""
    sup_h = float(np.max(np.sqrt(
        mesh.quad_space(grid, pair.first ** 2)
        + mesh.quad_space(grid, pair.second ** 2))))
    h = grid.h
    dp = mesh.cell_gradient(pair.first, h)
    dz = mesh.cell_gradient(pair.second, h)
    y_sq = mesh.inner_spacetime(grid, pair.first, pair.first) \
        + grid.tau * float(np.dot(grid.time_weights(), h * np.sum(dp * dp, axis=1))) \
        + mesh.inner_spacetime(grid, pair.second, pair.second) \
        + grid.tau * float(np.dot(grid.time_weights(), h * np.sum(dz * dz, axis=1)))
    tau = grid.tau
    dt_sq = 0.0
    for k in range(1, grid.n_time + 1):
        dt_sq += tau * dual_norm_sq_neumann(
            grid, (pair.first[k] - pair.first[k - 1]) / tau)
        dt_sq += tau * dual_norm_sq_dirichlet(
            grid, (pair.second[k] - pair.second[k - 1]) / tau)
    return sup_h + float(np.sqrt(y_sq + dt_sq))


def stability_constant(sext: Sextuplet, grid: Grid, nu: float) -> float:
    """Gronwall constant of the continuous-dependence estimate."""
    sext.fill_derivatives(grid)
    w1inf = max(float(np.abs(sext.a).max()), float(np.abs(sext.dt_a).max()),
                float(np.abs(sext.dx_a).max()))
    inf_a = float(sext.a.min())
    return 81.0 * (1.0 + nu ** 2) / min(1.0, nu ** 2, inf_a) * (
        1.0 + w1inf + float(np.abs(sext.b).max())
        + float(np.abs(sext.lam).max())
        + float(np.abs(sext.omega).max()) ** 2)


@dataclass
class StabilityReport:
    """Both sides of the Gronwall-integrated perturbation estimate.

    The bound is carried in log space because the Gronwall factor
    exp(3 C0* t) overflows for stiff coefficient sets.
    """

    times: np.ndarray
    lhs: np.ndarray
    log_bound: np.ndarray
    c0_star: float
    slack: float
    within_bound: bool


def stability_probe(sext1: Sextuplet, sext2: Sextuplet, data1: tuple,
                    data2: tuple, grid: Grid, nu: float,
                    slack: float = 0.5) -> StabilityReport:
    """Compare |dp|^2 + |sqrt(a1) dz|^2 against the a-priori bound.

    data = (p0, z0, h_force, k_force) with trajectory-shaped forcings.
    """
    p0_1, z0_1, h1, k1f = data1
    p0_2, z0_2, h2, k2f = data2
    sol1 = solve_P(sext1, grid, p0_1, z0_1, h1, k1f, nu)
    sol2 = solve_P(sext2, grid, p0_2, z0_2, h2, k2f, nu)
    c0 = stability_constant(sext1, grid, nu)
    n = grid.n_time
    tau = grid.tau
    dp = sol1.first - sol2.first
    dz = sol1.second - sol2.second
    lhs = mesh.quad_space(grid, dp ** 2) \
        + mesh.quad_space(grid, sext1.a * dz ** 2)
    # forcing dual norms + coefficient perturbation terms, per time level
    sext1.fill_derivatives(grid)
    sext2.fill_derivatives(grid)
    da_sup_sq = float(np.abs(sext1.a - sext2.a).max()) ** 2
    forcing = np.empty(n + 1)
    for k in range(n + 1):
        dh = h1[k] - h2[k]
        dk = k1f[k] - k2f[k]
        term = dual_norm_sq_neumann(grid, dh) \
            + dual_norm_sq_dirichlet(grid, dk)
        # R0* terms evaluated on the second solution
        if k == 0:
            dtz2 = (sol2.second[1] - sol2.second[0]) / tau
        else:
            dtz2 = (sol2.second[k] - sol2.second[k - 1]) / tau
        dxa_diff = mesh.node_from_cell(mesh.cell_gradient(
            sext1.a[k] - sext2.a[k], grid.h))
        r0 = dual_norm_sq_dirichlet(grid, dtz2) \
            * (da_sup_sq + _l4_norm_sq(grid, dxa_diff))
        p2 = sol2.first[k]
        dxp2 = mesh.node_from_cell(mesh.cell_gradient(p2, grid.h))
        p2_v_sq = float(mesh.quad_space(grid, p2 ** 2 + dxp2 ** 2))
        r0 += p2_v_sq * (
            float(mesh.quad_space(grid, (sext1.mu[k] - sext2.mu[k]) ** 2))
            + _l4_norm_sq(grid, sext1.omega[k] - sext2.omega[k]))
        z2 = sol2.second[k]
        dxz2 = mesh.node_from_cell(mesh.cell_gradient(z2, grid.h))
        z2_v_sq = float(mesh.quad_space(grid, z2 ** 2 + dxz2 ** 2))
        r0 += z2_v_sq * (
            _l4_norm_sq(grid, sext1.b[k] - sext2.b[k])
            + float(mesh.quad_space(
                grid, (p2 * (sext1.lam[k] - sext2.lam[k])) ** 2)))
        r0 += float(mesh.quad_space(
            grid, (dxz2 * (sext1.omega[k] - sext2.omega[k])) ** 2))
        r0 += float(mesh.quad_space(
            grid, ((sext1.big_a[k] - sext2.big_a[k]) * dxz2) ** 2))
        forcing[k] = term + r0
    # discrete Gronwall in log space:
    # B(t_k) = e^{3 c0 tau} B(t_{k-1}) + 2 c0 tau * max(F_{k-1}, F_k) e^{...}
    tiny = 1e-300
    log_bound = np.empty(n + 1)
    log_bound[0] = np.log(lhs[0] + tiny)
    growth = 3.0 * c0 * tau
    for k in range(1, n + 1):
        src = 2.0 * c0 * tau * max(forcing[k - 1], forcing[k]) + tiny
        log_bound[k] = np.logaddexp(log_bound[k - 1] + growth,
                                    np.log(src) + growth)
    ok = bool(np.all(np.log(lhs + tiny) <= np.log1p(slack) + log_bound))
    return StabilityReport(times=grid.times, lhs=lhs, log_bound=log_bound,
                           c0_star=c0, slack=slack, within_bound=ok)
