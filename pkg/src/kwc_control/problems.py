"""Named coefficient catalog and ready-made problem setups.

Runs must be reproducible from plain config files, so the scalar coefficient
functions (g, alpha, alpha0) and the initial profiles are selected by name
from this catalog plus a small dict of constants, never supplied as code.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .mesh import Grid
from .model import ControlPair, ModelParams


# ---------------------------------------------------------------------------
# reaction term g with primitive G
# ---------------------------------------------------------------------------


def make_g(name: str, coef: dict = None):
    """Return (g, g_prime, G) for a catalog entry."""
    coef = dict(coef or {})
    if name == "linear_shift":
        # g(s) = s - c with primitive (s - c)^2 / 2
        c = float(coef.pop("shift", 1.0))
        g = lambda s: np.asarray(s, dtype=float) - c
        gp = lambda s: np.ones_like(np.asarray(s, dtype=float))
        big = lambda s: 0.5 * (np.asarray(s, dtype=float) - c) ** 2
    elif name == "identity":
        g = lambda s: np.asarray(s, dtype=float)
        gp = lambda s: np.ones_like(np.asarray(s, dtype=float))
        big = lambda s: 0.5 * np.square(np.asarray(s, dtype=float))
    elif name == "zero":
        g = lambda s: np.zeros_like(np.asarray(s, dtype=float))
        gp = g
        big = g
    else:
        raise ConfigurationError(f"unknown g catalog entry: {name!r}")
    if coef:
        raise ConfigurationError(f"unused g coefficients: {sorted(coef)}")
    return g, gp, big


# ---------------------------------------------------------------------------
# mobility alpha
# ---------------------------------------------------------------------------


def make_alpha(name: str, coef: dict = None):
    """Return (alpha, alpha_prime, alpha_second) for a catalog entry."""
    coef = dict(coef or {})
    if name == "quadratic":
        # delta_star + s^2, continued linearly outside [-clip, clip] so the
        # global Lipschitz bound used by the solvers is finite
        delta_star = float(coef.pop("delta_star", 0.1))
        clip = float(coef.pop("clip", 10.0))

        def alpha(s):
            s = np.asarray(s, dtype=float)
            a = np.abs(s)
            inside = delta_star + np.square(np.minimum(a, clip))
            return inside + 2.0 * clip * np.maximum(a - clip, 0.0)

        def alpha_prime(s):
            s = np.asarray(s, dtype=float)
            return np.clip(2.0 * s, -2.0 * clip, 2.0 * clip)

        def alpha_second(s):
            s = np.asarray(s, dtype=float)
            return np.where(np.abs(s) <= clip, 2.0, 0.0)

    elif name == "constant":
        value = float(coef.pop("value", 0.1))

        def alpha(s):
            return np.full_like(np.asarray(s, dtype=float), value)

        def alpha_prime(s):
            return np.zeros_like(np.asarray(s, dtype=float))

        alpha_second = alpha_prime
    elif name == "quadratic_scaled":
        # delta_star + scale * s^2, same linear continuation
        delta_star = float(coef.pop("delta_star", 0.1))
        scale = float(coef.pop("scale", 1.0))
        clip = float(coef.pop("clip", 10.0))

        def alpha(s):
            s = np.asarray(s, dtype=float)
            a = np.abs(s)
            inside = delta_star + scale * np.square(np.minimum(a, clip))
            return inside + 2.0 * scale * clip * np.maximum(a - clip, 0.0)

        def alpha_prime(s):
            s = np.asarray(s, dtype=float)
            return np.clip(2.0 * scale * s, -2.0 * scale * clip, 2.0 * scale * clip)

        def alpha_second(s):
            s = np.asarray(s, dtype=float)
            return np.where(np.abs(s) <= clip, 2.0 * scale, 0.0)

    else:
        raise ConfigurationError(f"unknown alpha catalog entry: {name!r}")
    if coef:
        raise ConfigurationError(f"unused alpha coefficients: {sorted(coef)}")
    return alpha, alpha_prime, alpha_second


# ---------------------------------------------------------------------------
# time relaxation coefficient alpha0(t, x)
# ---------------------------------------------------------------------------


def make_alpha0(name: str, coef: dict = None):
    """Return (alpha0, dt_alpha0) as functions of (t, x) arrays."""
    coef = dict(coef or {})
    if name == "one":
        a0 = lambda t, x: np.ones_like(np.asarray(t, dtype=float))
        da0 = lambda t, x: np.zeros_like(np.asarray(t, dtype=float))
    elif name == "constant":
        value = float(coef.pop("value", 1.0))
        a0 = lambda t, x: np.full_like(np.asarray(t, dtype=float), value)
        da0 = lambda t, x: np.zeros_like(np.asarray(t, dtype=float))
    elif name == "linear_in_time":
        base = float(coef.pop("base", 1.0))
        rate = float(coef.pop("rate", 0.0))
        a0 = lambda t, x: base + rate * np.asarray(t, dtype=float)
        da0 = lambda t, x: np.full_like(np.asarray(t, dtype=float), rate)
    else:
        raise ConfigurationError(f"unknown alpha0 catalog entry: {name!r}")
    if coef:
        raise ConfigurationError(f"unused alpha0 coefficients: {sorted(coef)}")
    return a0, da0


# ---------------------------------------------------------------------------
# initial profiles
# ---------------------------------------------------------------------------


def make_profile(name: str, x: np.ndarray, coef: dict = None) -> np.ndarray:
    """Evaluate a named nodal profile on node coordinates x."""
    coef = dict(coef or {})
    x = np.asarray(x, dtype=float)
    if name == "constant":
        out = np.full_like(x, float(coef.pop("value", 0.0)))
    elif name == "cosine":
        amp = float(coef.pop("amplitude", 1.0))
        off = float(coef.pop("offset", 0.0))
        out = off + amp * np.cos(np.pi * x)
    elif name == "sine":
        amp = float(coef.pop("amplitude", 1.0))
        out = amp * np.sin(np.pi * x)
        # sin(pi * 1.0) evaluates to ~1e-16; the angle profile must meet
        # the boundary condition exactly
        out[0] = 0.0
        out[-1] = 0.0
    elif name == "double_grain":
        # two plateaus of opposite orientation joined by short ramps; the
        # profile is zero at both ends so the Dirichlet condition holds
        amp = float(coef.pop("amplitude", 1.0))
        ramp = float(coef.pop("ramp", 0.1))
        xs = np.array([0.0, ramp, 0.5 - ramp / 2, 0.5 + ramp / 2, 1.0 - ramp, 1.0])
        ys = np.array([0.0, -amp, -amp, amp, amp, 0.0])
        out = np.interp(x, xs, ys)
    else:
        raise ConfigurationError(f"unknown profile catalog entry: {name!r}")
    if coef:
        raise ConfigurationError(f"unused profile coefficients: {sorted(coef)}")
    return out


# ---------------------------------------------------------------------------
# assembled default problems
# ---------------------------------------------------------------------------


def default_params(grid: Grid, eps: float = 1.0e-1, nu: float = 0.05,
                   delta_star: float = 0.1, m_eta: float = 1.0,
                   m_theta: float = 1.0, m_u: float = 1.0e-2,
                   m_v: float = 1.0e-2, theta_amplitude: float = 1.0,
                   eta_level: float = 0.8, targets: str = "initial",
                   **extra) -> ModelParams:
    """Facet-forming default problem: double-grain angle, uniform order.

    targets: "initial" replicates the initial pair at every time level,
    "zero" uses zero targets.
    """
    g, gp, big = make_g("linear_shift")
    alpha, ap, asec = make_alpha("quadratic", {"delta_star": delta_star})
    a0, da0 = make_alpha0("one")
    eta0 = make_profile("constant", grid.nodes, {"value": eta_level})
    theta0 = make_profile("double_grain", grid.nodes,
                          {"amplitude": theta_amplitude})
    n_lvl = grid.n_time + 1
    if targets == "initial":
        eta_ad = np.tile(eta0, (n_lvl, 1))
        theta_ad = np.tile(theta0, (n_lvl, 1))
    elif targets == "zero":
        eta_ad = np.zeros((n_lvl, grid.n_space + 1))
        theta_ad = np.zeros((n_lvl, grid.n_space + 1))
    else:
        raise ConfigurationError(f"unknown target mode: {targets!r}")
    return ModelParams(
        nu=nu, eps=eps, delta_star=delta_star,
        m_eta=m_eta, m_theta=m_theta, m_u=m_u, m_v=m_v,
        g=g, g_prime=gp, big_g=big,
        alpha=alpha, alpha_prime=ap, alpha_second=asec,
        alpha0=a0, dt_alpha0=da0,
        eta0=eta0, theta0=theta0,
        eta_ad=eta_ad, theta_ad=theta_ad,
        **extra,
    )


def smooth_params(grid: Grid, eps: float = 1.0e-1, nu: float = 0.5,
                  **overrides) -> ModelParams:
    """Mild problem with smooth fields, used for gradient and Taylor checks."""
    kwargs = dict(eps=eps, nu=nu, theta_amplitude=0.3)
    kwargs.update(overrides)
    params = default_params(grid, **kwargs)
    theta0 = make_profile("sine", grid.nodes, {"amplitude": 0.3})
    params.theta0 = theta0
    params.theta_ad = np.tile(theta0, (grid.n_time + 1, 1))
    return params


def zero_control(grid: Grid) -> ControlPair:
    return ControlPair.zeros(grid)
