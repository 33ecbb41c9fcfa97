"""Run configuration: parsing, validation, and manifest round-trip.

A run is described by one YAML file with nested blocks.  Unknown keys are
rejected so a typo cannot silently fall back to a default, and the fully
resolved configuration is written back into every manifest so a run can
be reproduced from its output directory alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigurationError
from .mesh import Grid
from .model import ModelParams
from . import problems


_DEFAULTS = {
    "problem": {
        "eps": 1.0e-1,
        "nu": 0.05,
        "delta_star": 0.1,
        "m_eta": 1.0,
        "m_theta": 1.0,
        "m_u": 1.0e-2,
        "m_v": 1.0e-2,
        "g": {"name": "linear_shift", "coef": {}},
        "alpha": {"name": "quadratic", "coef": {}},
        "alpha0": {"name": "one", "coef": {}},
        "eta0": {"name": "constant", "coef": {"value": 0.8}},
        "theta0": {"name": "double_grain", "coef": {"amplitude": 1.0}},
        "targets": "initial",
    },
    "grid": {
        "n_space": 100,
        "n_time": 200,
        "t_final": 0.5,
    },
    "solver": {
        "eps_floor": 1.0e-8,
        "inner_tol": 1.0e-10,
        "m_max": 100,
        "max_tau_halvings": 5,
        "scheme": "semi_implicit",
    },
    "optimize": {
        "tol": 1.0e-6,
        "max_iter": 200,
        "eps_list": [1.0e-1, 3.0e-2, 1.0e-2, 3.0e-3, 1.0e-3],
    },
    "output": {
        "directory": "out",
        "snapshot_stride": 10,
    },
    "gradcheck": {
        "deltas": [1.0e-2, 1.0e-3, 1.0e-4],
        "threshold": 1.0e-3,
        "trials": 20,
        "conjugacy_threshold": 1.0e-10,
    },
    "linear": {
        "mode": "heat",
        "amplitude": 1.0,
    },
}


def _merge_checked(defaults: dict, given: dict, path: str) -> dict:
    out = {}
    for key, base in defaults.items():
        if key in given:
            value = given[key]
            if isinstance(base, dict) and key != "coef":
                if not isinstance(value, dict):
                    raise ConfigurationError(
                        f"config entry {path}{key} must be a mapping")
                if "name" in base and value.get("name", base["name"]) \
                        != base["name"]:
                    # a renamed catalog entry does not inherit the default
                    # entry's coefficients
                    out[key] = {"name": value["name"],
                                "coef": dict(value.get("coef") or {})}
                    extra = sorted(set(value) - {"name", "coef"})
                    if extra:
                        raise ConfigurationError(
                            f"unknown config keys at {path}{key}.: {extra}")
                else:
                    out[key] = _merge_checked(base, value, f"{path}{key}.")
            else:
                out[key] = value
        else:
            out[key] = json.loads(json.dumps(base))  # deep copy
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigurationError(
            f"unknown config keys at {path or 'top level'}: {unknown}")
    return out


@dataclass
class RunConfig:
    """Resolved run description; every block fully populated."""

    problem: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    optimize: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    gradcheck: dict = field(default_factory=dict)
    linear: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config root must be a mapping")
        merged = _merge_checked(_DEFAULTS, data, "")
        return cls(**merged)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "grid": self.grid,
            "solver": self.solver,
            "optimize": self.optimize,
            "output": self.output,
            "gradcheck": self.gradcheck,
            "linear": self.linear,
        }


def load_config(path: str) -> RunConfig:
    with open(path, "r") as handle:
        data = yaml.safe_load(handle)
    if data is None:
        data = {}
    return RunConfig.from_dict(data)


def build_grid(config: RunConfig) -> Grid:
    block = config.grid
    return Grid(n_space=int(block["n_space"]), n_time=int(block["n_time"]),
                t_final=float(block["t_final"]))


def build_params(config: RunConfig, grid: Grid) -> ModelParams:
    prob = config.problem
    solver = config.solver
    g, gp, big = problems.make_g(prob["g"]["name"],
                                 prob["g"].get("coef") or {})
    alpha_coef = dict(prob["alpha"].get("coef") or {})
    if prob["alpha"]["name"].startswith("quadratic"):
        alpha_coef.setdefault("delta_star", float(prob["delta_star"]))
    alpha, ap, asec = problems.make_alpha(prob["alpha"]["name"], alpha_coef)
    a0, da0 = problems.make_alpha0(prob["alpha0"]["name"],
                                   prob["alpha0"].get("coef") or {})
    eta0 = problems.make_profile(prob["eta0"]["name"], grid.nodes,
                                 prob["eta0"].get("coef") or {})
    theta0 = problems.make_profile(prob["theta0"]["name"], grid.nodes,
                                   prob["theta0"].get("coef") or {})
    n_lvl = grid.n_time + 1
    targets = prob["targets"]
    if targets == "initial":
        eta_ad = np.tile(eta0, (n_lvl, 1))
        theta_ad = np.tile(theta0, (n_lvl, 1))
    elif targets == "zero":
        eta_ad = np.zeros((n_lvl, grid.n_space + 1))
        theta_ad = np.zeros((n_lvl, grid.n_space + 1))
    else:
        raise ConfigurationError(f"unknown target mode: {targets!r}")
    params = ModelParams(
        nu=float(prob["nu"]), eps=float(prob["eps"]),
        delta_star=float(prob["delta_star"]),
        m_eta=float(prob["m_eta"]), m_theta=float(prob["m_theta"]),
        m_u=float(prob["m_u"]), m_v=float(prob["m_v"]),
        g=g, g_prime=gp, big_g=big,
        alpha=alpha, alpha_prime=ap, alpha_second=asec,
        alpha0=a0, dt_alpha0=da0,
        eta0=eta0, theta0=theta0,
        eta_ad=eta_ad, theta_ad=theta_ad,
        eps_floor=float(solver["eps_floor"]),
        inner_tol=float(solver["inner_tol"]),
        m_max=int(solver["m_max"]),
        max_tau_halvings=int(solver["max_tau_halvings"]),
    )
    params.validate(grid)
    return params


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def write_manifest(path: str, config: RunConfig, reports: dict) -> None:
    """Dump the resolved config and solver reports as JSON.

    Floats go through Python's repr, which preserves the value exactly on
    reload (shortest representation with up to 17 significant digits).
    """
    payload = {"config": _jsonable(config.to_dict()),
               "reports": _jsonable(reports)}
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_manifest(path: str) -> tuple:
    with open(path, "r") as handle:
        payload = json.load(handle)
    return RunConfig.from_dict(payload["config"]), payload.get("reports", {})
