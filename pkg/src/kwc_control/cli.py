"""Command line front end: reproducible runs with CSV/JSON artifacts.

Every subcommand reads one YAML config, writes its outputs into a run
directory, and finishes with a manifest holding the fully resolved config
so the run can be reproduced from the artifacts alone.

Exit codes: 0 success, 2 configuration or validation error, 3 solver
failure, 4 a checked threshold was exceeded.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import mesh
from .adjoint import conjugacy_check, gradient, linearization_coeffs
from .config import RunConfig, build_grid, build_params, load_config, \
    write_manifest
from .errors import ConfigurationError, KwcError, NumericalError
from .linear_p import Sextuplet, solve_P
from .model import ControlPair, cost_J, energy_phi, potential_g_hat
from .optimize import eps_continuation, optimality_residuals, optimize
from .state import solve_state, solve_state_minmove

_FLOAT_FMT = "%.17g"


def _ensure_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)


def _write_csv(path: str, header: str, rows) -> None:
    with open(path, "w") as handle:
        handle.write(header + "\n")
        for row in rows:
            handle.write(",".join(_FLOAT_FMT % v if isinstance(v, float)
                                  else str(v) for v in row) + "\n")


def _write_field_csv(path: str, array: np.ndarray) -> None:
    np.savetxt(path, np.asarray(array), fmt=_FLOAT_FMT, delimiter=",")


def _write_report(path: str, payload: dict) -> None:
    from .config import _jsonable
    with open(path, "w") as handle:
        json.dump(_jsonable(payload), handle, indent=2, sort_keys=True)
        handle.write("\n")


def _write_snapshots(out: str, grid, state, stride: int) -> list:
    levels = list(range(0, grid.n_time + 1, max(int(stride), 1)))
    if levels[-1] != grid.n_time:
        levels.append(grid.n_time)
    written = []
    for k in levels:
        name = os.path.join(out, f"snapshot_{k:05d}.csv")
        rows = zip(grid.nodes.tolist(), state.first[k].tolist(),
                   state.second[k].tolist())
        _write_csv(name, "x,eta,theta", rows)
        written.append(name)
    return written


def cmd_solve_state(config: RunConfig, out: str, seed: int,
                    scheme: str = None) -> int:
    grid = build_grid(config)
    params = build_params(config, grid)
    control = ControlPair.zeros(grid)
    scheme = scheme or config.solver.get("scheme", "semi_implicit")
    if scheme == "semi_implicit":
        state, reports = solve_state(params, grid, control)
        audit_rows = [(r.step_index, float(grid.times[r.step_index]),
                       float(r.energy_phi),
                       float(r.energy_total - r.energy_phi),
                       float(r.energy_total), float(r.dissipation_residual))
                      for r in reports]
        report_payload = [dataclasses.asdict(r) for r in reports]
    elif scheme == "minmove":
        state = solve_state_minmove(params, grid, control)
        audit_rows = []
        a0 = params.alpha0_on_grid(grid)
        tau = grid.tau
        e_prev = None
        for k in range(1, grid.n_time + 1):
            phi = energy_phi(params, grid, state.first[k], state.second[k])
            ghat = potential_g_hat(params, grid, state.first[k],
                                   state.second[k])
            total = phi + ghat
            if e_prev is None:
                e_prev = energy_phi(params, grid, state.first[0],
                                    state.second[0]) \
                    + potential_g_hat(params, grid, state.first[0],
                                      state.second[0])
            de = state.first[k] - state.first[k - 1]
            dth = state.second[k] - state.second[k - 1]
            kinetic = float(mesh.quad_space(
                grid, de ** 2 + a0[k] * dth ** 2)) / tau
            fe = 0.5 * params.m_u * (control.u[k - 1] + control.u[k])
            ft = 0.5 * params.m_v * (control.v[k - 1] + control.v[k])
            work = float(mesh.quad_space(grid, fe * de + ft * dth))
            residual = kinetic + total - e_prev - work
            audit_rows.append((k, float(grid.times[k]), float(phi),
                               float(ghat), float(total), float(residual)))
            e_prev = total
        report_payload = {"scheme": "minmove"}
    else:
        raise ConfigurationError(f"unknown scheme: {scheme!r}")
    _ensure_dir(out)
    _write_snapshots(out, grid, state,
                     config.output.get("snapshot_stride", 10))
    _write_csv(os.path.join(out, "energy_audit.csv"),
               "step,t,phi,ghat,total,dissipation_residual", audit_rows)
    write_manifest(os.path.join(out, "manifest.json"), config,
                   {"solve_state": report_payload, "scheme": scheme})
    return 0


def cmd_grad_check(config: RunConfig, out: str, seed: int) -> int:
    grid = build_grid(config)
    params = build_params(config, grid)
    rng = np.random.default_rng(seed)
    shape = (grid.n_time + 1, grid.n_space + 1)
    # check at a generic nonzero control: at zero control the derivative
    # can be tiny and finite differencing is dominated by solver noise
    ramp = grid.times[:, None] / grid.t_final
    base = ControlPair(np.broadcast_to(np.cos(np.pi * grid.nodes),
                                       shape) * ramp,
                       np.broadcast_to(np.sin(np.pi * grid.nodes),
                                       shape) * ramp)
    d_u = rng.standard_normal(shape)
    d_v = rng.standard_normal(shape)
    scale = np.sqrt(mesh.inner_spacetime(grid, d_u, d_u)
                    + mesh.inner_spacetime(grid, d_v, d_v))
    d_u /= scale
    d_v /= scale
    grad, _ = gradient(params, grid, base)
    adjoint_value = mesh.inner_spacetime(grid, grad.u, d_u) \
        + mesh.inner_spacetime(grid, grad.v, d_v)
    rows = []
    worst = 0.0
    for delta in config.gradcheck["deltas"]:
        delta = float(delta)
        plus = ControlPair(base.u + delta * d_u, base.v + delta * d_v)
        minus = ControlPair(base.u - delta * d_u, base.v - delta * d_v)
        state_p, _ = solve_state(params, grid, plus)
        state_m, _ = solve_state(params, grid, minus)
        fd_value = (cost_J(params, grid, state_p, plus)
                    - cost_J(params, grid, state_m, minus)) / (2.0 * delta)
        denom = max(abs(adjoint_value), 1e-300)
        rel = abs(fd_value - adjoint_value) / denom
        worst = max(worst, rel)
        rows.append((delta, float(fd_value), float(adjoint_value),
                     float(rel)))
    _ensure_dir(out)
    _write_csv(os.path.join(out, "gradcheck.csv"),
               "delta,fd_value,adjoint_value,rel_error", rows)
    write_manifest(os.path.join(out, "manifest.json"), config,
                   {"grad_check": {"worst_rel_error": worst, "seed": seed}})
    threshold = float(config.gradcheck["threshold"])
    return 0 if worst <= threshold else 4


def cmd_conjugacy(config: RunConfig, out: str, seed: int) -> int:
    grid = build_grid(config)
    params = build_params(config, grid)
    state, _ = solve_state(params, grid, ControlPair.zeros(grid))
    trials = int(config.gradcheck["trials"])
    defect = conjugacy_check(params, grid, state, trials=trials, seed=seed)
    threshold = float(config.gradcheck["conjugacy_threshold"])
    _ensure_dir(out)
    _write_report(os.path.join(out, "report.json"),
                  {"defect": defect, "trials": trials, "seed": seed,
                   "threshold": threshold})
    write_manifest(os.path.join(out, "manifest.json"), config,
                   {"conjugacy": {"defect": defect}})
    return 0 if defect <= threshold else 4


def _write_control(out: str, control: ControlPair) -> None:
    _write_field_csv(os.path.join(out, "control_u.csv"), control.u)
    _write_field_csv(os.path.join(out, "control_v.csv"), control.v)


def cmd_optimize(config: RunConfig, out: str, seed: int) -> int:
    grid = build_grid(config)
    params = build_params(config, grid)
    control, report = optimize(params, grid, ControlPair.zeros(grid),
                               tol=float(config.optimize["tol"]),
                               max_iter=int(config.optimize["max_iter"]))
    _ensure_dir(out)
    rows = []
    for i, (cost, resid) in enumerate(zip(report.cost_history,
                                          report.residual_history)):
        step = report.step_sizes[i - 1] if i > 0 else ""
        rows.append((i, float(cost), float(resid), step))
    _write_csv(os.path.join(out, "history.csv"),
               "iteration,cost,residual,step_size", rows)
    _write_control(out, control)
    _write_report(os.path.join(out, "report.json"),
                  dataclasses.asdict(report))
    write_manifest(os.path.join(out, "manifest.json"), config,
                   {"optimize": dataclasses.asdict(report)})
    return 0 if report.converged else 4


def cmd_continuation(config: RunConfig, out: str, seed: int) -> int:
    grid = build_grid(config)
    params = build_params(config, grid)
    control, cert = eps_continuation(
        params, grid, config.optimize["eps_list"],
        tol=float(config.optimize["tol"]),
        max_iter=int(config.optimize["max_iter"]))
    _ensure_dir(out)
    payload = {
        "eps_sequence": cert.eps_sequence,
        "control_drift": cert.control_drift,
        "sgn_violation": cert.sgn_violation,
        "weak_form_residual": cert.weak_form_residual,
        "facet_fraction": cert.facet_fraction,
        "iterations": [r.iterations for r in cert.reports],
        "converged": [r.converged for r in cert.reports],
    }
    _write_control(out, control)
    _write_report(os.path.join(out, "report.json"), payload)
    write_manifest(os.path.join(out, "manifest.json"), config,
                   {"continuation": payload})
    return 0


def cmd_residuals(config: RunConfig, out: str, seed: int) -> int:
    grid = build_grid(config)
    params = build_params(config, grid)
    control, report = optimize(params, grid, ControlPair.zeros(grid),
                               tol=float(config.optimize["tol"]),
                               max_iter=int(config.optimize["max_iter"]))
    residuals = optimality_residuals(params, grid, control)
    _ensure_dir(out)
    _write_control(out, control)
    _write_report(os.path.join(out, "report.json"),
                  {"residuals": residuals,
                   "optimize": dataclasses.asdict(report)})
    write_manifest(os.path.join(out, "manifest.json"), config,
                   {"residuals": residuals})
    return 0


def cmd_linear_solve(config: RunConfig, out: str, seed: int) -> int:
    grid = build_grid(config)
    params = build_params(config, grid)
    mode = config.linear["mode"]
    amp = float(config.linear["amplitude"])
    shape = (grid.n_time + 1, grid.n_space + 1)
    x = grid.nodes
    p0 = amp * np.cos(np.pi * x)
    z0 = amp * np.sin(np.pi * x)
    zero = np.zeros(shape)
    if mode == "heat":
        sext = Sextuplet(a=np.ones(shape), b=np.zeros(shape),
                         mu=np.zeros(shape), lam=np.zeros(shape),
                         omega=np.zeros(shape), big_a=np.ones(shape))
        sext.fill_derivatives(grid)
        nu = 0.0
    elif mode == "linearized":
        state, _ = solve_state(params, grid, ControlPair.zeros(grid))
        sext = linearization_coeffs(params, grid, state).sext
        sext.fill_derivatives(grid)
        nu = params.nu
    else:
        raise ConfigurationError(f"unknown linear mode: {mode!r}")
    pair = solve_P(sext, grid, p0, z0, zero, zero, nu)
    # modal amplitudes: projection onto the initial profiles
    p_base = mesh.inner_space(grid, p0, p0)
    z_base = mesh.inner_space(grid, z0, z0)
    rows = []
    for k in range(grid.n_time + 1):
        rows.append((float(grid.times[k]),
                     float(mesh.inner_space(grid, pair.first[k], p0)
                           / p_base),
                     float(mesh.inner_space(grid, pair.second[k], z0)
                           / z_base)))
    _ensure_dir(out)
    _write_csv(os.path.join(out, "decay.csv"), "t,p_amp,z_amp", rows)
    payload = {"mode": mode}
    if mode == "heat":
        t = np.asarray([r[0] for r in rows[1:]])
        p_amp = np.asarray([r[1] for r in rows[1:]])
        z_amp = np.asarray([r[2] for r in rows[1:]])
        payload["p_rate"] = float(-np.polyfit(t, np.log(np.abs(p_amp)),
                                              1)[0])
        payload["z_rate"] = float(-np.polyfit(t, np.log(np.abs(z_amp)),
                                              1)[0])
        payload["p_rate_nominal"] = float(np.pi ** 2)
        payload["z_rate_nominal"] = float((1.0 + nu ** 2) * np.pi ** 2)
    _write_report(os.path.join(out, "report.json"), payload)
    write_manifest(os.path.join(out, "manifest.json"), config,
                   {"linear_solve": payload})
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kwc-control",
        description="Optimal control toolkit for a 1-D grain-boundary "
                    "phase-field system with singular diffusion.")
    parser.add_argument("command", choices=[
        "solve-state", "linear-solve", "grad-check", "conjugacy",
        "optimize", "continuation", "residuals"])
    parser.add_argument("--config", required=True,
                        help="path to the YAML run configuration")
    parser.add_argument("--out", default=None,
                        help="output directory (overrides the config)")
    parser.add_argument("--seed", type=int, default=0,
                        help="RNG seed for random-trial commands")
    parser.add_argument("--scheme", default=None,
                        choices=["semi_implicit", "minmove"],
                        help="time stepping scheme for solve-state")
    args = parser.parse_args(argv)
    handlers = {
        "solve-state": cmd_solve_state,
        "linear-solve": cmd_linear_solve,
        "grad-check": cmd_grad_check,
        "conjugacy": cmd_conjugacy,
        "optimize": cmd_optimize,
        "continuation": cmd_continuation,
        "residuals": cmd_residuals,
    }
    try:
        config = load_config(args.config)
        out = args.out or config.output.get("directory", "out")
        handler = handlers[args.command]
        if args.command == "solve-state":
            code = handler(config, out, args.seed, scheme=args.scheme)
        else:
            code = handler(config, out, args.seed)
    except NumericalError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigurationError, KwcError, OSError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
