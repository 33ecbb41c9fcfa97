"""Optimal control of a 1-D grain-boundary phase-field system.

The state system couples an Allen-Cahn equation for the crystalline
order parameter with a singular diffusion equation for the orientation
angle; the singular flux is regularized by f_eps and driven toward the
facet-forming limit by continuation.  The package provides the forward
solvers, the linearized/adjoint machinery, an adjoint-based gradient
descent for tracking-type costs, and a CLI for reproducible runs.
"""

from .errors import (CoefficientClassError, ConfigurationError, KwcError,
                     NumericalError, ShapeError, SubdifferentialPointError)
from .mesh import Grid
from .model import (ControlPair, FieldPair, ModelParams, cost_J,
                    energy_phi, f_eps, f_eps_prime, f_eps_second,
                    potential_g_hat)
from .problems import (default_params, make_alpha, make_alpha0, make_g,
                       make_profile, smooth_params, zero_control)
from .state import (StateStepReport, lipschitz_shift, minmove_energy_audit,
                    solve_state, solve_state_minmove, step_eta, step_theta)
from .linear_p import (Sextuplet, StabilityReport, solve_P,
                       stability_constant, stability_probe)
from .adjoint import (adjoint_coeffs, conjugacy_check, gradient,
                      linearization_coeffs, reverse_time, solve_adjoint,
                      solve_linearized)
from .optimize import (LimitCertificate, OptimizeReport, eps_continuation,
                       facet_fraction_of, optimality_residuals, optimize,
                       sgn_violation_of)
from .config import RunConfig, build_grid, build_params, load_config, \
    read_manifest, write_manifest

__version__ = "0.1.0"

__all__ = [
    "CoefficientClassError", "ConfigurationError", "KwcError",
    "NumericalError", "ShapeError", "SubdifferentialPointError",
    "Grid", "ControlPair", "FieldPair", "ModelParams", "cost_J",
    "energy_phi", "f_eps", "f_eps_prime", "f_eps_second",
    "potential_g_hat",
    "default_params", "make_alpha", "make_alpha0", "make_g",
    "make_profile", "smooth_params", "zero_control",
    "StateStepReport", "lipschitz_shift", "minmove_energy_audit",
    "solve_state", "solve_state_minmove", "step_eta", "step_theta",
    "Sextuplet", "StabilityReport", "solve_P", "stability_constant",
    "stability_probe",
    "adjoint_coeffs", "conjugacy_check", "gradient",
    "linearization_coeffs", "reverse_time", "solve_adjoint",
    "solve_linearized",
    "LimitCertificate", "OptimizeReport", "eps_continuation",
    "facet_fraction_of", "optimality_residuals", "optimize",
    "sgn_violation_of",
    "RunConfig", "build_grid", "build_params", "load_config",
    "read_manifest", "write_manifest",
    "__version__",
]
