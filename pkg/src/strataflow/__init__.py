"""Steady periodic stratified water waves via the height-equation formulation.

The package computes the laminar (flat-surface shear) family, locates the
bifurcation value lambda* of the linearized problem, switches onto the branch
of genuinely two-dimensional waves, continues it by pseudo-arclength, and
verifies solutions against the original free-surface Euler system.
"""

from .config import RunConfig, load_config, parse_config
from .continuation import (Branch, BranchPoint, Monitors, alternative_monitor,
                           default_monitors, initial_tangent, nodal_check)
from .errors import StrataflowError
from .heightpde import (Grid, HeightField, frozen_residual, jacobian,
                        laminar_field, load_snapshot, mean_top, newton_solve,
                        residual, save_snapshot)
from .laminar import (LaminarDiagnostics, LaminarFlow, find_lambda0, g_dot,
                      lambda_min, qddot_volterra, solve_laminar)
from .profiles import (BernoulliProfile, DensityProfile, FlowParams,
                       ProfileBundle, constant_density_bundle, make_bundle)
from .reconstruct import (PhysicalField, VerificationReport, euler_residual,
                          stream_consistency, to_physical)
from .sturm import (BifurcationPoint, EigenResult, check_lb_condition,
                    find_lambda_star, mu_curve, principal_eigen, rayleigh,
                    transversality_xi)

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "load_config", "parse_config",
    "Branch", "BranchPoint", "Monitors", "alternative_monitor",
    "default_monitors", "initial_tangent", "nodal_check",
    "StrataflowError",
    "Grid", "HeightField", "frozen_residual", "jacobian", "laminar_field",
    "load_snapshot", "mean_top", "newton_solve", "residual", "save_snapshot",
    "LaminarDiagnostics", "LaminarFlow", "find_lambda0", "g_dot",
    "lambda_min", "qddot_volterra", "solve_laminar",
    "BernoulliProfile", "DensityProfile", "FlowParams", "ProfileBundle",
    "constant_density_bundle", "make_bundle",
    "PhysicalField", "VerificationReport", "euler_residual",
    "stream_consistency", "to_physical",
    "BifurcationPoint", "EigenResult", "check_lb_condition",
    "find_lambda_star", "mu_curve", "principal_eigen", "rayleigh",
    "transversality_xi",
]
