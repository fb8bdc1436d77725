"""Fractional p&q-Laplacian eigenvalue problems on unions of intervals."""

from .errors import ConvergenceError, FracPQError, ValidationError
from .mesh import Domain1D, Mesh, NodalFunction, Potential, build_mesh, catalog_potential
from .gagliardo import assemble, seminorm_pow, seminorm_gradient, weak_action
from .energies import EnergyBundle, ProblemParams, make_bundle
from .eigsolve import EigenReport, lambda1, lambda2_minimax, linear_oracle, check_ground_state_properties
from .nehari import fibering, nonexistence_certificate, solve_m_lambda, sign_changing_probe
from .continuation import bbm_check, local_reference_lambda1, mu_quotient_decay, mu_sweep, s_stability_sweep

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "FracPQError", "ValidationError",
    "Domain1D", "Mesh", "NodalFunction", "Potential", "build_mesh", "catalog_potential",
    "assemble", "seminorm_pow", "seminorm_gradient", "weak_action",
    "EnergyBundle", "ProblemParams", "make_bundle",
    "EigenReport", "lambda1", "lambda2_minimax", "linear_oracle", "check_ground_state_properties",
    "fibering", "nonexistence_certificate", "solve_m_lambda", "sign_changing_probe",
    "bbm_check", "local_reference_lambda1", "mu_quotient_decay", "mu_sweep", "s_stability_sweep",
]
