"""Numerics for the wave equation with an interior degenerate coefficient.

The coefficient a(x) vanishes at x = 1 inside [c, d].  The package computes
the explicit degeneracy constants of a weight, integrates the transmission
problem with an energy-conserving scheme, measures boundary observability
and builds boundary null controls by the Hilbert Uniqueness Method.
"""
from .errors import (ClassificationError, ConfigError, DegenwaveError, DomainError,
                     InvalidExponentError, MeshError, SolverError, StabilityError, WeightError)
from .hum import (ControlPair, FinalData, HUMReport, control_pairing, extract_controls,
                  gramian_apply, lambda_form, solve_hum, spectral_filter, state_norm, verify_null,
                  vminus_norm)
from .mesh import DiscreteOperators, Mesh, build_mesh
from .observability import (ObservabilityResult, empirical_constant, identity_residuals,
                            low_frequency_ensemble, observe, sweep)
from .oracle import decoupling_check, self_convergence, string_series, uniform_string_reference
from .solver import BoundaryData, Trajectory, cfl_dt, solve_backward, solve_forward
from .weights import (STRONG, WEAK, ConstantWeight, DegeneracyReport, DomainSpec, SymmetricPower,
                      Tabulated, TwoSidedPower, analyze, check_slope_conditions, classify,
                      compute_mu_kappa, envelope_lower_bounds, evaluate, friedrichs_constants,
                      observability_constant, observability_time)

__version__ = "0.1.0"
