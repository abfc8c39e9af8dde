"""Numerical laboratory for the incompressible Euler equations with
space-time variable coefficients in a periodic channel."""

from .calculus import (NormReport, bmo_norm, curl, divergence, gradient,
                       l2_norm, linf_norm, log_plus, norm_report,
                       sobolev_norm, tangential_derivative,
                       variable_curl, variable_divergence, w1inf_norm)
from .coefficients import (AleMapCoefficients, CoefficientSet, CoeffSample,
                           FileCoefficients, FluxPsiCoefficients,
                           IdentityCoefficients, cofactor_fields,
                           compatibility_integral, divergence_target,
                           ellipticity_certificate, flux_integral,
                           piola_residual, standard_eta)
from .config import DEFAULTS, RunConfig, load_config, parse_config
from .diagnostics import (BKMRecord, bkm_integrand,
                          calibrate_stretching_constant, gronwall_envelope,
                          monitor_summary, stretching_bound_check)
from .dynamics import (MonitorRecord, SimulationResult, State, StepReport,
                       boundary_defect, divergence_defect, picard_step,
                       simulate, transport_rhs)
from .elliptic import (ChannelOperator, PressureSystem, SolverStats,
                       VelocityView, assemble_raw, assemble_reduced,
                       compatibility_term, project_velocity, solve_dirichlet,
                       solve_neumann, verify_compatibility)
from .errors import (AleEulerError, CoefficientError, ConfigError, GridError,
                     SnapshotError, SolverError, StepError)
from .fields import AnalyticScalar, AnalyticVector, scalar_term
from .fixtures import (divergence_free_view, initial_velocity,
                       random_divergence_free_view, shear_flow)
from .grid import (Grid, MatrixField, ScalarField, VectorField,
                   domain_volume, integrate_boundary, integrate_volume)
from .snapshots import Snapshot, read_snapshot, write_snapshot
from .vorticity import (VorticityState, reconstruct_velocity,
                        stretching_identity_residual, vorticity_forcing,
                        vorticity_equation_residual, vorticity_state)

__version__ = "0.1.0"
