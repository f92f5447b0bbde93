"""Pseudospectral simulation of gravity waves in a rectangular tank and
numerical checks of the integral identities they satisfy."""

from .errors import (AdmissibilityError, ConfigError, EllipticSolveError, InstabilityError,
                     NumericalError)
from .grid import Grid, TankConfig, build_grid
from .dtn import (FlattenedPotential, SurfaceFields, dtn_apply, harmonic_extension,
                  shape_derivative, surface_fields)
from .evolution import SurfaceState, Trajectory, energy, integrate, rhs, step
from .identities import (IdentityReport, PohozaevReport, boundary_functional,
                         corollary_bound, elementary_checks, main_identity, pohozaev,
                         theta_field)
from .observability import (InitialDataSpec, ObservabilityReport, make_initial_data,
                            run_experiment)

__version__ = "0.1.0"
