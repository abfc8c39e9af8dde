"""Exception types shared across the package."""


class AleEulerError(Exception):
    """Base class for all package errors."""


class GridError(AleEulerError):
    """Invalid grid parameters or mismatched field/grid combination."""


class CoefficientError(AleEulerError):
    """Coefficient data violates a structural requirement (singular a,
    Piola residual above tolerance, determinant bounds, ...)."""


class SolverError(AleEulerError):
    """Elliptic solve failed (non-convergence, lost ellipticity)."""


class StepError(AleEulerError):
    """Time stepping failed (no Picard contraction, CFL collapse,
    invariant violated beyond tolerance)."""


class SnapshotError(AleEulerError):
    """Snapshot directory missing, corrupt, or inconsistent."""


class ConfigError(AleEulerError):
    """Run configuration could not be parsed or validated."""
