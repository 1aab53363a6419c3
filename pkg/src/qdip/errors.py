"""Exception hierarchy shared across the package."""


class QdipError(Exception):
    """Base class for all package-specific failures."""


class SchemaError(QdipError):
    """A system, control, or scenario file does not match its schema."""


class DegenerateTransitionsError(QdipError):
    """Two transition frequencies coincide within the degeneracy tolerance."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = tuple(violations)


class UncontrollableSystemError(QdipError):
    """The dipole coupling graph does not connect all levels."""


class StepPolicyError(QdipError):
    """The step policy cannot produce a usable grid (too many steps, or
    a step width below the floating-point floor)."""


class SteeringError(QdipError):
    """Control synthesis failed to reach the requested fidelity."""

    def __init__(self, message, best_fidelity=None):
        super().__init__(message)
        self.best_fidelity = best_fidelity


class ConsistencyError(QdipError):
    """An internal cross-check failed; indicates a bug, not bad input."""
