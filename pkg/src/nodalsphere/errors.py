"""Exception hierarchy for the nodalsphere package.

Every error raised deliberately by this package derives from SolverError,
so callers can catch one type at the boundary.  The CLI maps these onto
exit codes; library users get the structured message.
"""


class SolverError(Exception):
    """Base class for all nodalsphere errors."""


class ConfigurationError(SolverError):
    """A problem definition violates one of the standing assumptions."""


class UsageError(SolverError):
    """Caller supplied arguments that cannot be interpreted."""


class ConstructionError(SolverError):
    """An internally built object failed its own consistency checks."""


class NumericError(SolverError):
    """A numerical routine produced an untrustworthy result."""


class ProjectionError(SolverError):
    """Scaling a field onto the constraint manifold has no solution."""


class NodalDegeneracyError(SolverError):
    """One sign component of a sign-changing field collapsed to zero."""


class InitializationError(SolverError):
    """The two-bump initial guess could not be placed in the domain."""


class ResourceLimitError(SolverError):
    """A requested discretization exceeds the configured size limits."""


class FitError(SolverError):
    """A regression diagnostic had too little usable data."""
