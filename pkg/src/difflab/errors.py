"""Exception hierarchy for the lab.

Everything raised on purpose derives from :class:`LabError`, so callers can
catch one type at the harness boundary.  The subclasses mirror the failure
categories used throughout: bad parameters, bad geometry, violated
preconditions of an estimate, solver blow-ups, empty sample sets, violated
structural assumptions of a reaction network, and malformed configs.
"""


class LabError(Exception):
    """Base class for all deliberate failures."""


class ParameterError(LabError, ValueError):
    """A numeric or combinatorial parameter is out of range."""


class GeometryError(LabError, ValueError):
    """A grid/mask/ball combination does not describe a usable geometry."""


class DomainError(LabError, ValueError):
    """A requested restriction (cylinder, window, ball) selects nothing."""


class PreconditionError(LabError):
    """An estimate's hypotheses fail on the supplied data."""


class SolverError(LabError):
    """Time stepping became unstable or a linear solve did not converge."""


class SamplingError(LabError):
    """Too few samples/frames to evaluate a statistic."""


class StructuralError(LabError):
    """A reaction network violates (A1)/(A2)/(A3); carries a witness state."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class ConfigError(LabError, ValueError):
    """An experiment configuration is malformed."""
