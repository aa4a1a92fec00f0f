"""Exception types shared across the package."""


class PqrError(Exception):
    """Base class for all domain errors raised by this package."""


class LogParseError(PqrError):
    """Malformed event-log input (bad CSV, duplicate ids, bad timestamps)."""


class ModelError(PqrError):
    """Malformed or structurally invalid system model."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = tuple(violations)


class NonMonotoneError(PqrError):
    """Two events of the same entity share a timestamp."""

    def __init__(self, message, ties=()):
        super().__init__(message)
        self.ties = tuple(ties)


class IncompleteLogError(PqrError):
    """Operation requires a time-complete log."""


class AlignmentError(PqrError):
    """A partial trace cannot be completed on the process skeleton."""


class CyclicProcessError(PqrError):
    """Operation requires an acyclic process skeleton."""


class AmbiguousLabelError(PqrError):
    """An activity label maps to several transitions with conflicting facets."""


class ScenarioError(PqrError):
    """Invalid simulation scenario."""
