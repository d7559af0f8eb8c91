"""Exception types raised by the library."""


class MobalError(Exception):
    """Base class for library errors."""


class ImpossibleObservationError(MobalError):
    """An observation has zero probability under the model and belief."""


class DegenerateEvidenceError(MobalError):
    """Every conjecture assigns zero likelihood to an observation."""


class CapacityError(MobalError):
    """A requested construction exceeds the configured size guard."""


class ConfigError(MobalError):
    """A configuration document is malformed or inconsistent."""
