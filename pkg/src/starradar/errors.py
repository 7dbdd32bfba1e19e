"""Exception hierarchy shared by all modules."""


class StarRadarError(Exception):
    """Base class for every error raised by the package."""


class InvalidConfigurationError(StarRadarError, ValueError):
    """A parameter is outside its valid domain (odd P, wrong half-space, ...)."""


class EnergyConservationError(StarRadarError, ValueError):
    """Per-atom transmitted plus reflected power differs from one."""


class DegenerateCellError(StarRadarError, ValueError):
    """A steering vector has zero norm, so the cell cannot be normalized."""


class InsufficientTrialsError(StarRadarError, RuntimeError):
    """The cached H0 sample cannot resolve the requested false-alarm rate."""

    def __init__(self, message, achievable=None):
        super().__init__(message)
        self.achievable = achievable
