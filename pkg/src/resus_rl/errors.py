"""Exception types raised across the package."""


class ResusError(Exception):
    """Base class for all package errors."""


class SimulationFault(ResusError):
    """The virtual patient produced a non-finite or non-physical state."""


class TrainingFault(ResusError):
    """A Q-learning update produced a non-finite value."""


class ControllerFault(ResusError):
    """The PID controller produced a non-finite output."""


class ConfigError(ResusError):
    """Invalid configuration. ``key`` names the offending entry when known."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class MetricsError(ResusError):
    """A performance metric was requested on an empty series."""


class ComparisonError(ResusError):
    """Two reports that cannot be compared (different scenarios)."""
