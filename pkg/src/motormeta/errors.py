"""Exception hierarchy shared across the package."""


class MotormetaError(Exception):
    """Base class for all package errors."""


class ConfigError(MotormetaError):
    """Invalid configuration, flags, or incompatible settings."""


class DimensionError(ConfigError):
    """Array shape does not match what a layer or operation expects."""


class GeometryError(ConfigError):
    """Layer geometry is invalid or consecutive layers do not compose."""


class StateError(MotormetaError):
    """Operation called in the wrong order (e.g. backward before forward)."""


class NumericError(MotormetaError):
    """Non-finite values encountered during training or evaluation."""


class DataError(MotormetaError):
    """Missing, corrupt, or mismatched data artifacts."""


class ValidationError(DataError):
    """A design violates its topology's parameter bounds."""


class AmbiguousTopologyError(DataError):
    """Topology indicator cannot be resolved to a registered id."""
