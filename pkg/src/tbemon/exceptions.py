"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a distribution function."""


class ProtocolError(ValueError):
    """An event stream violates the first/second arrival protocol."""


class ConfigError(ValueError):
    """A parameter file or configuration object is malformed."""


class CalibrationError(RuntimeError):
    """A control limit cannot be found for the requested target."""
