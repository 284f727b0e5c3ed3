"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value is out of range or inconsistent."""


class DegenerateInputError(ValueError):
    """Input is well-formed but carries no usable signal (e.g. a constant vector)."""
