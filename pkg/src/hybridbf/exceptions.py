"""Exception types raised by the package."""


class ParameterError(ValueError):
    """An argument or configuration value is outside its valid domain."""


class NumericalError(ArithmeticError):
    """A linear-algebra step could not be carried out reliably."""


class ConfigError(ParameterError):
    """An experiment configuration file is malformed or has unknown keys."""
