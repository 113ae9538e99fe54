"""Error taxonomy shared by the CLI exit-code mapping."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (exit code 2)."""


class DataError(ValueError):
    """Malformed or missing input data (exit code 3)."""


class NumericError(FloatingPointError):
    """Non-finite values where finite math was required (exit code 4)."""
