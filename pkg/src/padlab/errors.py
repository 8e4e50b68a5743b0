"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or mismatched component configs."""


class PaddingMismatchError(ValueError):
    """A padding set does not cover exactly the configured replaced set."""


class NumericError(RuntimeError):
    """Non-finite or degenerate numeric input where a finite value is required."""


class UsageError(Exception):
    """Bad command-line usage (maps to exit code 2)."""
