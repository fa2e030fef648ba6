"""Exception types shared across the package."""


class SetRankError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SetRankError, ValueError):
    """Tensor or matrix dimensions violate an operation's contract."""


class DataError(SetRankError, ValueError):
    """Input data is malformed or inconsistent (parse errors, bad ranks, ...)."""


class CheckpointError(DataError):
    """A checkpoint file is truncated, corrupt, or incompatible."""


class NumericError(SetRankError, ArithmeticError):
    """A non-finite value appeared where the contract requires finite numbers."""


class ConfigError(SetRankError, ValueError):
    """A run configuration is invalid (unknown key, bad value, missing path)."""
