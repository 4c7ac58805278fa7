"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: ConfigError -> 2,
NumericError -> 3, ArtifactError -> 4, anything else -> 1.
"""


class LatentZeroError(Exception):
    pass


class ConfigError(LatentZeroError):
    """Bad or unknown configuration key/value, missing config file."""


class NumericError(LatentZeroError):
    """Non-finite value produced where finite numerics are required."""


class ArtifactError(LatentZeroError):
    """Checkpoint/record version or compatibility mismatch."""


class ShapeError(LatentZeroError):
    """Tensor shape does not match the declared contract."""


class IllegalMoveError(LatentZeroError):
    """Action applied to an occupied cell or after the game ended."""


class AnalysisError(LatentZeroError):
    """Degenerate analysis input (e.g. zero-variance PCA data)."""
