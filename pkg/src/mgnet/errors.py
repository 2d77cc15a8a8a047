class MGNetError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class ConfigError(MGNetError, ValueError):
    """Invalid option or hyperparameter value."""

    exit_code = 1


class ShapeError(MGNetError, ValueError):
    exit_code = 2


class DataError(MGNetError, ValueError):
    """Malformed or unreadable input data (manifests, matrices, checkpoints)."""

    exit_code = 2


class NumericalError(MGNetError, FloatingPointError):
    """Non-finite values or a degenerate numerical problem."""

    exit_code = 3
