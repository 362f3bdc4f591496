"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid sizes, shapes or hyperparameters."""


class UsageError(ValueError):
    """An operation was called on the wrong kind of input."""


class SizeError(ValueError):
    """A problem is too large for an exhaustive method."""


class SolverError(RuntimeError):
    """The simplex solver hit its iteration cap."""


class UndefinedIndexError(ArithmeticError):
    """A redistribution index has no well-defined value on the given batch."""


class TrainingError(RuntimeError):
    """Training diverged; ``checkpoint`` holds the last good parameters."""

    def __init__(self, message, checkpoint=None, epoch=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.epoch = epoch
