"""Exception types shared across the package."""


class KronestError(Exception):
    """Base class for all kronest errors."""


class ConfigError(KronestError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class DimensionMismatchError(KronestError, ValueError):
    """Array shapes incompatible with the declared dimensions."""


class NotPositiveDefiniteError(KronestError, ValueError):
    """A matrix required to be Hermitian positive definite is not."""

    def __init__(self, message, factor=None):
        super().__init__(message)
        self.factor = factor


class IllConditionedError(KronestError, RuntimeError):
    """An iterate lost positive definiteness during a solve."""

    def __init__(self, message, factor=None, sweep=None):
        super().__init__(message)
        self.factor = factor
        self.sweep = sweep


class DegenerateSampleError(KronestError, ValueError):
    """A sample produced a vanishing quadratic form."""

    def __init__(self, message, sample=None):
        super().__init__(message)
        self.sample = sample


class ExistenceError(KronestError, ValueError):
    """Shrinkage factors below the well-posedness bounds for the data size."""

    def __init__(self, message, bounds=None):
        super().__init__(message)
        self.bounds = bounds


class DatasetFormatError(KronestError, ValueError):
    """Malformed dataset file."""

    def __init__(self, message, line=None, offset=None):
        super().__init__(message)
        self.line = line
        self.offset = offset
