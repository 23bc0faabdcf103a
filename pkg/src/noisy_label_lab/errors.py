"""Exception types shared across the package."""


class NoisyLabelLabError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigurationError(NoisyLabelLabError):
    """A setting, shape, or precondition that makes the requested object unbuildable."""


class UsageError(NoisyLabelLabError):
    """An API call that is malformed regardless of configuration."""


class FormatError(NoisyLabelLabError):
    """A persisted file that cannot be parsed: bad magic, version, or record."""


class TrainingDivergedError(NoisyLabelLabError):
    """Optimization produced a non-finite gradient and was aborted."""
