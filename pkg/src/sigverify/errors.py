"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Tensor or layer shapes do not satisfy an operation's contract."""


class ConfigError(ValueError):
    """Invalid model configuration or run configuration."""


class DataError(ValueError):
    """Bad dataset input: unreadable image, malformed manifest, split shortfall."""


class CheckpointError(ValueError):
    """Checkpoint file is corrupt, truncated, or has an unsupported version."""


class MetricUndefinedError(ValueError):
    """A rate was requested over an empty class (no genuine or no forged samples)."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss."""
