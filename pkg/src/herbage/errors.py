"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class AssetError(PipelineError):
    """Asset library problem: missing file, bad image, unknown species."""


class FormatError(PipelineError):
    """Malformed or truncated pipeline artifact (HHT1, SMP1, CSV, ...)."""


class ConfigError(PipelineError):
    """Invalid configuration value or combination."""


class TransformDegenerateError(PipelineError):
    """A random transform produced an unusable (zero-pixel) sample."""


class TrainingDivergedError(PipelineError):
    """Gradient descent reached a non-finite loss."""
