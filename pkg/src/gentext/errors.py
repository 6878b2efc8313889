"""Shared exception types."""


class GenTextError(Exception):
    """Base class for all package errors."""


class DecodeError(GenTextError):
    """File exists but does not decode as an 8-bit RGB(A) image."""


class ShapeError(GenTextError):
    """Tensor shape violates a contract (divisibility, batch mismatch, ...)."""


class ConfigError(GenTextError):
    """Invalid configuration value."""


class EmptyDomainError(GenTextError):
    """A corpus domain contains no images."""


class LayoutError(GenTextError):
    """On-disk dataset layout is missing an expected path."""


class StageError(GenTextError):
    """Unknown training stage."""


class NanLossError(GenTextError):
    """A loss became NaN/Inf during training."""

    def __init__(self, msg, last_checkpoint=None):
        super().__init__(msg)
        self.last_checkpoint = last_checkpoint


class ResumeMismatchError(GenTextError):
    """Resume checkpoint dimensions do not match the requested config."""


class VersionError(GenTextError):
    """Checkpoint version is incompatible."""


class ModelNotReady(GenTextError):
    """Pipeline invoked without the required trained component."""


class MissingInputError(GenTextError):
    """A required generation input slot is absent; names the slot."""

    def __init__(self, slot):
        super().__init__(slot)
        self.slot = slot


class RangeError(GenTextError):
    """Numeric argument outside its allowed range."""


class ExtractorMissing(GenTextError):
    """Perceptual feature extractor weights unavailable or hash mismatch."""


class EmptyEvalError(GenTextError):
    """Eval split has no paired images."""
