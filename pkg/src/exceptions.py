"""
Exception hierarchy for the deblurring package.

Every error raised on purpose by the package derives from DeblurError so the
command runners can tell expected failures apart from programming errors.
"""

from typing import Optional


class DeblurError(Exception):
    """Base class for all package errors."""


class ShapeError(DeblurError, ValueError):
    """Tensor dimensions, channel counts or divisibility do not fit an operation."""


class NonFiniteError(DeblurError, FloatingPointError):
    """A NaN or Inf value was produced or received where finite values are required."""


class TapeError(DeblurError, RuntimeError):
    """Misuse of a gradient tape (consumed twice, non-scalar loss, ...)."""


class PatternError(DeblurError, ValueError):
    """A hierarchy pattern string such as "1-2-4-8" is malformed."""


class ConfigError(DeblurError, ValueError):
    """A model or training configuration is inconsistent."""


class UsageError(ConfigError):
    """Invalid combination of command-line options (exit code 2)."""


class ImageFormatError(DeblurError, OSError):
    """An image file is in an unsupported format or cannot be decoded."""


class TrainingDivergedError(DeblurError, RuntimeError):
    """The training loss became non-finite.

    Attributes:
        step: Optimizer step at which the loss diverged
        last_checkpoint: Path of the last good checkpoint, if one was written
    """

    def __init__(self, message: str, step: int, last_checkpoint: Optional[str] = None):
        super().__init__(message)
        self.step = step
        self.last_checkpoint = last_checkpoint


class CheckpointError(DeblurError, OSError):
    """Base class for checkpoint decoding and loading failures."""


class BadMagicError(CheckpointError):
    """The file does not start with the checkpoint magic bytes."""


class VersionMismatchError(CheckpointError):
    """The checkpoint format version is not supported."""


class TruncatedCheckpointError(CheckpointError):
    """The checkpoint ended before all declared content was read."""


class DimensionOverflowError(CheckpointError):
    """A tensor header declares dimensions that cannot be valid."""


class ChecksumError(CheckpointError):
    """The trailing CRC32 does not match the checkpoint content."""


class ParameterMismatchError(CheckpointError):
    """Checkpoint tensors do not match the parameters of the target model."""
