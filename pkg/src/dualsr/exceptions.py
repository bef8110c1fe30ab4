"""Shared exception types.

Exit-code mapping for the CLI lives in ``dualsr.cli``: config problems
exit 2, data problems exit 3, numeric aborts exit 4.
"""


class DualSRError(Exception):
    """Base class for all package errors."""


class ImageFormatError(DualSRError):
    """Unsupported image container, bit depth, or channel layout."""


class DataError(DualSRError):
    """Dataset or image-geometry problem (empty dir, patch too large, ...)."""


class ConfigError(DualSRError):
    """Invalid or unknown configuration key/value."""


class CheckpointError(DualSRError):
    """Checkpoint container is corrupt, truncated, or incompatible."""


class NumericAbort(DualSRError):
    """A loss went non-finite; carries the diagnostic log record."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
