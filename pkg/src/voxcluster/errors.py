"""Exception taxonomy shared across the package.

The CLI maps these onto distinct exit codes, so new error conditions
should reuse an existing class or extend VoxclusterError.
"""


class VoxclusterError(Exception):
    """Base class for all voxcluster errors."""


class VolumeFormatError(VoxclusterError):
    """File does not look like the expected format (bad magic, bad version)."""


class CorruptFileError(VoxclusterError):
    """File matches the format but its payload is truncated or has trailing junk."""


class InvalidHeaderError(VoxclusterError):
    """Header fields violate the format contract (n < 2, q_min >= q_max, ...)."""


class OutOfRangeError(VoxclusterError):
    """Physical coordinate falls outside the padded axis range."""


class EmptyDataError(VoxclusterError):
    """An operation that needs at least one finite value got none."""


class InvalidRangeError(VoxclusterError):
    """A (lo, hi) interval with lo >= hi."""


class MissingParameterError(VoxclusterError):
    """A dependent parameter was omitted (e.g. scaled filter without threshold)."""
