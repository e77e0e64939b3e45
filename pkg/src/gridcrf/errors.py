"""Exception types shared across the package."""


class GridCrfError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(GridCrfError):
    """An operation was called with arguments that break its contract
    (shape mismatch, invalid site index, bad partition, ...)."""


class SizeLimitError(GridCrfError):
    """Exact enumeration was requested on an instance too large to enumerate."""


class FormatError(GridCrfError):
    """A file (PGM image, checkpoint, config) is malformed.

    The message names the offending field.
    """
