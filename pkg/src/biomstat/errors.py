"""Exception types shared across the package.

The CLI maps these onto exit codes: malformed inputs and invariant
violations exit 1, insufficient or degenerate data exits 2.
"""


class BiomstatError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(BiomstatError):
    """A file or byte stream does not follow its documented format."""


class ValidationError(BiomstatError):
    """Parsed data violates a structural invariant."""


class InsufficientDataError(BiomstatError):
    """Too few frames or pairs to compute the requested statistic."""


class DegenerateDataError(BiomstatError):
    """A dataset selection cannot support training or evaluation."""
