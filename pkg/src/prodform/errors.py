"""Exception types shared across the package."""


class ProdformError(Exception):
    """Base class for all package-specific failures."""


class CapExceeded(ProdformError):
    """An enumeration or brute-force sum would exceed its configured cap."""


class EvaluationError(ProdformError):
    """A test function or weight produced a non-finite value."""


class DegeneracyError(ProdformError):
    """All importance weights underflowed, or a normalizing sum vanished."""


class RegimeError(ProdformError):
    """Inputs fall outside the regime where a formula applies."""
