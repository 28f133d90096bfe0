"""Exception types raised across the package."""


class SipstabError(Exception):
    """Base class for package errors."""


class DimensionError(SipstabError, ValueError):
    """A point or vector does not match the decision dimension."""


class SpecError(SipstabError, ValueError):
    """Malformed function, system or scenario data."""


class InfeasiblePointError(SipstabError, ValueError):
    """The reference point is not feasible for the nominal system."""


class InfeasibleSystemError(SipstabError):
    """The feasible set of the perturbed system is empty."""


class SSCViolationError(SipstabError):
    """The strong Slater condition fails, so the requested formula does not apply."""
