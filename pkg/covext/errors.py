"""Exception hierarchy for covext.

Library code raises these; the command-line front end maps them to exit codes.
"""


class CovextError(Exception):
    """Base class for all covext failures."""


class InvalidInputError(CovextError, ValueError):
    """Malformed or out-of-range input (exit code 1)."""


class NotCovariantStructureError(CovextError):
    """Effects do not carry the Gram structure of a covariant observable."""


class InvalidCertificateError(CovextError):
    """A certificate violates its defining constraints."""


class NumericalInconsistencyError(CovextError):
    """Two independent numerical criteria disagree."""


class NumericalFailureError(CovextError):
    """A factorization or decomposition broke down (exit code 2)."""
