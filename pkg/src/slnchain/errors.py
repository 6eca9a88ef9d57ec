"""Exception hierarchy shared by every slnchain module.

Each error carries a stable ``code`` so the CLI can report it in a
machine-readable way.
"""


class SLNError(Exception):
    """Base class for domain errors."""

    code = "SLNError"


class DuplicateAccount(SLNError):
    code = "DuplicateAccount"


class AccountNotFound(SLNError):
    code = "AccountNotFound"


class NotAssetOwner(SLNError):
    code = "NotAssetOwner"


class DoubleSpend(SLNError):
    code = "DoubleSpend"


class LedgerCorrupt(SLNError):
    code = "LedgerCorrupt"


class InvalidIdentifier(SLNError, ValueError):
    code = "InvalidIdentifier"


class MissingPreviousLocation(SLNError):
    code = "MissingPreviousLocation"


class IllegalTransition(SLNError):
    code = "IllegalTransition"


class PublisherHalted(SLNError):
    code = "PublisherHalted"


class LinkNotFound(SLNError):
    code = "LinkNotFound"


class ProcessNotFound(SLNError):
    code = "ProcessNotFound"


class InsufficientTrustiness(SLNError):
    code = "InsufficientTrustiness"


class InsufficientResponsibility(SLNError):
    code = "InsufficientResponsibility"


class DuplicateRequest(SLNError):
    code = "DuplicateRequest"


class WrongPhase(SLNError):
    code = "WrongPhase"


class DomainError(SLNError, ValueError):
    code = "DomainError"
