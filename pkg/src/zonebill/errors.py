"""Exception hierarchy shared by every layer of the package."""


class ZonebillError(Exception):
    """Base class for all errors raised by zonebill."""


# numerics / billing model


class ZeroDenominator(ZonebillError, ZeroDivisionError):
    pass


class MixedZones(ZonebillError, ValueError):
    pass


class InvalidRecord(ZonebillError, ValueError):
    pass


# mpc core


class BackendMismatch(ZonebillError, TypeError):
    pass


class MissingContribution(ZonebillError):
    pass


class PreprocessingExhausted(ZonebillError):
    pass


class TripleExhausted(PreprocessingExhausted):
    pass


class MaskExhausted(PreprocessingExhausted):
    pass


class OpenDisagreement(ZonebillError):
    """Computing parties reconstructed different values for the same opening."""


# runtime


class JoinError(ZonebillError):
    """Dealer tuples could not be merged into user tuples."""


class DuplicateUserId(JoinError):
    pass


class UnknownZone(JoinError):
    pass


class UnknownUser(JoinError):
    pass


class UnauthorizedRecipient(ZonebillError):
    pass


class WireFormatError(ZonebillError, ValueError):
    pass


class TransportError(ZonebillError):
    pass


class Timeout(TransportError, TimeoutError):
    pass


class SessionAborted(TransportError):
    """Raised in a role when another role of the same session failed."""


class SessionFailed(ZonebillError):
    """A role failed; carries the role and the protocol phase it was in."""

    def __init__(self, role: str, phase: int, cause: BaseException):
        super().__init__(f"{role} failed in phase {phase}: {type(cause).__name__}: {cause}")
        self.role = role
        self.phase = phase
        self.cause = cause


# harness


class InvalidParams(ZonebillError, ValueError):
    pass
