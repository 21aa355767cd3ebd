"""Exception hierarchy shared by every sepris module."""


class SeprisError(Exception):
    """Base class for all sepris errors."""


# codec
class CodecError(SeprisError):
    pass


class InvalidQuality(CodecError, ValueError):
    pass


class WeakKey(CodecError, ValueError):
    pass


class GeometryError(CodecError, ValueError):
    pass


class WrongShuffleKey(CodecError):
    pass


class FormatError(SeprisError, ValueError):
    """A file or wire record could not be parsed."""


# metrics
class MetricsError(SeprisError, ValueError):
    pass


class DimensionMismatch(MetricsError):
    pass


class TooFewBits(MetricsError):
    pass


class NotApplicable(MetricsError):
    """A randomness test's prerequisite failed, so its statistic is undefined."""


class ZeroVariance(MetricsError):
    pass


class EmptyInput(MetricsError):
    pass


# envelopes
class EnvelopeError(SeprisError):
    pass


class EntropyError(EnvelopeError, ValueError):
    pass


class AuthTagMismatch(EnvelopeError):
    pass


class SignatureInvalid(EnvelopeError):
    pass


class WrongRecipient(EnvelopeError):
    pass


# ledger
class LedgerError(SeprisError):
    pass


class InvalidTransaction(LedgerError, ValueError):
    pass


class UnknownBodyKey(LedgerError, KeyError):
    pass


# contract
class ContractError(SeprisError):
    pass


class RegistryCollision(ContractError):
    pass


class CodeAlreadyConsumed(ContractError):
    pass


# network
class NetworkError(SeprisError):
    pass


class UnknownUser(NetworkError):
    pass


class CredentialMismatch(NetworkError):
    pass


class SessionRejected(NetworkError):
    pass


class DivergentAcl(NetworkError):
    pass


class UnknownStorageSite(NetworkError):
    pass


class ProtocolStepError(NetworkError):
    """Wraps a failure with the protocol step (1..10) at which it happened."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause


# storage
class StorageError(SeprisError):
    pass


class DuplicateSegment(StorageError):
    pass


class SegmentNotFound(StorageError):
    pass


class NoMatchingGrant(StorageError):
    pass
