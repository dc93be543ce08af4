"""Exception hierarchy shared by client, store and service."""


class BifrostError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(BifrostError, ValueError):
    """Invalid configuration or argument combination."""


class LengthMismatchError(BifrostError, ValueError):
    """Symbol strings or chunk lists whose sizes disagree."""


class DistanceBudgetExceeded(BifrostError, OverflowError):
    """Exact swap/change distance needed more DP states than allowed; pass a cutoff."""


class DecryptionFailure(BifrostError):
    """AEAD authentication rejected a ciphertext (tampering or wrong key)."""


class IntegrityFailure(BifrostError):
    """Reconstructed file does not match its MAC tag."""


class CorruptionError(BifrostError):
    """Persisted store data failed a checksum or references a missing record."""


class NotFoundError(BifrostError):
    """No object is stored under the requested tag."""


class ConflictError(BifrostError):
    """A tag is already bound to different content."""


class ProtocolError(BifrostError):
    """Malformed frame or unexpected message on the wire."""


class RemoteError(BifrostError):
    """The service answered with an error this client cannot map more precisely."""
