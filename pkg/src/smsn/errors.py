"""Exception hierarchy shared across the smsn package."""


class SmsnError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SmsnError, ValueError):
    """An argument violates a documented precondition."""


class DecryptionError(SmsnError):
    """Authenticated decryption failed (wrong key or tampered ciphertext)."""


class ParseError(SmsnError):
    """Malformed wire bytes."""


class InvalidTicket(SmsnError):
    """Ticket could not be verified against the local key material."""


class WrongGroup(SmsnError):
    """Ticket's group hash does not match any group known to the verifier."""


class TreeSearchMiss(SmsnError, LookupError):
    """No consistent root-to-leaf path for the given hash vector and index."""


class ProtocolError(SmsnError):
    """A state transition was attempted out of order."""


class ConfigError(SmsnError):
    """Simulation configuration is ill-formed."""


class IncompleteTrace(SmsnError):
    """Trace lacks the instrumentation records needed for cost accounting."""
