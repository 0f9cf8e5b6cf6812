"""Exception hierarchy shared by every module of the package."""


class V2VError(Exception):
    """Base class for all package errors."""


class ParameterError(V2VError, ValueError):
    """An argument violates an operation's precondition."""


class CapabilityError(V2VError, RuntimeError):
    """The request is valid in principle but beyond a configured bound."""


class ProtocolError(V2VError):
    """A protocol step cannot be completed with the given state."""


class DuplicateError(ProtocolError):
    pass


class UnknownTidError(ProtocolError, KeyError):
    pass


class IdentificationError(ProtocolError):
    """A cluster-forming value could not be traced back to a vehicle."""

    def __init__(self, index, message="cfm failed identification"):
        super().__init__(f"{message} (index {index})")
        self.index = index


class LifetimeError(ProtocolError):
    """A cluster has used up all of its token epochs."""


class InsufficientSharesError(ProtocolError):
    pass


class JoinAborted(ProtocolError):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class SchemaError(V2VError, ValueError):
    """A scenario or trace document is malformed."""
