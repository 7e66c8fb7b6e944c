"""Shared exception types.

Errors are split by who has to fix them: bad input data (DataError),
incorrect API usage (UsageError), a peer that cannot be reached
(TransportError), and a peer that answered with something malformed
(ProtocolError).
"""


class ReqClusterError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ReqClusterError):
    """The input data is malformed or inconsistent."""


class UsageError(ReqClusterError):
    """The caller violated an API precondition."""


class TransportError(ReqClusterError):
    """A remote peer could not be reached or refused the request."""


class ProtocolError(ReqClusterError):
    """A remote peer answered with a malformed or inconsistent payload."""
