"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so raising the right class
matters at module boundaries: bad input data is not the same failure as a
broken socket.
"""


class IsmkitError(Exception):
    """Base class for all package errors."""


class DataError(IsmkitError):
    """Input data violates a precondition (shape, range, ordering, format)."""


class FileFormatError(DataError):
    """A file exists but its contents cannot be parsed."""


class ProtocolError(IsmkitError):
    """Wire-protocol violation (framing, ordering, version)."""


class UsageError(IsmkitError):
    """Command line or configuration misuse."""
