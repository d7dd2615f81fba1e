"""Exception hierarchy shared by every layer of the format."""


class ZipcolError(Exception):
    """Base class for all errors raised by zipcol."""


class UndefinedWidthError(ZipcolError, ValueError):
    pass


class IllegalCodecError(ZipcolError, ValueError):
    """A codec was requested in a context that cannot use it."""


class UnsupportedOperationError(ZipcolError):
    pass


class CodecUnavailableError(ZipcolError):
    """An algorithm tag is reserved but has no implementation in this build."""


class RoutingError(ZipcolError, ValueError):
    """Data was routed to an encoding that cannot hold it."""


class DecodeError(ZipcolError):
    """Raised when a buffer cannot be decoded.

    ``offset`` is the byte position (relative to the buffer being decoded)
    where the problem was detected, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class CorruptLevelsError(DecodeError):
    pass


class FormatError(ZipcolError):
    """The container (footer, magic, metadata block) is malformed."""
