"""Exception and warning types shared across tracewatch."""

from __future__ import annotations


class TraceFormatError(ValueError):
    """A log record could not be decoded.

    ``line`` is the 1-based line number when the record came from a file.
    """

    def __init__(self, message: str, line: int | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.line = line

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        return f"line {self.line}: {self.message}"


class MalformedRecord(TraceFormatError):
    pass


class MalformedSid(TraceFormatError):
    pass


class ValueTypeMismatch(TraceFormatError):
    """The value field does not decode under the SID's value-type id."""


class OutOfOrderWarning(UserWarning):
    """A record's (timestamp, count) does not advance past its predecessor."""


class SensorTypeError(TypeError):
    """A sensor received a value variant it cannot operate on."""


class MissingInput(LookupError):
    pass


class EmptyTrace(ValueError):
    pass


class EmptyHistory(ValueError):
    pass
