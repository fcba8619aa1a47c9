"""Sensor-event data model and the ``timestamp,count,SID,value`` log format.

A record is one line::

    1370000000123,0,org.app.Core.login.0.0.0,12

The SID ``package.class.method.id.vid.vvid`` is parsed from the right
because ``package`` is itself dotted.  The value is everything after the
third comma, so string payloads may contain commas.  ``vid`` selects the
value type: 0 is a 64-bit number, 1 a 32-bit state code, 2 text.
"""

from __future__ import annotations

import io
import math
import re
import warnings
from dataclasses import dataclass
from decimal import Decimal
from functools import lru_cache
from typing import BinaryIO, ClassVar, Iterable, Iterator, TextIO, Union

from tracewatch import kernels
from tracewatch.errors import (
    MalformedRecord,
    MalformedSid,
    OutOfOrderWarning,
    TraceFormatError,
    ValueTypeMismatch,
)

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1
INT32_MIN = -(1 << 31)
INT32_MAX = (1 << 31) - 1

VID_NUMERIC = 0
VID_STATE = 1
VID_TEXT = 2

_FORBIDDEN_SEGMENT = re.compile(r"[.,\r\n]")
_INT_RE = re.compile(r"-?[0-9]+")
_FLOAT_RE = re.compile(r"-?[0-9]+\.[0-9]+")


def _check_segment(seg: str, what: str) -> None:
    if not isinstance(seg, str) or not seg or _FORBIDDEN_SEGMENT.search(seg):
        raise MalformedSid(f"invalid {what} segment {seg!r}")


def _check_uint(value: int, what: str) -> None:
    if type(value) is not int or not 0 <= value <= INT64_MAX:
        raise MalformedSid(f"{what} must be a non-negative 64-bit integer, got {value!r}")


@dataclass(frozen=True, slots=True)
class SensorId:
    package: str
    class_name: str
    method: str
    id: int = 0
    vid: int = 0
    vvid: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.package, str) or not self.package:
            raise MalformedSid("empty package")
        for seg in self.package.split("."):
            _check_segment(seg, "package")
        _check_segment(self.class_name, "class")
        _check_segment(self.method, "method")
        _check_uint(self.id, "id")
        _check_uint(self.vid, "vid")
        _check_uint(self.vvid, "vvid")

    def __str__(self) -> str:
        return (
            f"{self.package}.{self.class_name}.{self.method}"
            f".{self.id}.{self.vid}.{self.vvid}"
        )

    @classmethod
    def parse(cls, text: str) -> SensorId:
        return _parse_sid(text)


@lru_cache(maxsize=65536)
def _parse_sid(text: str) -> SensorId:
    if "\n" in text or "\r" in text:
        raise MalformedSid(f"line break inside SID {text!r}")
    return SensorId(*kernels.split_sid(text))


def _render_float(value: float) -> str:
    text = format(Decimal(repr(value)), "f")
    if "." not in text:
        text += ".0"
    return text


@dataclass(frozen=True, slots=True)
class Numeric64:
    """64-bit measurement, e.g. a duration in milliseconds.

    Integers must fit in int64; floats are IEEE doubles and render
    positionally (never with an exponent).
    """

    value: int | float
    vid: ClassVar[int] = VID_NUMERIC

    def __post_init__(self) -> None:
        v = self.value
        if type(v) is int:
            if not INT64_MIN <= v <= INT64_MAX:
                raise ValueTypeMismatch(f"{v} does not fit in 64 bits")
        elif type(v) is float:
            if not math.isfinite(v):
                raise ValueTypeMismatch(f"non-finite numeric value {v!r}")
        else:
            raise ValueTypeMismatch(f"numeric value must be int or float, got {v!r}")

    def render(self) -> str:
        if type(self.value) is int:
            return str(self.value)
        return _render_float(self.value)

    @classmethod
    def decode(cls, raw: str) -> Numeric64:
        if raw.isascii() and raw.isdigit() and len(raw) < 19:
            return cls(int(raw))
        if _INT_RE.fullmatch(raw):
            return cls(int(raw))
        if _FLOAT_RE.fullmatch(raw):
            return cls(float(raw))
        raise ValueTypeMismatch(f"not a 64-bit numeric value: {raw!r}")


@dataclass(frozen=True, slots=True)
class State32:
    """32-bit state code, e.g. an authentication state."""

    value: int
    vid: ClassVar[int] = VID_STATE

    def __post_init__(self) -> None:
        if type(self.value) is not int or not INT32_MIN <= self.value <= INT32_MAX:
            raise ValueTypeMismatch(f"state value must be a signed 32-bit integer, got {self.value!r}")

    def render(self) -> str:
        return str(self.value)

    @classmethod
    def decode(cls, raw: str) -> State32:
        if not _INT_RE.fullmatch(raw):
            raise ValueTypeMismatch(f"not a 32-bit state value: {raw!r}")
        return cls(int(raw))


@dataclass(frozen=True, slots=True)
class Text:
    value: str
    vid: ClassVar[int] = VID_TEXT

    def __post_init__(self) -> None:
        if not isinstance(self.value, str) or "\n" in self.value or "\r" in self.value:
            raise ValueTypeMismatch("text value must be a single-line string")

    def render(self) -> str:
        return self.value

    @classmethod
    def decode(cls, raw: str) -> Text:
        return cls(raw)


SensorValue = Union[Numeric64, State32, Text]

VALUE_TYPES: dict[int, type] = {
    VID_NUMERIC: Numeric64,
    VID_STATE: State32,
    VID_TEXT: Text,
}
_VALUE_CLASSES = frozenset(VALUE_TYPES.values())


@dataclass(frozen=True, slots=True)
class SensorEvent:
    timestamp: int
    count: int
    sid: SensorId
    value: SensorValue

    def __post_init__(self) -> None:
        ts, count = self.timestamp, self.count
        if type(ts) is not int or ts < 0 or ts > INT64_MAX:
            raise MalformedRecord(f"timestamp must be non-negative epoch ms, got {ts!r}")
        if type(count) is not int or count < 0 or count > INT64_MAX:
            raise MalformedRecord(f"count must be a non-negative integer, got {count!r}")
        value_type = type(self.value)
        if value_type not in _VALUE_CLASSES or value_type.vid != self.sid.vid:
            expected = VALUE_TYPES.get(self.sid.vid)
            if expected is None:
                raise ValueTypeMismatch(f"unknown value type id {self.sid.vid}")
            raise ValueTypeMismatch(f"vid {self.sid.vid} expects {expected.__name__}, got {value_type.__name__}")

    @property
    def order_key(self) -> tuple[int, int]:
        return (self.timestamp, self.count)


_DECODE_CACHE_LIMIT = 8192
_decode_cache: dict[int, dict[str, SensorValue]] = {VID_NUMERIC: {}, VID_STATE: {}}


def decode_value(vid: int, raw: str) -> SensorValue:
    cache = _decode_cache.get(vid)
    if cache is not None:
        value = cache.get(raw)
        if value is not None:
            return value
    value_type = VALUE_TYPES.get(vid)
    if value_type is None:
        raise ValueTypeMismatch(f"unknown value type id {vid}")
    value = value_type.decode(raw)
    if cache is not None:
        if len(cache) >= _DECODE_CACHE_LIMIT:
            cache.clear()
        cache[raw] = value
    return value


def parse_event(line: str) -> SensorEvent:
    """Parse one record (no trailing newline) into a :class:`SensorEvent`."""
    if "\n" in line or "\r" in line:
        raise MalformedRecord("record contains a line break")
    ts, count, sid_text, raw = kernels.split_record(line)
    sid = _parse_sid(sid_text)
    return SensorEvent(ts, count, sid, decode_value(sid.vid, raw))


def format_event(event: SensorEvent) -> str:
    return f"{event.timestamp},{event.count},{event.sid},{event.value.render()}"


def read_log(source: BinaryIO | TextIO | Iterable[bytes | str]) -> Iterator[SensorEvent]:
    """Yield events from a newline-delimited log in file order.

    Blank lines are skipped.  Decoding errors are re-raised with the
    1-based line number attached.  A record whose (timestamp, count) does
    not advance past the previous one emits :class:`OutOfOrderWarning`.
    """
    prev: tuple[int, int] | None = None
    for lineno, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise MalformedRecord(f"invalid UTF-8: {exc}", line=lineno) from None
        line = raw.rstrip("\n")
        if line.endswith("\r"):
            line = line[:-1]
        if not line:
            continue
        try:
            event = parse_event(line)
        except TraceFormatError as exc:
            exc.line = lineno
            raise
        key = (event.timestamp, event.count)
        if prev is not None and key <= prev:
            warnings.warn(
                OutOfOrderWarning(f"line {lineno}: {key} does not advance past {prev}"),
                stacklevel=2,
            )
        prev = key
        yield event


def read_log_file(path) -> list[SensorEvent]:
    with open(path, "rb") as fh:
        return list(read_log(fh))


def write_log(events: Iterable[SensorEvent], sink: TextIO) -> int:
    n = 0
    for event in events:
        sink.write(format_event(event))
        sink.write("\n")
        n += 1
    return n


def dumps(events: Iterable[SensorEvent]) -> str:
    buf = io.StringIO()
    write_log(events, buf)
    return buf.getvalue()


class CountStamper:
    """Assigns the per-timestamp ``count`` field in emission order.

    The counter restarts at 0 whenever the timestamp changes.
    """

    def __init__(self) -> None:
        self._last_ts: int | None = None
        self._next = 0

    def stamp(self, timestamp: int, sid: SensorId, value: SensorValue) -> SensorEvent:
        if timestamp != self._last_ts:
            self._last_ts = timestamp
            self._next = 0
        event = SensorEvent(timestamp, self._next, sid, value)
        self._next += 1
        return event


def restamp(events: Iterable[SensorEvent]) -> list[SensorEvent]:
    """Re-number ``count`` for an already timestamp-ordered event sequence."""
    stamper = CountStamper()
    return [stamper.stamp(e.timestamp, e.sid, e.value) for e in events]
