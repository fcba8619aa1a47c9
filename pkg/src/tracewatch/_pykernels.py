"""Pure-Python reference kernels.

Every function here has a twin in ``_ckernels.pyx`` with identical
results and identical exception types; ``tracewatch.kernels`` picks one
at import time.
"""

from __future__ import annotations

from tracewatch.errors import MalformedRecord, MalformedSid

INT64_MAX = (1 << 63) - 1


def _uint(text: str, what: str, exc: type) -> int:
    if not text or not (text.isascii() and text.isdigit()):
        raise exc(f"non-integer {what}: {text!r}")
    value = int(text)
    if value > INT64_MAX:
        raise exc(f"{what} out of range: {text!r}")
    return value


def split_record(line: str) -> tuple[int, int, str, str]:
    """Split ``timestamp,count,SID,value`` on the first three commas."""
    parts = line.split(",", 3)
    if len(parts) < 4:
        raise MalformedRecord(
            f"expected 'timestamp,count,SID,value', found {len(parts) - 1} comma(s)"
        )
    ts = _uint(parts[0], "timestamp", MalformedRecord)
    count = _uint(parts[1], "count", MalformedRecord)
    return ts, count, parts[2], parts[3]


def split_sid(text: str) -> tuple[str, str, str, int, int, int]:
    """Split ``package.class.method.id.vid.vvid`` from the right."""
    segs = text.rsplit(".", 5)
    if len(segs) < 6:
        raise MalformedSid(f"SID needs 6 dot-separated segments: {text!r}")
    package, cls, method = segs[0], segs[1], segs[2]
    if not cls or not method:
        raise MalformedSid(f"empty class or method segment: {text!r}")
    if not package or "" in package.split("."):
        raise MalformedSid(f"empty package segment: {text!r}")
    return (
        package,
        cls,
        method,
        _uint(segs[3], "id", MalformedSid),
        _uint(segs[4], "vid", MalformedSid),
        _uint(segs[5], "vvid", MalformedSid),
    )


def quantize(durations, bucket: int) -> list[int]:
    return [int(d // bucket) * bucket for d in durations]


def nearest_rank(values, rank: int):
    """Element at 1-based ``rank`` of ``values`` sorted ascending."""
    n = len(values)
    if not 1 <= rank <= n:
        raise IndexError(f"rank {rank} outside 1..{n}")
    return sorted(values)[rank - 1]
