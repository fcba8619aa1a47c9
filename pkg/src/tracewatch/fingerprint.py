"""Per-request fingerprints and their per-period class counts.

A fingerprint is the ordered chain of ``(SID, quantized duration)`` pairs
one request produced.  Two requests belong to the same class when their
chains are equal element-wise; ``class_key`` is a stable digest of the
chain so classes can be counted and reported cheaply.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Iterator, Union

from tracewatch import kernels
from tracewatch.errors import EmptyTrace
from tracewatch.events import VID_STATE, Numeric64, SensorEvent, SensorId, State32, Text

DEFAULT_BUCKET_MS = 3
MARKER_CLASS = "RequestMarker"


def is_marker(sid: SensorId) -> bool:
    """Default request-boundary test: a State32 sensor on class ``RequestMarker``."""
    return sid.class_name == MARKER_CLASS and sid.vid == VID_STATE


@dataclass(frozen=True)
class TaggedGrouping:
    """Each marker event starts a new request; events before the first
    marker form one orphan trace."""

    is_marker: Callable[[SensorId], bool] = is_marker


@dataclass(frozen=True)
class GapGrouping:
    """A silence of at least ``gap_ms`` starts a new request."""

    gap_ms: int

    def __post_init__(self) -> None:
        if self.gap_ms <= 0:
            raise ValueError("gap_ms must be positive")


GroupingPolicy = Union[TaggedGrouping, GapGrouping]
TAGGED = TaggedGrouping()


def parse_grouping(text: str) -> GroupingPolicy:
    """``"tagged"`` or ``"gap:MS"``."""
    if text == "tagged":
        return TAGGED
    if text.startswith("gap:"):
        try:
            return GapGrouping(int(text[4:]))
        except ValueError as exc:
            raise ValueError(f"bad gap grouping {text!r}: {exc}") from None
    raise ValueError(f"unknown grouping policy {text!r} (expected 'tagged' or 'gap:MS')")


@dataclass(frozen=True)
class RequestTrace:
    request_id: Hashable
    events: tuple[SensorEvent, ...]

    @property
    def first_ts(self) -> int:
        return self.events[0].timestamp


def iter_requests(events: Iterable[SensorEvent], policy: GroupingPolicy = TAGGED) -> Iterator[RequestTrace]:
    current: list[SensorEvent] = []
    if isinstance(policy, TaggedGrouping):
        rid: Hashable = "orphan"
        for event in events:
            if policy.is_marker(event.sid):
                if current:
                    yield RequestTrace(rid, tuple(current))
                current = [event]
                rid = event.value.value
            else:
                current.append(event)
    else:
        index = 0
        prev_ts = None
        for event in events:
            if current and event.timestamp - prev_ts >= policy.gap_ms:
                yield RequestTrace(index, tuple(current))
                index += 1
                current = []
            current.append(event)
            prev_ts = event.timestamp
        rid = index
    if current:
        yield RequestTrace(rid, tuple(current))


def group_requests(events: Iterable[SensorEvent], policy: GroupingPolicy = TAGGED) -> list[RequestTrace]:
    return list(iter_requests(events, policy))


ChainItem = tuple[SensorId, Union[int, str]]


@dataclass(frozen=True)
class Fingerprint:
    chain: tuple[ChainItem, ...]
    class_key: str
    first_ts: int
    request_id: Hashable = None
    # unquantized durations, parallel to ``chain`` (None for non-numeric items)
    raw: tuple = ()


def chain_key(chain: Iterable[ChainItem]) -> str:
    h = hashlib.blake2b(digest_size=8)
    for sid, value in chain:
        h.update(f"{sid}={value}\n".encode())
    return h.hexdigest()


def extract_fingerprint(
    trace: RequestTrace,
    bucket_ms: int = DEFAULT_BUCKET_MS,
    *,
    include_state: bool = False,
    include_text: bool = False,
) -> Fingerprint:
    """Build the fingerprint of one request.

    Numeric durations are floored to ``bucket_ms`` buckets.  State and
    text events are left out unless asked for, in which case they enter
    the chain with their raw value.
    """
    if not trace.events:
        raise EmptyTrace(f"request {trace.request_id!r} has no events")
    if bucket_ms <= 0:
        raise ValueError("bucket_ms must be positive")
    sids: list[SensorId] = []
    durations: list = []
    extras: dict[int, ChainItem] = {}
    for event in trace.events:
        value = event.value
        if type(value) is Numeric64:
            sids.append(event.sid)
            durations.append(value.value)
        elif (include_state and type(value) is State32) or (include_text and type(value) is Text):
            extras[len(sids) + len(extras)] = (event.sid, value.value)
    quantized = kernels.quantize(durations, bucket_ms)
    if extras:
        chain: list[ChainItem] = []
        raw: list = []
        it = iter(zip(sids, quantized, durations))
        for pos in range(len(sids) + len(extras)):
            if pos in extras:
                chain.append(extras[pos])
                raw.append(None)
            else:
                sid, q, d = next(it)
                chain.append((sid, q))
                raw.append(d)
        chain_t = tuple(chain)
        raw_t = tuple(raw)
    else:
        chain_t = tuple(zip(sids, quantized))
        raw_t = tuple(durations)
    return Fingerprint(chain_t, chain_key(chain_t), trace.first_ts, trace.request_id, raw_t)


def fingerprint_class_counts(
    fingerprints: Iterable[Fingerprint],
    period_ms: int,
    t0: int | None = None,
) -> Counter:
    """Map ``(period_index, class_key)`` to the number of fingerprints.

    ``t0`` defaults to the earliest fingerprint timestamp.
    """
    if period_ms <= 0:
        raise ValueError("period_ms must be positive")
    fingerprints = list(fingerprints)
    if t0 is None and fingerprints:
        t0 = min(fp.first_ts for fp in fingerprints)
    counts: Counter = Counter()
    for fp in fingerprints:
        counts[(fp.first_ts - t0) // period_ms, fp.class_key] += 1
    return counts


def format_chain(chain: Iterable[ChainItem]) -> str:
    return " > ".join(f"{sid}={value}" for sid, value in chain)


@dataclass
class ClassSummary:
    class_key: str
    count: int
    example: tuple[ChainItem, ...]
    # per position: running sum of raw durations across members
    duration_sums: list

    def mean_durations(self) -> list[float | None]:
        return [None if s is None else s / self.count for s in self.duration_sums]


def summarize_classes(fingerprints: Iterable[Fingerprint]) -> list[ClassSummary]:
    """Per-class member counts and mean raw duration per chain position,
    ordered by descending count then key."""
    classes: dict[str, ClassSummary] = {}
    for fp in fingerprints:
        summary = classes.get(fp.class_key)
        if summary is None:
            classes[fp.class_key] = ClassSummary(
                fp.class_key, 1, fp.chain, list(fp.raw)
            )
        else:
            summary.count += 1
            summary.duration_sums = [
                None if s is None else s + r for s, r in zip(summary.duration_sums, fp.raw)
            ]
    return sorted(classes.values(), key=lambda c: (-c.count, c.class_key))
