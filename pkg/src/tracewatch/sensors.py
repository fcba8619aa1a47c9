"""Derived sensors: alerts, regex filters, and one-time / windowed aggregation.

Each sensor is a small transformer over :class:`SensorEvent` values.
:class:`Pipeline` runs a set of them over an ordered stream.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from itertools import groupby
from typing import Iterable, Iterator, Literal

from tracewatch.errors import MissingInput, SensorTypeError
from tracewatch.events import (
    VID_NUMERIC,
    Numeric64,
    SensorEvent,
    SensorId,
    Text,
    restamp,
)
from tracewatch.quantile import nearest_rank

NumericValue = int | float


def _numeric(event: SensorEvent) -> NumericValue:
    if isinstance(event.value, Text):
        raise SensorTypeError(f"{event.sid} carries text, a numeric value is required")
    return event.value.value


@dataclass(frozen=True)
class Alert:
    sid: SensorId
    timestamp: int
    violated_bound: Literal["lower", "upper"]
    bound: NumericValue
    observed: NumericValue


@dataclass(frozen=True)
class AlertSensorConfig:
    """Alert when a value falls strictly outside ``[lower, upper]``."""

    target_sid: SensorId
    lower: NumericValue | None = None
    upper: NumericValue | None = None

    def __post_init__(self) -> None:
        if self.lower is None and self.upper is None:
            raise ValueError("an alert sensor needs a lower and/or an upper bound")
        if self.lower is not None and self.upper is not None and self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")


def evaluate_alert(cfg: AlertSensorConfig, event: SensorEvent) -> Alert | None:
    if event.sid != cfg.target_sid:
        raise ValueError(f"event {event.sid} is not the alert target {cfg.target_sid}")
    observed = _numeric(event)
    if cfg.lower is not None and observed < cfg.lower:
        return Alert(event.sid, event.timestamp, "lower", cfg.lower, observed)
    if cfg.upper is not None and observed > cfg.upper:
        return Alert(event.sid, event.timestamp, "upper", cfg.upper, observed)
    return None


@dataclass(frozen=True)
class FilterSensorConfig:
    """Re-emit events of ``target_sid`` under ``output_sid`` when ``pattern`` matches.

    Matching uses :func:`re.search` on the value's log rendering, so
    numbers are matched in plain decimal.
    """

    target_sid: SensorId
    pattern: str
    output_sid: SensorId
    regex: re.Pattern = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "regex", re.compile(self.pattern))
        if self.output_sid == self.target_sid:
            raise ValueError("filter output SID must differ from its target")
        if self.output_sid.vid != self.target_sid.vid:
            raise ValueError("filter output SID must keep the target's value type (vid)")


def apply_filter(cfg: FilterSensorConfig, event: SensorEvent) -> SensorEvent | None:
    if event.sid != cfg.target_sid:
        raise ValueError(f"event {event.sid} is not the filter target {cfg.target_sid}")
    if cfg.regex.search(event.value.render()):
        return replace(event, sid=cfg.output_sid)
    return None


OneTimeOp = Literal["sum", "product", "log"]


@dataclass(frozen=True)
class OneTimeAggConfig:
    """Combine same-timestamp values of several sensors into one.

    ``sum`` and ``product`` take two or more inputs; ``log`` (natural
    log) takes exactly one.
    """

    input_sids: tuple[SensorId, ...]
    op: OneTimeOp
    output_sid: SensorId

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_sids", tuple(self.input_sids))
        if self.op not in ("sum", "product", "log"):
            raise ValueError(f"unknown one-time aggregation {self.op!r}")
        if len(set(self.input_sids)) != len(self.input_sids):
            raise ValueError("aggregation inputs must be distinct")
        if self.op == "log" and len(self.input_sids) != 1:
            raise ValueError("log-scale aggregation takes exactly one input")
        if self.op != "log" and len(self.input_sids) < 2:
            raise ValueError(f"{self.op} aggregation needs at least two inputs")
        if self.output_sid.vid != VID_NUMERIC:
            raise ValueError("aggregation output must be a numeric (vid 0) sensor")


def aggregate_once(cfg: OneTimeAggConfig, inputs: Iterable[SensorEvent]) -> SensorEvent:
    """Aggregate one event per input SID sharing a timestamp.

    Events for other SIDs are ignored.  The output's ``count`` is 0; use
    :func:`tracewatch.events.restamp` when merging into a larger stream.
    """
    wanted = set(cfg.input_sids)
    by_sid: dict[SensorId, SensorEvent] = {}
    for event in inputs:
        if event.sid not in wanted:
            continue
        if event.sid in by_sid:
            raise ValueError(f"more than one event for {event.sid}")
        by_sid[event.sid] = event
    missing = [str(s) for s in cfg.input_sids if s not in by_sid]
    if missing:
        raise MissingInput(f"no event for {', '.join(missing)}")
    stamps = {e.timestamp for e in by_sid.values()}
    if len(stamps) != 1:
        raise ValueError(f"inputs are not aligned on one timestamp: {sorted(stamps)}")
    values = [_numeric(by_sid[s]) for s in cfg.input_sids]
    if cfg.op == "sum":
        result = sum(values)
    elif cfg.op == "product":
        result = math.prod(values)
    else:
        if values[0] <= 0:
            raise ValueError(f"log-scale of non-positive value {values[0]}")
        result = math.log(values[0])
    return SensorEvent(stamps.pop(), 0, cfg.output_sid, Numeric64(result))


@dataclass(frozen=True)
class ContinuousAggConfig:
    """Mean or nearest-rank quantile over tumbling windows of ``window_ms``.

    Windows are aligned to the epoch: window ``k`` covers
    ``[k * window_ms, (k + 1) * window_ms)`` and its output is stamped at
    the window's last millisecond.
    """

    input_sid: SensorId
    window_ms: int
    output_sid: SensorId
    op: Literal["mean", "quantile"] = "mean"
    q: float | None = None

    def __post_init__(self) -> None:
        if self.window_ms <= 0:
            raise ValueError("window_ms must be positive")
        if self.op == "quantile":
            if self.q is None or not 0 < self.q < 1:
                raise ValueError("quantile aggregation needs q in (0, 1)")
        elif self.op != "mean":
            raise ValueError(f"unknown continuous aggregation {self.op!r}")
        if self.output_sid.vid != VID_NUMERIC:
            raise ValueError("aggregation output must be a numeric (vid 0) sensor")


def aggregate_window(cfg: ContinuousAggConfig, stream: Iterable[SensorEvent]) -> Iterator[SensorEvent]:
    w = cfg.window_ms

    def emit(k: int, values: list) -> SensorEvent:
        if cfg.op == "mean":
            result = sum(values) / len(values)
        else:
            result = nearest_rank(values, cfg.q)
        return SensorEvent((k + 1) * w - 1, 0, cfg.output_sid, Numeric64(result))

    current: int | None = None
    values: list = []
    for event in stream:
        if event.sid != cfg.input_sid:
            continue
        k = event.timestamp // w
        if current is not None and k != current:
            yield emit(current, values)
            values = []
        current = k
        values.append(_numeric(event))
    if values:
        yield emit(current, values)


@dataclass(frozen=True)
class PipelineResult:
    derived: list[SensorEvent]
    alerts: list[Alert]


@dataclass
class Pipeline:
    alerts: list[AlertSensorConfig] = field(default_factory=list)
    filters: list[FilterSensorConfig] = field(default_factory=list)
    once: list[OneTimeAggConfig] = field(default_factory=list)
    windows: list[ContinuousAggConfig] = field(default_factory=list)

    def run(self, events: Iterable[SensorEvent]) -> PipelineResult:
        """Run every configured sensor over an ordered stream.

        Derived events are merged in timestamp order and their counts
        renumbered per timestamp.
        """
        events = list(events)
        alerts: list[Alert] = []
        derived: list[SensorEvent] = []
        for event in events:
            for cfg in self.alerts:
                if event.sid == cfg.target_sid:
                    alert = evaluate_alert(cfg, event)
                    if alert is not None:
                        alerts.append(alert)
            for fcfg in self.filters:
                if event.sid == fcfg.target_sid:
                    out = apply_filter(fcfg, event)
                    if out is not None:
                        derived.append(out)
        for _, group in groupby(events, key=lambda e: e.timestamp):
            group = list(group)
            seen: dict[SensorId, int] = {}
            for e in group:
                seen[e.sid] = seen.get(e.sid, 0) + 1
            for ocfg in self.once:
                # instants where an input fired twice are ambiguous and skipped
                if all(seen.get(s) == 1 for s in ocfg.input_sids):
                    derived.append(aggregate_once(ocfg, group))
        for wcfg in self.windows:
            derived.extend(aggregate_window(wcfg, events))
        derived.sort(key=lambda e: e.timestamp)
        return PipelineResult(restamp(derived), alerts)


__all__ = [
    "Alert",
    "AlertSensorConfig",
    "ContinuousAggConfig",
    "FilterSensorConfig",
    "OneTimeAggConfig",
    "Pipeline",
    "PipelineResult",
    "aggregate_once",
    "aggregate_window",
    "apply_filter",
    "evaluate_alert",
]
