"""History-based normal model and the per-period attack decision.

For every fingerprint class the model keeps the last ``n`` per-period
counts observed while no attack was flagged.  Its baseline ``alpha`` is
the nearest-rank ``q``-quantile of that history, and a period is an
attack for the class when ``count >= alpha * p``.
"""

from __future__ import annotations

import logging
from collections import Counter, deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

from tracewatch.events import SensorEvent
from tracewatch.fingerprint import (
    DEFAULT_BUCKET_MS,
    TAGGED,
    GroupingPolicy,
    extract_fingerprint,
    iter_requests,
)
from tracewatch.quantile import nearest_rank

logger = logging.getLogger(__name__)

GLOBAL_KEY = "*"


@dataclass(frozen=True)
class DetectorConfig:
    period_ms: int = 10_000
    history_periods: int = 30
    sensitivity: float = 1.5
    quantile: float = 0.95
    warmup_periods: int | None = None  # defaults to history_periods
    global_model: bool = False
    bucket_ms: int = DEFAULT_BUCKET_MS

    def __post_init__(self) -> None:
        if self.period_ms <= 0:
            raise ValueError("period_ms must be positive")
        if self.history_periods <= 0:
            raise ValueError("history_periods must be positive")
        if not self.sensitivity > 0:
            raise ValueError("sensitivity must be positive")
        if not 0 < self.quantile < 1:
            raise ValueError("quantile must lie in (0, 1)")
        if self.warmup_periods is None:
            object.__setattr__(self, "warmup_periods", self.history_periods)
        if not 1 <= self.warmup_periods <= self.history_periods:
            raise ValueError("warmup_periods must lie in 1..history_periods")
        if self.bucket_ms <= 0:
            raise ValueError("bucket_ms must be positive")


@dataclass(frozen=True)
class Verdict:
    period_index: int
    class_key: str
    count: int
    alpha: int | None
    threshold: float | None
    attack: bool

    def to_line(self) -> str:
        alpha = "-" if self.alpha is None else str(self.alpha)
        threshold = "-" if self.threshold is None else repr(self.threshold)
        flag = "ATTACK" if self.attack else "OK"
        return f"{self.period_index}\t{self.class_key}\t{self.count}\t{alpha}\t{threshold}\t{flag}"


def alpha(history: Sequence[int], q: float) -> int:
    """Nearest-rank ``q``-quantile of ``history`` (``EmptyHistory`` if empty)."""
    return nearest_rank(history, q)


def classify(count: float, alpha: float, p: float) -> bool:
    """True (attack) iff ``count >= alpha * p``, evaluated exactly."""
    return Fraction(count) >= Fraction(alpha) * Fraction(p)


class NormalModel:
    """Per-class count histories plus a global history of period totals.

    Only periods with no attack verdict feed the histories.  Absent
    classes contribute a zero count; a class whose whole history is zero
    is dropped, and falls back to the global baseline if seen again.
    """

    def __init__(self, config: DetectorConfig | None = None) -> None:
        self.config = config or DetectorConfig()
        self.histories: dict[str, deque[int]] = {}
        self.global_history: deque[int] = deque(maxlen=self.config.history_periods)
        self.periods_completed = 0

    @property
    def warming_up(self) -> bool:
        return self.periods_completed < self.config.warmup_periods

    def alpha_for(self, key: str) -> int | None:
        history = self.histories.get(key)
        if history:
            return alpha(history, self.config.quantile)
        if self.global_history:
            return alpha(self.global_history, self.config.quantile)
        return None

    def step(self, period_index: int, period_counts: Mapping[str, int]) -> list[Verdict]:
        """Classify one closed period and update the histories.

        Verdicts are produced for classes with a non-zero count, sorted
        by class key.
        """
        cfg = self.config
        total = sum(period_counts.values())
        if cfg.global_model:
            counts = {GLOBAL_KEY: total} if total else {}
        else:
            counts = {k: c for k, c in period_counts.items() if c}
        warm = self.warming_up
        verdicts = []
        for key in sorted(counts):
            count = counts[key]
            a = None if warm else self.alpha_for(key)
            if a is None:
                verdicts.append(Verdict(period_index, key, count, None, None, False))
            else:
                attack = classify(count, a, cfg.sensitivity)
                verdicts.append(Verdict(period_index, key, count, a, a * cfg.sensitivity, attack))
        if not any(v.attack for v in verdicts):
            self._record(counts, total)
        else:
            logger.debug("period %d flagged; counts withheld from history", period_index)
        self.periods_completed += 1
        return verdicts

    def _record(self, counts: Mapping[str, int], total: int) -> None:
        n = self.config.history_periods
        if not self.config.global_model:
            for key in counts.keys() | self.histories.keys():
                history = self.histories.get(key)
                if history is None:
                    history = self.histories[key] = deque(maxlen=n)
                history.append(counts.get(key, 0))
            stale = [k for k, h in self.histories.items() if len(h) == n and not any(h)]
            for key in stale:
                del self.histories[key]
        self.global_history.append(total)


def detect_stream(
    events: Iterable[SensorEvent],
    config: DetectorConfig | None = None,
    grouping: GroupingPolicy = TAGGED,
    model: NormalModel | None = None,
) -> Iterator[Verdict]:
    """Group, fingerprint, count per period and classify, period by period.

    Periods are indexed from the first event's timestamp; empty periods
    in between are stepped with zero counts.
    """
    config = config or DetectorConfig()
    model = model or NormalModel(config)
    t0 = None
    current = 0
    counts: Counter = Counter()
    for trace in iter_requests(events, grouping):
        if t0 is None:
            t0 = trace.first_ts
        fp = extract_fingerprint(trace, config.bucket_ms)
        period = max((fp.first_ts - t0) // config.period_ms, current)
        while period > current:
            yield from model.step(current, counts)
            counts = Counter()
            current += 1
        counts[fp.class_key] += 1
    if t0 is not None:
        yield from model.step(current, counts)
