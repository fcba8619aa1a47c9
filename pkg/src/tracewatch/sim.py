"""Deterministic sensor-log generator for an instrumented web application.

Requests are scheduled in virtual time.  Each request emits, at its
completion millisecond, a marker event (its ordinal), a text event with
its header data, then one duration event per method in its page's chain.
Emitting the whole request at completion keeps the log in
(timestamp, count) order while requests overlap in time.

Method base durations are ``1 mod 3`` ms with at most 1 ms of uniform
noise, so a request never crosses a 3 ms bucket boundary and every page
maps to exactly one fingerprint class under the default bucketing.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal, Sequence

from tracewatch.events import (
    VID_NUMERIC,
    VID_STATE,
    VID_TEXT,
    CountStamper,
    Numeric64,
    SensorEvent,
    SensorId,
    State32,
    Text,
    format_event,
)
from tracewatch.fingerprint import MARKER_CLASS

SIM_EPOCH_MS = 1_370_000_000_000
SIM_PACKAGE = "sim.cms"

MARKER_SID = SensorId("sim.servlet", MARKER_CLASS, "service", 0, VID_STATE, 0)
HEADER_SID = SensorId("sim.servlet", "RequestHeaders", "service", 0, VID_TEXT, 0)

ScenarioKind = Literal["normal", "probe", "timing"]
SCENARIOS: tuple[str, ...] = ("normal", "probe", "timing")


@dataclass(frozen=True)
class MethodTemplate:
    sid: SensorId
    base_duration_ms: float
    noise_ms: float = 1.0

    def __post_init__(self) -> None:
        if self.base_duration_ms < 1:
            raise ValueError("methods under 1 ms are never emitted")
        if self.noise_ms < 0:
            raise ValueError("noise_ms must be non-negative")
        if self.sid.vid != VID_NUMERIC:
            raise ValueError("method sensors carry numeric durations (vid 0)")

    def sample(self, rng: random.Random) -> int:
        if self.noise_ms == 0:
            return max(1, round(self.base_duration_ms))
        return max(1, round(self.base_duration_ms + rng.uniform(-self.noise_ms, self.noise_ms)))


@dataclass(frozen=True)
class PageTemplate:
    name: str
    chain: tuple[MethodTemplate, ...]
    marker_sid: SensorId = MARKER_SID

    def __post_init__(self) -> None:
        object.__setattr__(self, "chain", tuple(self.chain))
        if not self.chain:
            raise ValueError(f"page {self.name!r} has an empty chain")

    @property
    def base_total_ms(self) -> float:
        return sum(m.base_duration_ms for m in self.chain)


def _page(name: str, *methods: tuple[str, str, int, int]) -> PageTemplate:
    return PageTemplate(
        name,
        tuple(
            MethodTemplate(SensorId(SIM_PACKAGE, cls, meth, 0, VID_NUMERIC, 0), base, noise)
            for cls, meth, base, noise in methods
        ),
    )


_RESOLVE = ("Dispatcher", "resolveSite", 13, 1)
_TEMPLATE = ("Template", "loadTemplate", 100, 1)
_WRITE = ("Response", "write", 16, 0)
_CREDENTIALS = ("Login", "parseCredentials", 4, 0)
_LOGIN_ERROR = ("Login", "renderError", 28, 1)

# page time 798 ms (not logged in) vs 849 ms (logged in)
SITE: dict[str, PageTemplate] = {
    p.name: p
    for p in (
        _page(
            "start",
            _RESOLVE, _TEMPLATE,
            ("Navigation", "render", 211, 1),
            ("Content", "query", 301, 1),
            ("Template", "renderBody", 157, 1),
            _WRITE,
        ),
        _page(
            "start-auth",
            _RESOLVE,
            ("Session", "check", 19, 0),
            _TEMPLATE,
            ("User", "loadProfile", 22, 0),
            ("Navigation", "render", 211, 1),
            ("Content", "query", 301, 1),
            ("User", "renderPersonalBar", 10, 0),
            ("Template", "renderBody", 157, 1),
            _WRITE,
        ),
        _page(
            "news",
            _RESOLVE, _TEMPLATE,
            ("News", "listArticles", 64, 1),
            ("Content", "query", 121, 1),
            ("News", "renderTeasers", 43, 1),
            ("Template", "renderBody", 70, 1),
            _WRITE,
        ),
        _page(
            "search",
            _RESOLVE,
            ("Search", "parseQuery", 4, 0),
            ("Search", "openIndex", 28, 1),
            ("Search", "execute", 202, 1),
            ("Search", "rank", 37, 1),
            _TEMPLATE,
            ("Template", "renderBody", 55, 1),
            _WRITE,
        ),
        _page(
            "login-form",
            _RESOLVE,
            ("Session", "check", 19, 0),
            _TEMPLATE,
            ("Login", "renderForm", 31, 1),
            _WRITE,
        ),
        _page(
            "contact",
            _RESOLVE, _TEMPLATE,
            ("Contact", "loadForm", 25, 1),
            ("Captcha", "generate", 46, 1),
            ("Template", "renderBody", 52, 1),
            _WRITE,
        ),
        _page(
            "login-success",
            _RESOLVE, _CREDENTIALS,
            ("Auth", "lookupUser", 49, 1),
            ("Auth", "hashPassword", 121, 1),
            ("Auth", "verifyPassword", 7, 0),
            ("Session", "create", 22, 1),
            ("User", "loadProfile", 22, 0),
            ("Audit", "logLogin", 10, 0),
            ("Response", "redirect", 7, 0),
            _WRITE,
        ),
        _page(
            "login-unknown-user",
            _RESOLVE, _CREDENTIALS,
            ("Auth", "lookupUser", 34, 1),
            _LOGIN_ERROR, _TEMPLATE, _WRITE,
        ),
        _page(
            "login-wrong-password",
            _RESOLVE, _CREDENTIALS,
            ("Auth", "lookupUser", 49, 1),
            ("Auth", "hashPassword", 121, 1),
            ("Auth", "verifyPassword", 7, 0),
            ("Audit", "logFailure", 10, 0),
            _LOGIN_ERROR, _TEMPLATE, _WRITE,
        ),
    )
}

NORMAL_PAGES: tuple[str, ...] = (
    "start", "start-auth", "news", "search", "login-form", "contact", "login-success",
)
LOGIN_OUTCOMES: tuple[str, ...] = ("login-success", "login-unknown-user", "login-wrong-password")


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind = "normal"
    seed: int = 0
    duration_ms: int = 600_000
    requests: int | None = None  # background request budget; overrides duration_ms
    users: int = 20
    think_ms: int = 1000
    jitter_ms: int = 100
    attack_rate: float = 50.0  # attack requests per second
    dictionary_size: int = 1000
    user_agents: int = 50
    ips: int = 20
    valid_users: int = 10  # timing scenario: dictionary names that exist
    onset_ms: int | None = None  # attack start, relative to start_ms
    start_ms: int = SIM_EPOCH_MS

    def __post_init__(self) -> None:
        if self.kind not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.kind!r}")
        if self.duration_ms <= 0:
            raise ValueError("duration_ms must be positive")
        if self.requests is not None and self.requests < 0:
            raise ValueError("requests must be non-negative")
        if self.users <= 0 or self.think_ms <= 0:
            raise ValueError("users and think_ms must be positive")
        if not 0 <= self.jitter_ms < self.think_ms:
            raise ValueError("jitter_ms must lie in [0, think_ms)")
        if self.attack_rate <= 0:
            raise ValueError("attack_rate must be positive")
        if self.dictionary_size < 1:
            raise ValueError("dictionary_size must be at least 1")
        if self.user_agents < 1 or self.ips < 1:
            raise ValueError("user_agents and ips must be at least 1")


@dataclass(frozen=True)
class AttackInterval:
    onset_ms: int
    end_ms: int
    kind: str


@dataclass(frozen=True)
class GroundTruth:
    intervals: tuple[AttackInterval, ...] = ()

    def to_text(self) -> str:
        return "".join(f"{i.onset_ms}\t{i.end_ms}\t{i.kind}\n" for i in self.intervals)

    @classmethod
    def parse(cls, text: str) -> GroundTruth:
        intervals = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"ground truth line {lineno}: expected onset<TAB>end<TAB>kind")
            intervals.append(AttackInterval(int(parts[0]), int(parts[1]), parts[2]))
        return cls(tuple(intervals))

    @classmethod
    def read(cls, path: str | Path) -> GroundTruth:
        return cls.parse(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class RequestRecord:
    ordinal: int
    page: str
    start_ms: int
    end_ms: int
    attack: bool = False
    header: str = ""


@dataclass
class SimResult:
    events: list[SensorEvent]
    truth: GroundTruth
    requests: list[RequestRecord] = field(default_factory=list)

    def lines(self) -> Iterator[str]:
        return (format_event(e) for e in self.events)

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def write(self, path: str | Path) -> tuple[Path, Path]:
        """Write the log to ``path`` and the ground truth to ``path + '.truth'``."""
        log_path = Path(path)
        truth_path = log_path.with_name(log_path.name + ".truth")
        with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.lines():
                fh.write(line)
                fh.write("\n")
        truth_path.write_text(self.truth.to_text(), encoding="utf-8")
        return log_path, truth_path


@dataclass
class _Pending:
    start: int
    page: PageTemplate
    header: str
    attack: bool
    durations: list[int]

    @property
    def end(self) -> int:
        return self.start + sum(self.durations)


def _assemble(pending: list[_Pending], truth: GroundTruth) -> SimResult:
    # ordinals follow request start; emission follows completion
    pending.sort(key=lambda r: r.start)
    ordered = sorted(enumerate(pending), key=lambda pair: (pair[1].end, pair[0]))
    stamper = CountStamper()
    events: list[SensorEvent] = []
    records: list[RequestRecord] = []
    for ordinal, req in ordered:
        ts = req.end
        events.append(stamper.stamp(ts, req.page.marker_sid, State32(ordinal)))
        events.append(stamper.stamp(ts, HEADER_SID, Text(req.header)))
        for method, duration in zip(req.page.chain, req.durations):
            events.append(stamper.stamp(ts, method.sid, Numeric64(duration)))
        records.append(RequestRecord(ordinal, req.page.name, req.start, ts, req.attack, req.header))
    records.sort(key=lambda r: r.ordinal)
    return SimResult(events, truth, records)


def _request(rng: random.Random, start: int, page: PageTemplate, header: str, attack: bool = False) -> _Pending:
    return _Pending(start, page, header, attack, [m.sample(rng) for m in page.chain])


def _background(spec: ScenarioSpec, rng: random.Random) -> list[_Pending]:
    if spec.requests is not None:
        horizon = -(-spec.requests * spec.think_ms // spec.users) + spec.think_ms
    else:
        horizon = spec.duration_ms
    pages = [SITE[name] for name in NORMAL_PAGES]
    out: list[_Pending] = []
    for user in range(spec.users):
        header = f"agent-{user % spec.user_agents}, 10.0.{user // 250}.{user % 250 + 1}"
        t = rng.randrange(spec.think_ms)
        while t < horizon:
            out.append(_request(rng, spec.start_ms + t, rng.choice(pages), header))
            t += spec.think_ms + rng.randint(-spec.jitter_ms, spec.jitter_ms)
    if spec.requests is not None:
        out.sort(key=lambda r: r.start)
        del out[spec.requests:]
    return out


def _onset(spec: ScenarioSpec, rng: random.Random) -> int:
    if spec.onset_ms is not None:
        return spec.start_ms + spec.onset_ms
    d = spec.duration_ms if spec.requests is None else spec.requests * spec.think_ms // spec.users
    return spec.start_ms + int(0.7 * d) + rng.randint(0, max(0, int(0.1 * d)))


def _attack_header(spec: ScenarioSpec, rng: random.Random, username: str) -> str:
    agent = rng.randrange(spec.user_agents)
    ip = rng.randrange(spec.ips)
    return f"attacker-agent-{agent}, 192.168.66.{ip + 1}, user={username}"


def _burst(spec: ScenarioSpec, rng: random.Random, outcome: Sequence[str], kind: str) -> tuple[list[_Pending], GroundTruth]:
    n = spec.dictionary_size
    interval = 1000.0 / spec.attack_rate
    onset = _onset(spec, rng)
    attack = []
    for i in range(n):
        start = onset + round(i * interval)
        header = _attack_header(spec, rng, f"username_{i + 1}")
        attack.append(_request(rng, start, SITE[outcome[i]], header, attack=True))
    truth = GroundTruth(
        (AttackInterval(min(r.end for r in attack), max(r.end for r in attack), kind),)
    )
    return attack, truth


def simulate_normal(spec: ScenarioSpec) -> SimResult:
    """Normal load: ``spec.users`` users, one request per ``think_ms`` each."""
    rng = random.Random(spec.seed)
    return _assemble(_background(spec, rng), GroundTruth())


def simulate_probe(spec: ScenarioSpec) -> SimResult:
    """Normal load plus a username-probing burst on the login page.

    Exactly one dictionary name is a valid user; its probe takes the
    wrong-password branch, all others the unknown-user branch.
    """
    rng = random.Random(spec.seed)
    background = _background(spec, rng)
    valid = rng.randrange(spec.dictionary_size)
    outcome = [
        "login-wrong-password" if i == valid else "login-unknown-user"
        for i in range(spec.dictionary_size)
    ]
    attack, truth = _burst(spec, rng, outcome, "probe")
    return _assemble(background + attack, truth)


def simulate_timing(spec: ScenarioSpec) -> SimResult:
    """Normal load plus a dictionary login burst with all three outcomes.

    ``valid_users`` names exist; the first of them logs in successfully,
    the rest fail on the password.  The background start page takes
    about 849 ms for logged-in and 798 ms for anonymous users.
    """
    rng = random.Random(spec.seed)
    background = _background(spec, rng)
    n = spec.dictionary_size
    present = rng.sample(range(n), min(spec.valid_users, n)) if spec.valid_users else []
    outcome = ["login-unknown-user"] * n
    for j, i in enumerate(present):
        outcome[i] = "login-success" if j == 0 else "login-wrong-password"
    attack, truth = _burst(spec, rng, outcome, "timing")
    return _assemble(background + attack, truth)


def simulate(spec: ScenarioSpec) -> SimResult:
    return {"normal": simulate_normal, "probe": simulate_probe, "timing": simulate_timing}[spec.kind](spec)


def simulate_crawl(
    pages: Sequence[str],
    requests_per_page: int = 100,
    seed: int = 0,
    gap_ms: int = 50,
    start_ms: int = SIM_EPOCH_MS,
) -> SimResult:
    """Sequential crawl: each request starts ``gap_ms`` after the previous ends."""
    rng = random.Random(seed)
    pending = []
    t = start_ms
    for name in pages:
        page = SITE[name]
        for _ in range(requests_per_page):
            req = _request(rng, t, page, "crawler, 10.0.0.1")
            pending.append(req)
            t = req.end + gap_ms
    return _assemble(pending, GroundTruth())
