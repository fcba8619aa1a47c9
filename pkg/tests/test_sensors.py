from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tracewatch.errors import EmptyHistory, MissingInput, SensorTypeError
from tracewatch.events import Numeric64, SensorEvent, SensorId, State32, Text
from tracewatch.quantile import nearest_rank, rank_for
from tracewatch.sensors import (
    AlertSensorConfig,
    ContinuousAggConfig,
    FilterSensorConfig,
    OneTimeAggConfig,
    Pipeline,
    aggregate_once,
    aggregate_window,
    apply_filter,
    evaluate_alert,
)

A = SensorId("app", "A", "run")
B = SensorId("app", "B", "run")
OUT = SensorId("app", "Derived", "out")
MSG = SensorId("app", "Log", "msg", vid=2)
MSG_OUT = SensorId("app", "Log", "loginMsg", vid=2)
STATUS = SensorId("app", "Http", "status")


def ev(sid, ts, value, count=0):
    wrap = {0: Numeric64, 1: State32, 2: Text}[sid.vid]
    return SensorEvent(ts, count, sid, wrap(value))


# -- alerts --

def test_alert_lower_violation():
    alert = evaluate_alert(AlertSensorConfig(A, lower=10), ev(A, 1, 5))
    assert alert.violated_bound == "lower" and alert.observed == 5 and alert.timestamp == 1


def test_alert_inside_bounds():
    assert evaluate_alert(AlertSensorConfig(A, 10, 20), ev(A, 1, 15)) is None


def test_alert_bounds_are_inclusive():
    cfg = AlertSensorConfig(A, 10, 20)
    assert evaluate_alert(cfg, ev(A, 1, 20)) is None
    assert evaluate_alert(cfg, ev(A, 1, 10)) is None
    assert evaluate_alert(cfg, ev(A, 1, 21)).violated_bound == "upper"


def test_alert_on_state_value():
    sid = SensorId("app", "Auth", "state", vid=1)
    assert evaluate_alert(AlertSensorConfig(sid, upper=0), ev(sid, 1, 3)).violated_bound == "upper"


def test_alert_rejects_text():
    with pytest.raises(SensorTypeError):
        evaluate_alert(AlertSensorConfig(MSG, lower=0), ev(MSG, 1, "x"))


@pytest.mark.parametrize("lower,upper", [(None, None), (5, 1)])
def test_alert_config_invariants(lower, upper):
    with pytest.raises(ValueError):
        AlertSensorConfig(A, lower, upper)


@given(st.integers(-100, 100), st.integers(0, 50), st.integers(-200, 200))
def test_alert_iff_outside(lo, width, value):
    alert = evaluate_alert(AlertSensorConfig(A, lo, lo + width), ev(A, 0, value))
    assert (alert is not None) == (value < lo or value > lo + width)


# -- filters --

def test_filter_match_relabels():
    cfg = FilterSensorConfig(MSG, "login.*", MSG_OUT)
    out = apply_filter(cfg, ev(MSG, 3, "login failed", count=2))
    assert out == SensorEvent(3, 2, MSG_OUT, Text("login failed"))


def test_filter_no_match():
    assert apply_filter(FilterSensorConfig(MSG, "login.*", MSG_OUT), ev(MSG, 3, "logout")) is None


def test_filter_numeric_rendering():
    cfg = FilterSensorConfig(STATUS, "^4[0-9][0-9]$", SensorId("app", "Http", "clientError"))
    assert apply_filter(cfg, ev(STATUS, 1, 404)) is not None
    assert apply_filter(cfg, ev(STATUS, 1, 200)) is None


def test_filter_config_invariants():
    import re

    with pytest.raises(re.error):
        FilterSensorConfig(MSG, "(", MSG_OUT)
    with pytest.raises(ValueError):
        FilterSensorConfig(MSG, "x", MSG)


# -- one-time aggregation --

def test_sum_of_two_sensors():
    out = aggregate_once(OneTimeAggConfig((A, B), "sum", OUT), [ev(A, 9, 3), ev(B, 9, 4, 1)])
    assert out == SensorEvent(9, 0, OUT, Numeric64(7))


def test_product_identity():
    out = aggregate_once(OneTimeAggConfig((A, B), "product", OUT), [ev(A, 9, 1), ev(B, 9, 17)])
    assert out.value == Numeric64(17)


def test_log_of_one():
    out = aggregate_once(OneTimeAggConfig((A,), "log", OUT), [ev(A, 9, 1)])
    assert out.value == Numeric64(0.0)


def test_log_of_e_squared():
    out = aggregate_once(OneTimeAggConfig((A,), "log", OUT), [ev(A, 9, math.e**2)])
    assert out.value.value == pytest.approx(2.0)


def test_missing_input():
    with pytest.raises(MissingInput):
        aggregate_once(OneTimeAggConfig((A, B), "sum", OUT), [ev(A, 9, 3)])


def test_misaligned_inputs():
    with pytest.raises(ValueError):
        aggregate_once(OneTimeAggConfig((A, B), "sum", OUT), [ev(A, 9, 3), ev(B, 10, 3)])


@pytest.mark.parametrize(
    "inputs,op",
    [((A,), "sum"), ((A, A), "sum"), ((A, B), "log"), ((A, B), "mean")],
)
def test_one_time_config_invariants(inputs, op):
    with pytest.raises(ValueError):
        OneTimeAggConfig(inputs, op, OUT)


# -- windows --

def test_window_mean():
    cfg = ContinuousAggConfig(A, 10, OUT)
    out = list(aggregate_window(cfg, [ev(A, 0, 2), ev(A, 5, 4)]))
    assert out == [SensorEvent(9, 0, OUT, Numeric64(3.0))]


def test_window_quantile():
    cfg = ContinuousAggConfig(A, 100, OUT, "quantile", 0.5)
    out = list(aggregate_window(cfg, [ev(A, t, v) for t, v in enumerate([5, 1, 4, 2, 3])]))
    assert [e.value.value for e in out] == [3]


def test_empty_windows_emit_nothing():
    cfg = ContinuousAggConfig(A, 10, OUT)
    out = list(aggregate_window(cfg, [ev(A, 1, 1), ev(A, 45, 3), ev(B, 60, 9)]))
    assert [(e.timestamp, e.value.value) for e in out] == [(9, 1.0), (49, 3.0)]
    assert list(aggregate_window(cfg, [])) == []


def test_window_rejects_text():
    with pytest.raises(SensorTypeError):
        list(aggregate_window(ContinuousAggConfig(MSG, 10, OUT), [ev(MSG, 1, "x")]))


@pytest.mark.parametrize("kwargs", [dict(window_ms=0), dict(op="quantile", q=1.0), dict(op="quantile"), dict(op="max")])
def test_window_config_invariants(kwargs):
    with pytest.raises(ValueError):
        ContinuousAggConfig(A, **{"window_ms": 10, "output_sid": OUT, **kwargs})


@given(st.integers(-1000, 1000), st.integers(1, 50), st.integers(1, 500))
def test_mean_of_constant_stream(c, n, w):
    out = list(aggregate_window(ContinuousAggConfig(A, w, OUT), [ev(A, t, c) for t in range(n)]))
    assert all(e.value.value == c for e in out)
    assert len(out) == -(-n // w)


# -- nearest-rank quantile --

def _oracle(values, q):
    # rank = ceil(q*n) with q read as the decimal it is written as
    num, den = Fraction(str(q)).as_integer_ratio()
    rank = -(-num * len(values) // den)
    return sorted(values)[max(rank, 1) - 1]


def test_quantile_examples():
    assert nearest_rank([1, 2, 3, 4, 5], 0.5) == 3
    assert nearest_rank([2, 3, 4, 5, 6], 0.95) == 6
    assert rank_for(0.07, 100) == 7


def test_quantile_empty():
    with pytest.raises(EmptyHistory):
        nearest_rank([], 0.5)


@pytest.mark.parametrize("q", [0.0, 1.0, -0.1])
def test_quantile_level_out_of_range(q):
    with pytest.raises(ValueError):
        rank_for(q, 3)


@given(
    st.lists(st.integers(0, 10_000), min_size=1, max_size=200),
    st.integers(1, 99).map(lambda k: k / 100),
)
def test_quantile_matches_sort_and_index(values, q):
    assert nearest_rank(values, q) == _oracle(values, q)


# -- pipeline --

def test_pipeline_end_to_end():
    stream = [ev(A, 1, 3), ev(B, 1, 4, 1), ev(MSG, 1, "login failed", 2), ev(A, 2, 50), ev(MSG, 12, "logout")]
    pipe = Pipeline(
        alerts=[AlertSensorConfig(A, upper=10)],
        filters=[FilterSensorConfig(MSG, "login", MSG_OUT)],
        once=[OneTimeAggConfig((A, B), "sum", OUT)],
        windows=[ContinuousAggConfig(A, 10, SensorId("app", "A", "mean"))],
    )
    result = pipe.run(stream)
    assert [a.observed for a in result.alerts] == [50]
    got = [(e.timestamp, e.count, str(e.sid), e.value.render()) for e in result.derived]
    assert got == [
        (1, 0, str(MSG_OUT), "login failed"),
        (1, 1, str(OUT), "7"),
        (9, 0, "app.A.mean.0.0.0", "26.5"),
    ]


def test_pipeline_is_deterministic():
    stream = [ev(A, t, t % 7) for t in range(100)]
    pipe = Pipeline(windows=[ContinuousAggConfig(A, 10, OUT, "quantile", 0.9)])
    assert pipe.run(stream) == pipe.run(list(stream))
