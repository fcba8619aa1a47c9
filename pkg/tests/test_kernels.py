from __future__ import annotations

import os
import random
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracewatch import kernels
from tracewatch.events import INT64_MAX

BACKENDS = kernels.available_backends()
PY = kernels.load_backend("python")

needs_cython = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")


def _outcome(fn, *args):
    try:
        return ("ok", fn(*args))
    except Exception as exc:  # parity includes the exception type
        return ("err", type(exc))


record_chars = st.sampled_from(list("0123456789,.-+ abéx"))
record_text = st.one_of(
    st.text(record_chars, max_size=40),
    st.builds(
        lambda ts, c, sid, v: f"{ts},{c},{sid},{v}",
        st.integers(-5, INT64_MAX + 5).map(str) | st.text(record_chars, max_size=5),
        st.integers(0, 1 << 70).map(str),
        st.text(record_chars, max_size=20),
        st.text(record_chars, max_size=10),
    ),
)


@pytest.mark.parametrize("name", BACKENDS)
def test_backend_exports(name):
    mod = kernels.load_backend(name)
    for fn in ("split_record", "split_sid", "quantize", "nearest_rank"):
        assert callable(getattr(mod, fn))


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.load_backend("fortran")


def test_selected_backend_is_listed():
    assert kernels.BACKEND in BACKENDS


@needs_cython
@settings(max_examples=1000)
@given(record_text)
def test_split_record_parity(line):
    c = kernels.load_backend("cython")
    assert _outcome(c.split_record, line) == _outcome(PY.split_record, line)


@needs_cython
@settings(max_examples=1000)
@given(st.text(st.sampled_from(list("0123456789.-ab")), max_size=25))
def test_split_sid_parity(text):
    c = kernels.load_backend("cython")
    assert _outcome(c.split_sid, text) == _outcome(PY.split_sid, text)


@needs_cython
@given(
    st.lists(st.integers(-(1 << 64), 1 << 64) | st.floats(-1e9, 1e9), max_size=30),
    st.integers(1, 100),
)
def test_quantize_parity(durations, bucket):
    c = kernels.load_backend("cython")
    assert c.quantize(durations, bucket) == PY.quantize(durations, bucket)


@needs_cython
@given(st.lists(st.integers(-(1 << 63), (1 << 63) - 1), min_size=1, max_size=200), st.data())
def test_nearest_rank_parity(values, data):
    rank = data.draw(st.integers(1, len(values)))
    c = kernels.load_backend("cython")
    assert c.nearest_rank(values, rank) == PY.nearest_rank(values, rank) == sorted(values)[rank - 1]


@pytest.mark.parametrize("name", BACKENDS)
def test_nearest_rank_out_of_range(name):
    mod = kernels.load_backend(name)
    for rank in (0, 4):
        with pytest.raises(IndexError):
            mod.nearest_rank([1, 2, 3], rank)


@pytest.mark.parametrize("name", BACKENDS)
def test_nearest_rank_big_ints_and_floats(name):
    mod = kernels.load_backend(name)
    assert mod.nearest_rank([1 << 80, 1, 5], 3) == 1 << 80
    assert mod.nearest_rank([0.5, 0.25, 2.0], 2) == 0.5


@pytest.mark.parametrize("name", BACKENDS)
def test_quantize_floors_to_bucket(name):
    mod = kernels.load_backend(name)
    assert mod.quantize([0, 1, 2, 3, 5, 6, 301, -1], 3) == [0, 0, 0, 3, 3, 6, 300, -3]
    assert mod.quantize([4.9], 3) == [3]


@pytest.mark.parametrize("name", BACKENDS)
def test_split_record_value_keeps_commas(name):
    mod = kernels.load_backend(name)
    assert mod.split_record("1,2,a.b.c.0.2.0,x,y,") == (1, 2, "a.b.c.0.2.0", "x,y,")


def test_random_sid_parity_bulk():
    # cheap brute-force sweep on top of the property tests
    rng = random.Random(4)
    for name in BACKENDS:
        mod = kernels.load_backend(name)
        for _ in range(2000):
            parts = [str(rng.randint(0, 99)) if rng.random() < 0.5 else "ab" for _ in range(rng.randint(1, 9))]
            text = ".".join(parts)
            assert _outcome(mod.split_sid, text) == _outcome(PY.split_sid, text)


def test_env_var_forces_pure_python():
    env = {**os.environ, "TRACEWATCH_PURE_PYTHON": "1"}
    proc = subprocess.run(
        [sys.executable, "-c", "import tracewatch; print(tracewatch.BACKEND)"],
        capture_output=True, text=True, env=env, check=True,
    )
    assert proc.stdout.strip() == "python"
