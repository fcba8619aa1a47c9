# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled kernels; behaviour mirrors ``tracewatch._pykernels`` exactly."""

from libc.stdlib cimport malloc, free

from tracewatch.errors import MalformedRecord, MalformedSid

cdef unsigned long long INT64_MAX = 9223372036854775807ULL
_LIMIT = 9223372036854775807


cdef long long _uint(str text, Py_ssize_t start, Py_ssize_t stop, str what, object exc) except -1:
    cdef Py_ssize_t i
    cdef Py_UCS4 c
    cdef unsigned long long acc = 0
    cdef unsigned long long d
    if stop <= start:
        raise exc(f"non-integer {what}: {text[start:stop]!r}")
    for i in range(start, stop):
        c = text[i]
        if c < u'0' or c > u'9':
            raise exc(f"non-integer {what}: {text[start:stop]!r}")
    for i in range(start, stop):
        d = <unsigned long long>(text[i]) - 48
        if acc > (INT64_MAX - d) // 10:
            raise exc(f"{what} out of range: {text[start:stop]!r}")
        acc = acc * 10 + d
    return <long long>acc


def split_record(str line):
    cdef Py_ssize_t c1, c2, c3
    c1 = line.find(u",")
    c2 = line.find(u",", c1 + 1) if c1 >= 0 else -1
    c3 = line.find(u",", c2 + 1) if c2 >= 0 else -1
    if c3 < 0:
        found = (c1 >= 0) + (c2 >= 0)
        raise MalformedRecord(
            f"expected 'timestamp,count,SID,value', found {found} comma(s)"
        )
    ts = _uint(line, 0, c1, "timestamp", MalformedRecord)
    count = _uint(line, c1 + 1, c2, "count", MalformedRecord)
    return ts, count, line[c2 + 1:c3], line[c3 + 1:]


def split_sid(str text):
    cdef Py_ssize_t n = len(text)
    cdef Py_ssize_t d[5]
    cdef Py_ssize_t end = n
    cdef int k
    for k in range(5):
        d[k] = text.rfind(u".", 0, end)
        if d[k] < 0:
            raise MalformedSid(f"SID needs 6 dot-separated segments: {text!r}")
        end = d[k]
    # d[0] is the rightmost dot, d[4] ends the package
    if d[3] - d[4] <= 1 or d[2] - d[3] <= 1:
        raise MalformedSid(f"empty class or method segment: {text!r}")
    package = text[:d[4]]
    if not package or package[0] == u"." or package[len(package) - 1] == u"." or u".." in package:
        raise MalformedSid(f"empty package segment: {text!r}")
    return (
        package,
        text[d[4] + 1:d[3]],
        text[d[3] + 1:d[2]],
        _uint(text, d[2] + 1, d[1], "id", MalformedSid),
        _uint(text, d[1] + 1, d[0], "vid", MalformedSid),
        _uint(text, d[0] + 1, n, "vvid", MalformedSid),
    )


def quantize(durations, Py_ssize_t bucket):
    cdef list out = []
    cdef long long v, q
    for d in durations:
        if type(d) is int and -_LIMIT <= d <= _LIMIT:
            v = d
            q = v // bucket  # floor semantics (cdivision off)
            out.append(q * bucket)
        else:
            out.append(int(d // bucket) * bucket)
    return out


cdef long long _select(long long *a, Py_ssize_t n, Py_ssize_t k) noexcept nogil:
    # Hoare-style quickselect with median-of-three pivot; returns the k-th smallest (0-based)
    cdef Py_ssize_t lo = 0, hi = n - 1, i, j, mid
    cdef long long pivot, tmp
    while lo < hi:
        mid = lo + (hi - lo) // 2
        if a[mid] < a[lo]:
            tmp = a[mid]; a[mid] = a[lo]; a[lo] = tmp
        if a[hi] < a[lo]:
            tmp = a[hi]; a[hi] = a[lo]; a[lo] = tmp
        if a[hi] < a[mid]:
            tmp = a[hi]; a[hi] = a[mid]; a[mid] = tmp
        pivot = a[mid]
        i = lo
        j = hi
        while i <= j:
            while a[i] < pivot:
                i += 1
            while a[j] > pivot:
                j -= 1
            if i <= j:
                tmp = a[i]; a[i] = a[j]; a[j] = tmp
                i += 1
                j -= 1
        if k <= j:
            hi = j
        elif k >= i:
            lo = i
        else:
            return a[k]
    return a[k]


def nearest_rank(values, Py_ssize_t rank):
    cdef Py_ssize_t n = len(values)
    cdef Py_ssize_t i
    cdef long long *buf
    cdef long long result
    if not 1 <= rank <= n:
        raise IndexError(f"rank {rank} outside 1..{n}")
    for v in values:
        if type(v) is not int or not (-_LIMIT <= v <= _LIMIT):
            return sorted(values)[rank - 1]
    buf = <long long *>malloc(n * sizeof(long long))
    if buf == NULL:
        raise MemoryError()
    try:
        i = 0
        for v in values:
            buf[i] = v
            i += 1
        with nogil:
            result = _select(buf, n, rank - 1)
    finally:
        free(buf)
    return result
