"""Nearest-rank quantile shared by the window sensors and the detector."""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

from tracewatch import kernels
from tracewatch.errors import EmptyHistory


def rank_for(q: float, n: int) -> int:
    """1-based nearest rank ``ceil(q * n)``.

    ``q`` is taken at its shortest decimal spelling, so ``0.07 * 100`` is
    rank 7 rather than the 8 that binary rounding would give.
    """
    if not 0 < q < 1:
        raise ValueError(f"quantile level must lie in (0, 1), got {q!r}")
    if n <= 0:
        raise EmptyHistory("quantile of an empty sequence")
    return min(n, max(1, math.ceil(Fraction(str(q)) * n)))


def nearest_rank(values: Sequence, q: float):
    if not values:
        raise EmptyHistory("quantile of an empty sequence")
    return kernels.nearest_rank(values, rank_for(q, len(values)))
