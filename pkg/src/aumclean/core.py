"""Margin and AUM arithmetic, percentiles, rank correlation.

Everything here is a pure function of its arguments, double precision
throughout, and safe to call from any thread.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, UndefinedCorrelationError

__all__ = [
    "margin",
    "aum",
    "running_average",
    "percentile_nearest_rank",
    "spearman",
]


def margin(logits: Sequence[float], assigned: int) -> float:
    """Assigned-class logit minus the largest remaining logit.

    Positive iff the assigned class is the strict argmax; zero on an exact
    tie with the runner-up. Invariant under adding a constant to all logits
    and under permuting the non-assigned entries.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] < 2:
        raise InvalidArgumentError(f"need at least 2 logits, got shape {z.shape}")
    if not (0 <= assigned < z.shape[0]):
        raise InvalidArgumentError(f"assigned class {assigned} out of range for {z.shape[0]} logits")
    if not np.all(np.isfinite(z)):
        raise InvalidArgumentError("logits must be finite")
    others = np.delete(z, assigned)
    return float(z[assigned] - others.max())


def aum(trace: Sequence[float]) -> float:
    """Mean margin over epochs (the area under the margin curve)."""
    t = np.asarray(trace, dtype=np.float64)
    if t.ndim != 1 or t.shape[0] == 0:
        raise InvalidArgumentError("margin trace must be a non-empty 1-d sequence")
    return float(t.mean())


def running_average(trace: Sequence[float]) -> np.ndarray:
    """Prefix means of a margin trace; the last entry equals aum(trace)."""
    t = np.asarray(trace, dtype=np.float64)
    if t.ndim != 1 or t.shape[0] == 0:
        raise InvalidArgumentError("margin trace must be a non-empty 1-d sequence")
    return np.cumsum(t) / np.arange(1, t.shape[0] + 1)


def percentile_nearest_rank(values: Sequence[float], q: float) -> float:
    """qth percentile by the nearest-rank rule (no interpolation).

    Sorts ascending and returns the element at 1-indexed rank
    ceil(q * n / 100). Always an element of ``values``.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] == 0:
        raise InvalidArgumentError("percentile of an empty sequence is undefined")
    if not (0.0 < q <= 100.0):
        raise InvalidArgumentError(f"percentile q must be in (0, 100], got {q}")
    n = v.shape[0]
    # q * n before the division: 99/100 is not exact in binary and rounding
    # q/100 first can push ceil() one rank too high.
    rank = math.ceil(q * n / 100.0)
    rank = min(max(rank, 1), n)
    return float(np.sort(v)[rank - 1])


def _midranks(x: np.ndarray) -> np.ndarray:
    # 1-indexed ranks; runs of equal values share the mean of their positions
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.shape[0], dtype=np.float64)
    i = 0
    n = x.shape[0]
    while i < n:
        j = i
        while j + 1 < n and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Spearman rank correlation with midranks for ties.

    Computed as the Pearson correlation of the two rank vectors, so it is
    invariant under strictly increasing transforms of either input. Raises
    UndefinedCorrelationError when either input is entirely tied (zero rank
    variance makes the quotient meaningless).
    """
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    if xa.ndim != 1 or xb.ndim != 1 or xa.shape[0] != xb.shape[0]:
        raise InvalidArgumentError("inputs must be 1-d sequences of equal length")
    if xa.shape[0] < 2:
        raise InvalidArgumentError("correlation needs at least 2 observations")
    ra = _midranks(xa)
    rb = _midranks(xb)
    da = ra - ra.mean()
    db = rb - rb.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        raise UndefinedCorrelationError("an input has zero rank variance (all values tied)")
    return float(da @ db) / denom
