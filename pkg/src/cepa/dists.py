"""Distributions used by the tests: chi, truncated chi, F, normal streams.

The chi CDF with p degrees of freedom is the regularized lower incomplete
gamma at (p/2, x^2/2); the F survival function is a regularized incomplete
beta.  Truncated-chi probabilities are accumulated interval by interval
from upper-tail differences so that far-tail truncation sets do not lose
precision to cancellation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import NumericalError
from .special import betainc, gammainc_lower, gammainc_upper, log_gammainc_upper


@dataclass(frozen=True)
class IntervalUnion:
    """Finite union of disjoint closed intervals [lo, hi] within [0, +inf].

    Always stored in canonical form: sorted by lower endpoint, overlapping
    or touching intervals merged, strictly positive gaps between
    consecutive members.
    """

    intervals: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    @staticmethod
    def from_pairs(pairs: Iterable[Sequence[float]]) -> "IntervalUnion":
        """Build a canonical union from arbitrary (lo, hi) pairs."""
        cleaned = []
        for lo, hi in pairs:
            lo = float(lo)
            hi = float(hi)
            if math.isnan(lo) or math.isnan(hi):
                raise ValueError("interval endpoints must not be NaN")
            lo = max(lo, 0.0)
            if hi < lo:
                continue
            cleaned.append((lo, hi))
        cleaned.sort()
        merged: list[list[float]] = []
        for lo, hi in cleaned:
            if merged and lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return IntervalUnion(tuple((lo, hi) for lo, hi in merged))

    def normalized(self) -> "IntervalUnion":
        """Re-canonicalize; idempotent on already-canonical unions."""
        return IntervalUnion.from_pairs(self.intervals)

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return any(lo - tol <= x <= hi + tol for lo, hi in self.intervals)

    def distance(self, x: float) -> float:
        """Distance from x to the union (0 when contained, inf when empty)."""
        if self.is_empty:
            return math.inf
        best = math.inf
        for lo, hi in self.intervals:
            if lo <= x <= hi:
                return 0.0
            best = min(best, abs(x - lo), abs(x - hi) if math.isfinite(hi) else math.inf)
        return best

    def dilated_to_include(self, x: float) -> "IntervalUnion":
        """Extend the nearest interval so that it covers x."""
        if self.is_empty:
            raise NumericalError("cannot dilate an empty interval union")
        pairs = [list(p) for p in self.intervals]
        j = min(range(len(pairs)), key=lambda i: min(abs(x - pairs[i][0]), abs(x - pairs[i][1])))
        pairs[j][0] = min(pairs[j][0], x)
        pairs[j][1] = max(pairs[j][1], x)
        return IntervalUnion.from_pairs(pairs)


FULL_HALF_LINE = IntervalUnion(((0.0, math.inf),))


def chi_cdf(x: float, p: int) -> float:
    """CDF of a chi variate (not chi-squared) with p degrees of freedom."""
    if p < 1:
        raise ValueError("degrees of freedom must be a positive integer")
    if x < 0:
        raise ValueError("chi variate support is [0, inf)")
    if math.isinf(x):
        return 1.0
    return gammainc_lower(p / 2.0, x * x / 2.0)


def chi_survival(x: float, p: int) -> float:
    """Upper tail P(X >= x) for X ~ chi_p, evaluated without cancellation."""
    if p < 1:
        raise ValueError("degrees of freedom must be a positive integer")
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return gammainc_upper(p / 2.0, x * x / 2.0)


def chi_log_survival(x: float, p: int) -> float:
    """log P(X >= x) for X ~ chi_p, finite far into the tail."""
    if p < 1:
        raise ValueError("degrees of freedom must be a positive integer")
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return -math.inf
    return log_gammainc_upper(p / 2.0, x * x / 2.0)


def _log_interval_mass(lo: float, hi: float, p: int) -> float:
    # log[ sf(lo) - sf(hi) ] from upper-tail differences.
    if hi <= lo:
        return -math.inf
    log_lo = chi_log_survival(lo, p)
    log_hi = chi_log_survival(hi, p)
    if log_hi == -math.inf:
        return log_lo
    diff = log_hi - log_lo
    if diff >= 0.0:
        return -math.inf
    return log_lo + math.log1p(-math.exp(diff))


def _logsumexp(values) -> float:
    top = max(values, default=-math.inf)
    if top == -math.inf:
        return -math.inf
    return top + math.log(sum(math.exp(v - top) for v in values))


def truncated_chi_survival(x: float, p: int, t: IntervalUnion) -> float:
    """P(X >= x | X in t) for X ~ chi_p restricted to the interval union t.

    Numerator and denominator are accumulated interval by interval from
    upper-tail differences, in log space so that truncation sets far in
    the tail (whose chi mass underflows linear doubles) still yield a
    well-conditioned ratio.  Raises NumericalError when the conditioning
    set carries no representable probability mass at all.
    """
    if t.is_empty:
        raise NumericalError("truncation set is empty")
    if x < 0:
        raise ValueError("chi variate support is [0, inf)")
    mass_logs = []
    above_logs = []
    for lo, hi in t.intervals:
        mass_logs.append(_log_interval_mass(lo, hi, p))
        if hi >= x:
            above_logs.append(_log_interval_mass(max(lo, x), hi, p))
    log_mass = _logsumexp(mass_logs)
    if log_mass == -math.inf:
        raise NumericalError(
            "degenerate truncation: the conditioning set carries no chi mass"
        )
    log_above = _logsumexp(above_logs)
    if log_above == -math.inf:
        return 0.0
    return min(max(math.exp(log_above - log_mass), 0.0), 1.0)


def f_survival(x: float, d1: int, d2: int) -> float:
    """Upper tail of the F distribution with (d1, d2) degrees of freedom."""
    if d1 < 1 or d2 < 1:
        raise ValueError("F degrees of freedom must be positive integers")
    if not math.isfinite(x):
        if math.isnan(x):
            raise ValueError("x must be finite")
        return 0.0 if x > 0 else 1.0
    if x <= 0:
        return 1.0
    return betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x))


class NormalStream:
    """Deterministic stream of iid standard normal draws.

    Single-owner: consuming draws advances the internal state.  To share a
    stream across workers, clone it by reseeding (``spawn``).
    """

    def __init__(self, seed) -> None:
        self._seed_seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self._rng = np.random.Generator(np.random.PCG64(self._seed_seq))

    def draw(self, n: int) -> np.ndarray:
        return self._rng.standard_normal(n)

    def spawn(self, n: int) -> list["NormalStream"]:
        return [NormalStream(child) for child in self._seed_seq.spawn(n)]

    def __iter__(self):
        while True:
            yield float(self._rng.standard_normal())


def standard_normal_stream(seed) -> NormalStream:
    """Seeded iid N(0, 1) stream; identical seeds yield identical draws."""
    return NormalStream(seed)
