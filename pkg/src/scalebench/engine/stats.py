"""Mergeable summary statistics.

Mean and the sum of squared deviations (``m2``) are maintained with the
single-pass update of Welford; two accumulators combine with the pairwise
formula of Chan et al.  Population variance is derived as ``m2 / count``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from scalebench.errors import InvalidMeasurement


@dataclass(slots=True)
class SummaryStats:
    count: int = 0
    sum: float = 0.0
    min: float = math.inf
    max: float = -math.inf
    mean: float = 0.0
    m2: float = 0.0

    @property
    def variance(self) -> float:
        """Population variance; 0 for an empty accumulator."""
        if self.count == 0:
            return 0.0
        return max(self.m2 / self.count, 0.0)

    def add(self, value: float) -> None:
        """Fold ``value`` into this accumulator in place."""
        if not math.isfinite(value):
            raise InvalidMeasurement(f"non-finite measurement {value!r}")
        self.count += 1
        self.sum += value
        if value < self.min:
            self.min = value
        if value > self.max:
            self.max = value
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)

    def copy(self) -> "SummaryStats":
        return SummaryStats(self.count, self.sum, self.min, self.max, self.mean, self.m2)

    def as_tuple(self) -> tuple[int, float, float, float, float, float]:
        """``(count, sum, min, max, mean, variance)``."""
        return (self.count, self.sum, self.min, self.max, self.mean, self.variance)


def identity() -> SummaryStats:
    return SummaryStats()


def stats_accumulate(acc: SummaryStats, value: float) -> SummaryStats:
    out = acc.copy()
    out.add(value)
    return out


def stats_merge(a: SummaryStats, b: SummaryStats) -> SummaryStats:
    if b.count == 0:
        return a.copy()
    if a.count == 0:
        return b.copy()
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = (a.mean * a.count + b.mean * b.count) / n
    m2 = a.m2 + b.m2 + delta * delta * a.count * b.count / n
    return SummaryStats(n, a.sum + b.sum, min(a.min, b.min), max(a.max, b.max), mean, m2)


def fold(values: Iterable[float]) -> SummaryStats:
    acc = SummaryStats()
    for v in values:
        acc.add(v)
    return acc


def merge_all(parts: Iterable[SummaryStats]) -> SummaryStats:
    out = SummaryStats()
    for p in parts:
        out = stats_merge(out, p)
    return out


@dataclass(frozen=True, slots=True)
class WindowResult:
    """Aggregate of one key over one window, as forwarded downstream.

    ``final`` is set once the window has closed; earlier forwards are
    intermediate refinements of the same window.
    """

    key: str
    start: int
    end: int
    stats: SummaryStats
    final: bool = False
