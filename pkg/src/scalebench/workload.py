"""Constant-rate workload generators and the workload dimensions they vary.

Every key emits once per period.  Key ``i`` of ``n`` is phase-shifted by
``i * period / n``, which puts emission ``j`` (key ``j mod n``) at
``floor(j * period / n)`` and spreads the aggregate load evenly even below
one second.  Measurement values come from :class:`random.Random` (Mersenne
Twister) seeded with the generator seed and are quantised to multiples of
1/1024 in ``[0, 100)``, so sums of them are exact in float64.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Iterator

from scalebench.broker import Message
from scalebench.engine.windows import WindowSpec
from scalebench.errors import DimensionNotApplicable, InvalidConfig
from scalebench.usecases import (
    HIERARCHY_KEY,
    Hierarchy,
    HierarchySpec,
    TimeAttribute,
    UseCaseConfig,
    UseCaseId,
    WindowKind,
    complete_hierarchy,
    uc4_hierarchy,
)

VALUE_STEPS = 102_400  # 100 * 1024


class WorkloadDimension(str, enum.Enum):
    MESSAGE_FREQUENCY = "message_frequency"
    NUM_KEYS = "num_keys"
    WINDOW_SIZE = "window_size"
    OVERLAPPING_WINDOWS = "overlapping_windows"
    ATTRIBUTE_CARDINALITY = "attribute_cardinality"
    GROUP_FANOUT = "group_fanout"
    NESTING_DEPTH = "nesting_depth"


_D = WorkloadDimension
_U = UseCaseId

# which dimensions can affect which use case; UC4 overlap needs hopping windows
APPLICABILITY: dict[WorkloadDimension, frozenset[UseCaseId]] = {
    _D.MESSAGE_FREQUENCY: frozenset({_U.UC1, _U.UC2, _U.UC3, _U.UC4}),
    _D.NUM_KEYS: frozenset({_U.UC1, _U.UC2, _U.UC3, _U.UC4}),
    _D.WINDOW_SIZE: frozenset({_U.UC2, _U.UC3, _U.UC4}),
    _D.OVERLAPPING_WINDOWS: frozenset({_U.UC3, _U.UC4}),
    _D.ATTRIBUTE_CARDINALITY: frozenset({_U.UC3}),
    _D.GROUP_FANOUT: frozenset({_U.UC4}),
    _D.NESTING_DEPTH: frozenset({_U.UC4}),
}


def applicable(dimension: WorkloadDimension, uc: UseCaseId, cfg: UseCaseConfig | None = None) -> bool:
    dimension, uc = WorkloadDimension(dimension), UseCaseId(uc)
    ok = uc in APPLICABILITY[dimension]
    if ok and cfg is not None and dimension == _D.OVERLAPPING_WINDOWS and uc == _U.UC4:
        return cfg.window_kind == WindowKind.HOPPING
    return ok


_INTEGRAL = {_D.NUM_KEYS, _D.WINDOW_SIZE, _D.OVERLAPPING_WINDOWS, _D.ATTRIBUTE_CARDINALITY,
             _D.GROUP_FANOUT, _D.NESTING_DEPTH}


@dataclass(frozen=True)
class WorkloadPoint:
    """One magnitude along one dimension; other dimensions stay pinned.

    ``num_keys`` and ``message_frequency`` (Hz per key) are the pins used
    when they are not the varied dimension.
    """

    dimension: WorkloadDimension
    magnitude: float
    num_keys: int = 1
    message_frequency: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "dimension", WorkloadDimension(self.dimension))
        if not self.magnitude > 0:
            raise InvalidConfig(f"workload magnitude must be positive, got {self.magnitude}")
        if self.dimension in _INTEGRAL and int(self.magnitude) != self.magnitude:
            raise InvalidConfig(f"{self.dimension.value} needs an integer magnitude, got {self.magnitude}")

    @property
    def keys(self) -> int:
        return int(self.magnitude) if self.dimension == _D.NUM_KEYS else self.num_keys

    @property
    def rate(self) -> float:
        return float(self.magnitude) if self.dimension == _D.MESSAGE_FREQUENCY else self.message_frequency

    @property
    def aggregate_rate(self) -> float:
        """Messages per second over all keys (for UC1-UC3)."""
        return self.keys * self.rate


class Schedule:
    """Emission times of ``n_keys`` staggered constant-rate sources."""

    def __init__(self, n_keys: int, rate_hz: float):
        if n_keys < 1:
            raise InvalidConfig("need at least one key")
        if not rate_hz > 0:
            raise InvalidConfig("message frequency must be positive")
        self.n_keys = n_keys
        self.rate = rate_hz
        self.period = Fraction(1000) / Fraction(rate_hz).limit_denominator(1_000_000_000)
        # emission j happens at floor(j * num / den)
        self._num = self.period.numerator
        self._den = self.period.denominator * n_keys

    def time_of(self, j: int) -> int:
        return j * self._num // self._den

    def count_before(self, until: int) -> int:
        """Number of emissions with event time < ``until``."""
        return -(-until * self._den // self._num) if until > 0 else 0

    def times_before(self, until: int) -> Iterator[tuple[int, int]]:
        for j in range(self.count_before(until)):
            yield j % self.n_keys, self.time_of(j)


def schedule(n_keys: int, rate_hz: float) -> Schedule:
    return Schedule(n_keys, rate_hz)


class Generator:
    """Deterministic emitter of measurement messages for a fixed key universe."""

    def __init__(self, keys: list[str], rate_hz: float, seed: int, hierarchy: Hierarchy | None = None):
        self.keys = list(keys)
        self.schedule = Schedule(len(self.keys), rate_hz)
        self.seed = seed
        self.hierarchy = hierarchy
        self.now = 0
        self._next = 0
        self._rng = random.Random(seed)

    @property
    def aggregate_rate(self) -> float:
        return len(self.keys) * self.schedule.rate

    @property
    def emitted(self) -> int:
        return self._next

    def emit_until(self, until: int, produce: Callable[[Message], object]) -> int:
        """Emit every scheduled message with event time < ``until``."""
        if until < self.now:
            raise ValueError(f"cannot emit backwards: until={until} < now={self.now}")
        end = self.schedule.count_before(until)
        keys, n = self.keys, len(self.keys)
        num, den = self.schedule._num, self.schedule._den
        rnd = self._rng.random
        for j in range(self._next, end):
            produce(Message(keys[j % n], j * num // den, int(rnd() * VALUE_STEPS) / 1024))
        count = end - self._next
        self._next = end
        self.now = until
        return count

    def hierarchy_events(self) -> list[Message]:
        return [] if self.hierarchy is None else [Message(HIERARCHY_KEY, 0, self.hierarchy)]


def build_hierarchy(spec: HierarchySpec, seed: int = 0) -> list[Message]:
    """The whole hierarchy as a single event at time 0.

    Construction is deterministic; ``seed`` is accepted for interface
    symmetry with the generators.
    """
    return [Message(HIERARCHY_KEY, 0, complete_hierarchy(spec))]


def effective_config(uc: UseCaseId, point: WorkloadPoint, base_cfg: UseCaseConfig) -> UseCaseConfig:
    dim = point.dimension
    m = int(point.magnitude) if dim in _INTEGRAL else point.magnitude
    if dim == _D.WINDOW_SIZE:
        w = base_cfg.window
        if w.is_tumbling:
            return replace(base_cfg, window=WindowSpec.tumbling(m))
        if w.advance > m:
            raise InvalidConfig(f"window size {m} below advance {w.advance}")
        return replace(base_cfg, window=WindowSpec(m, w.advance))
    if dim == _D.OVERLAPPING_WINDOWS:
        size = base_cfg.window.size
        if size % m:
            raise InvalidConfig(f"window size {size} not divisible into {m} overlapping windows")
        return replace(base_cfg, window=WindowSpec(size, size // m))
    if dim == _D.ATTRIBUTE_CARDINALITY:
        return replace(base_cfg, time_attribute=TimeAttribute.from_cardinality(m))
    if dim == _D.GROUP_FANOUT:
        return replace(base_cfg, hierarchy=HierarchySpec(m, base_cfg.hierarchy.depth))
    if dim == _D.NESTING_DEPTH:
        return replace(base_cfg, hierarchy=HierarchySpec(base_cfg.hierarchy.fanout, m))
    return base_cfg


def make_generator(uc: UseCaseId, point: WorkloadPoint, base_cfg: UseCaseConfig, seed: int
                   ) -> tuple[Generator, UseCaseConfig]:
    uc = UseCaseId(uc)
    if not applicable(point.dimension, uc, base_cfg):
        raise DimensionNotApplicable(f"{point.dimension.value} does not apply to {uc.value}")
    cfg = effective_config(uc, point, base_cfg)
    cfg.validate(uc)
    if uc == _U.UC4:
        h = uc4_hierarchy(cfg, point.keys if point.dimension == _D.NUM_KEYS else None)
        return Generator(list(h.leaves), point.rate, seed, h), cfg
    return Generator([f"s{i}" for i in range(point.keys)], point.rate, seed), cfg
