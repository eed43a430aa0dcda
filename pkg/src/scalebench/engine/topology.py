"""Operator topologies and their split into sub-topologies.

A topology is a linear list of stages read left to right.  A ``Rekey`` stage
ends a sub-topology: records are re-keyed and written to an internal
repartition topic, which the next sub-topology consumes.  A ``Feedback``
stage routes a sink topic back into the first sub-topology as an extra
source.  A ``Join`` is a broadcast table join: every instance materialises
the whole table topic, regardless of partition assignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Protocol

from scalebench.broker import Message
from scalebench.engine.stats import SummaryStats, WindowResult
from scalebench.engine.windows import WindowSpec, assign_hopping, assign_tumbling
from scalebench.errors import InvalidConfig, SpecMismatch


class Stage:
    kind: str = "stage"


@dataclass(frozen=True)
class Source(Stage):
    topic: str
    kind = "source"


@dataclass(frozen=True)
class Map(Stage):
    fn: Callable[[Message], Message | None]
    name: str = "map"
    kind = "map"


@dataclass(frozen=True)
class FlatMap(Stage):
    fn: Callable[[Message], Iterable[Message]]
    name: str = "flat_map"
    kind = "flat_map"


@dataclass(frozen=True)
class Rekey(Stage):
    """Re-key records and repartition them through an internal topic."""

    fn: Callable[[Message], str]
    name: str = "rekey"
    kind = "rekey"


@dataclass(frozen=True)
class Join(Stage):
    """Broadcast join against the latest value per key of ``topic``.

    ``fn(msg, table)`` returns the enriched record or ``None`` to drop it.
    """

    topic: str
    fn: Callable[[Message, dict[str, Any]], Message | None]
    kind = "join"


class Aggregator(Protocol):
    """Window state logic plugged into an aggregate stage."""

    def explicit_window(self, msg: Message) -> tuple[int, int] | None:
        """Window ``(start, end)`` carried by the record itself, if any."""

    def new_state(self) -> Any: ...

    def update(self, state: Any, msg: Message) -> None: ...

    def result(self, state: Any) -> SummaryStats: ...

    def can_close(self, key: str, start: int, end: int, state: Any, watermark: int, tables: dict) -> bool: ...


class StatsAggregator:
    """Folds float measurements into a :class:`SummaryStats`."""

    def explicit_window(self, msg):
        return None

    def new_state(self):
        return SummaryStats()

    def update(self, state, msg):
        state.add(msg.payload)

    def result(self, state):
        return state

    def can_close(self, key, start, end, state, watermark, tables):
        return watermark >= end


@dataclass(frozen=True)
class _WindowedAggregate(Stage):
    window: WindowSpec
    aggregator: Any = field(default_factory=StatsAggregator)

    def windows(self, event_time: int) -> list[int]:
        raise NotImplementedError


@dataclass(frozen=True)
class TumblingAggregate(_WindowedAggregate):
    kind = "tumbling_aggregate"

    def __post_init__(self):
        if not self.window.is_tumbling:
            raise SpecMismatch(f"tumbling aggregate needs advance == size, got {self.window}")

    def windows(self, event_time):
        return [assign_tumbling(event_time, self.window)]


@dataclass(frozen=True)
class HoppingAggregate(_WindowedAggregate):
    """Hopping aggregate; each record is expanded into every window it falls in."""

    kind = "hopping_aggregate"

    def windows(self, event_time):
        return assign_hopping(event_time, self.window)


@dataclass(frozen=True)
class Sink(Stage):
    """Write records to ``topic``; ``None`` is a null sink that only counts."""

    topic: str | None = None
    record: bool = False
    kind = "sink"


@dataclass(frozen=True)
class Feedback(Stage):
    """Consume sink ``topic`` again as a source of the first sub-topology."""

    topic: str
    kind = "feedback"


@dataclass
class Topology:
    name: str
    stages: list[Stage]
    emit_on_close_only: bool = False

    def __post_init__(self):
        kinds = [s.kind for s in self.stages]
        if not kinds or kinds[0] != "source" or kinds.count("source") != 1:
            raise InvalidConfig("topology needs exactly one primary source as first stage")
        if kinds.count("join") > 1:
            raise InvalidConfig("at most one join source")
        if kinds.count("feedback") > 1:
            raise InvalidConfig("at most one feedback edge")
        fb = self.feedback
        if fb is not None and fb.topic not in self.sink_topics():
            raise InvalidConfig(f"feedback topic {fb.topic!r} is not a sink of the topology")

    @property
    def source(self) -> str:
        return self.stages[0].topic

    @property
    def feedback(self) -> Feedback | None:
        return next((s for s in self.stages if s.kind == "feedback"), None)

    @property
    def join_topics(self) -> list[str]:
        return [s.topic for s in self.stages if s.kind == "join"]

    def sink_topics(self) -> list[str]:
        return [s.topic for s in self.stages if s.kind == "sink" and s.topic is not None]

    def kinds(self) -> set[str]:
        return {s.kind for s in self.stages}

    def is_stateless(self) -> bool:
        return not any(isinstance(s, _WindowedAggregate) for s in self.stages)

    def repartition_topic(self, index: int) -> str:
        return f"{self.name}-repartition-{index}"

    def internal_topics(self) -> list[str]:
        n = sum(1 for s in self.stages if s.kind == "rekey")
        return [self.repartition_topic(i) for i in range(n)]

    def split(self) -> list["SubTopology"]:
        """Cut the stage list at every rekey into consumable sub-topologies."""
        subs = [SubTopology(0, [self.source], [])]
        for stage in self.stages[1:]:
            if stage.kind == "feedback":
                subs[0].sources.append(stage.topic)
            elif stage.kind == "rekey":
                internal = self.repartition_topic(len(subs) - 1)
                subs[-1].stages.append(_Repartition(internal, stage.fn))
                subs.append(SubTopology(len(subs), [internal], []))
            else:
                subs[-1].stages.append(stage)
        return subs


@dataclass(frozen=True)
class _Repartition(Stage):
    topic: str
    fn: Callable[[Message], str]
    kind = "repartition"


@dataclass
class SubTopology:
    index: int
    sources: list[str]
    stages: list[Stage]

    def aggregate_index(self) -> int | None:
        for i, s in enumerate(self.stages):
            if isinstance(s, _WindowedAggregate):
                return i
        return None


def window_end(stage: _WindowedAggregate, start: int) -> int:
    return start + stage.window.size


def result_message(key: str, start: int, end: int, stats: SummaryStats, final: bool) -> Message:
    return Message(key, start, WindowResult(key, start, end, stats.copy(), final))
