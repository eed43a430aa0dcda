"""Reference topologies of the four benchmark use cases.

UC1 stores records (null sink), UC2 downsamples with tumbling windows, UC3
aggregates per time attribute over hopping windows and UC4 aggregates sensor
groups hierarchically with a feedback loop.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any

from scalebench.broker import Message
from scalebench.engine.stats import SummaryStats, WindowResult, stats_merge
from scalebench.engine.topology import (
    Feedback,
    FlatMap,
    HoppingAggregate,
    Join,
    Map,
    Rekey,
    Sink,
    Source,
    StatsAggregator,
    Topology,
    TumblingAggregate,
)
from scalebench.engine.windows import WindowSpec, assign_hopping
from scalebench.errors import InvalidConfig, NotApplicable

HOUR_MS = 3_600_000
DAY_MS = 86_400_000
HIERARCHY_KEY = "hierarchy"


class UseCaseId(str, enum.Enum):
    UC1 = "UC1"
    UC2 = "UC2"
    UC3 = "UC3"
    UC4 = "UC4"


class TimeAttribute(str, enum.Enum):
    HOUR_OF_DAY = "hour_of_day"
    DAY_OF_WEEK = "day_of_week"
    DAY_OF_YEAR = "day_of_year"

    @property
    def cardinality(self) -> int:
        return {"hour_of_day": 24, "day_of_week": 7, "day_of_year": 365}[self.value]

    @classmethod
    def from_cardinality(cls, n: int) -> "TimeAttribute":
        for attr in cls:
            if attr.cardinality == n:
                return attr
        raise InvalidConfig(f"no time attribute with {n} values (use 24, 7 or 365)")


class WindowKind(str, enum.Enum):
    TUMBLING = "tumbling"
    HOPPING = "hopping"


@dataclass(frozen=True)
class HierarchySpec:
    fanout: int
    depth: int

    def __post_init__(self):
        if self.fanout < 1 or self.depth < 1:
            raise InvalidConfig(f"fanout and depth must be >= 1, got {self.fanout}, {self.depth}")

    @property
    def leaves(self) -> int:
        return self.fanout**self.depth

    @property
    def groups(self) -> int:
        return sum(self.fanout**k for k in range(self.depth))


@dataclass(frozen=True)
class Hierarchy:
    """A tree of sensor groups.  Groups are prefixed ``g``, leaf sensors ``s``."""

    root: str
    children: dict[str, tuple[str, ...]]
    parents: dict[str, str]
    leaves: tuple[str, ...]

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(self.children)

    def is_group(self, node: str) -> bool:
        return node in self.children

    def leaves_under(self, node: str) -> list[str]:
        if node not in self.children:
            return [node]
        out = []
        for c in self.children[node]:
            out.extend(self.leaves_under(c))
        return out


def complete_hierarchy(spec: HierarchySpec) -> Hierarchy:
    """Complete ``fanout``-ary tree with ``depth`` group levels."""
    children: dict[str, tuple[str, ...]] = {}
    parents: dict[str, str] = {}
    leaves: list[str] = []

    def build(path: str, level: int) -> str:
        name = "g" + path
        kids = []
        for i in range(spec.fanout):
            sub = f"{path}.{i}"
            if level + 1 < spec.depth:
                kid = build(sub, level + 1)
            else:
                kid = "s" + sub
                leaves.append(kid)
            parents[kid] = name
            kids.append(kid)
        children[name] = tuple(kids)
        return name

    root = build("", 0)
    return Hierarchy(root, children, parents, tuple(leaves))


def hierarchy_over(n_leaves: int, fanout: int) -> Hierarchy:
    """Smallest tree with ``n_leaves`` sensors and at most ``fanout`` children per group."""
    if n_leaves < 1 or fanout < 1:
        raise InvalidConfig("need at least one leaf and fanout >= 1")
    if fanout == 1 and n_leaves > 1:
        raise InvalidConfig("fanout 1 cannot group more than one leaf")
    return _chunked([f"s{i}" for i in range(n_leaves)], fanout)


def _chunked(leaves: list[str], fanout: int) -> Hierarchy:
    children: dict[str, tuple[str, ...]] = {}
    parents: dict[str, str] = {}
    level, depth = list(leaves), 0
    while True:
        groups = []
        for i in range(0, len(level), fanout):
            name = f"g{depth}.{i // fanout}"
            chunk = tuple(level[i : i + fanout])
            children[name] = chunk
            for c in chunk:
                parents[c] = name
            groups.append(name)
        level, depth = groups, depth + 1
        if len(level) == 1:
            break
    return Hierarchy(level[0], children, parents, tuple(leaves))


@dataclass(frozen=True)
class UseCaseConfig:
    window: WindowSpec | None = None
    time_attribute: TimeAttribute | None = None
    window_kind: WindowKind | None = None
    hierarchy: HierarchySpec | None = None

    def validate(self, uc: UseCaseId) -> None:
        required = {
            UseCaseId.UC1: set(),
            UseCaseId.UC2: {"window"},
            UseCaseId.UC3: {"window", "time_attribute"},
            UseCaseId.UC4: {"window", "window_kind", "hierarchy"},
        }[UseCaseId(uc)]
        present = {f for f in ("window", "time_attribute", "window_kind", "hierarchy") if getattr(self, f) is not None}
        if present != required:
            raise InvalidConfig(f"{uc.value if isinstance(uc, UseCaseId) else uc} needs exactly {sorted(required)}, got {sorted(present)}")
        if uc == UseCaseId.UC2 and not self.window.is_tumbling:
            raise InvalidConfig("UC2 aggregates over tumbling windows")
        if uc == UseCaseId.UC4 and (self.window_kind == WindowKind.TUMBLING) != self.window.is_tumbling:
            raise InvalidConfig(f"window {self.window} does not match kind {self.window_kind.value}")


def default_config(uc: UseCaseId) -> UseCaseConfig:
    uc = UseCaseId(uc)
    if uc == UseCaseId.UC1:
        return UseCaseConfig()
    if uc == UseCaseId.UC2:
        return UseCaseConfig(window=WindowSpec.tumbling(60_000))
    if uc == UseCaseId.UC3:
        return UseCaseConfig(window=WindowSpec(3 * DAY_MS, DAY_MS), time_attribute=TimeAttribute.HOUR_OF_DAY)
    return UseCaseConfig(window=WindowSpec.tumbling(60_000), window_kind=WindowKind.TUMBLING,
                         hierarchy=HierarchySpec(4, 1))


def time_attribute_value(event_time: int, attribute: TimeAttribute) -> int:
    """Attribute of a UTC timestamp.

    ``day_of_week`` counts days since the epoch modulo 7, so 1970-01-01 is
    index 0.  ``day_of_year`` is zero-based.
    """
    attribute = TimeAttribute(attribute)
    if attribute == TimeAttribute.HOUR_OF_DAY:
        return event_time // HOUR_MS % 24
    if attribute == TimeAttribute.DAY_OF_WEEK:
        return event_time // DAY_MS % 7
    day = datetime.fromtimestamp(event_time // 1000, tz=timezone.utc)
    return day.timetuple().tm_yday - 1


# -- UC4 plumbing -------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Parented:
    """A record enriched by the hierarchy join with its parent groups."""

    value: Any
    parents: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class ChildUpdate:
    """Contribution of one child (sensor or subgroup) to its parent group."""

    child: str
    value: Any  # float measurement or WindowResult of a subgroup


@dataclass
class _GroupState:
    children: dict[str, SummaryStats] = field(default_factory=dict)
    final: set[str] = field(default_factory=set)


class GroupAggregator:
    """Aggregates a group from the latest accumulator of each child.

    Sensor children accumulate raw measurements; subgroup children are
    replaced by their most recent forwarded result.  A group window closes
    once the watermark passed its end and every subgroup child has delivered
    its final result, or, as a fallback, once the watermark passed the end by
    a further ``grace`` milliseconds.
    """

    def __init__(self, table_topic: str, grace: int):
        self.table_topic = table_topic
        self.grace = grace

    def explicit_window(self, msg):
        v = msg.payload.value
        if isinstance(v, WindowResult):
            return (v.start, v.end)
        return None

    def new_state(self):
        return _GroupState()

    def update(self, state, msg):
        cu = msg.payload
        if isinstance(cu.value, WindowResult):
            state.children[cu.child] = cu.value.stats
            if cu.value.final:
                state.final.add(cu.child)
        else:
            acc = state.children.get(cu.child)
            if acc is None:
                acc = state.children[cu.child] = SummaryStats()
            acc.add(cu.value)

    def result(self, state):
        out = SummaryStats()
        for child in sorted(state.children):
            out = stats_merge(out, state.children[child])
        return out

    def can_close(self, key, start, end, state, watermark, tables):
        if watermark >= end + self.grace:
            return True
        h = tables.get(self.table_topic, {}).get(HIERARCHY_KEY)
        if h is None:
            return False
        return all(c in state.final for c in h.children.get(key, ()) if h.is_group(c))


def _join_parents(table_topic: str):
    def join(msg: Message, table: dict) -> Message | None:
        h = table.get(HIERARCHY_KEY)
        if h is None:
            return None
        parent = h.parents.get(msg.key)
        if parent is None:
            return None
        return Message(msg.key, msg.event_time, Parented(msg.payload, (parent,)))

    return join


def _duplicate_per_parent(msg: Message) -> list[Message]:
    p = msg.payload
    return [Message(parent, msg.event_time, ChildUpdate(msg.key, p.value)) for parent in p.parents]


def _to_row(msg: Message) -> Message:
    # database row format: (sensor, timestamp, value)
    return Message(msg.key, msg.event_time, (msg.key, msg.event_time, msg.payload))


def _attribute_rekey(attribute: TimeAttribute):
    def rekey(msg: Message) -> str:
        return f"{msg.key}@{time_attribute_value(msg.event_time, attribute)}"

    return rekey


def topic_names(uc: UseCaseId) -> dict[str, str]:
    prefix = UseCaseId(uc).value.lower()
    names = {"input": f"{prefix}-input"}
    if uc != UseCaseId.UC1:
        names["output"] = f"{prefix}-output"
    if uc == UseCaseId.UC4:
        names["hierarchy"] = f"{prefix}-hierarchy"
    return names


def build_topology(uc: UseCaseId, cfg: UseCaseConfig | None = None, *, emit_on_close_only: bool = False,
                   record_sink: bool = False) -> Topology:
    uc = UseCaseId(uc)
    cfg = cfg if cfg is not None else UseCaseConfig()
    cfg.validate(uc)
    names = topic_names(uc)
    name = uc.value.lower()
    if uc == UseCaseId.UC1:
        stages = [Source(names["input"]), Map(_to_row, "format_convert"), Sink(None, record=record_sink)]
    elif uc == UseCaseId.UC2:
        stages = [Source(names["input"]), TumblingAggregate(cfg.window, StatsAggregator()), Sink(names["output"])]
    elif uc == UseCaseId.UC3:
        stages = [
            Source(names["input"]),
            Rekey(_attribute_rekey(cfg.time_attribute), "attribute_key"),
            HoppingAggregate(cfg.window, StatsAggregator()),
            Sink(names["output"]),
        ]
    else:
        agg_cls = TumblingAggregate if cfg.window_kind == WindowKind.TUMBLING else HoppingAggregate
        stages = [
            Source(names["input"]),
            Join(names["hierarchy"], _join_parents(names["hierarchy"])),
            FlatMap(_duplicate_per_parent, "duplicate_per_parent"),
            Rekey(lambda m: m.key, "group_key"),
            agg_cls(cfg.window, GroupAggregator(names["hierarchy"], cfg.window.size)),
            Sink(names["output"]),
            Feedback(names["output"]),
        ]
    return Topology(name, stages, emit_on_close_only)


# dataflow characteristics in the order: stateless, tumbling, sliding, join, feedback
def characteristics(topology: Topology) -> dict[str, bool]:
    kinds = topology.kinds()
    return {
        "stateless_operations": bool(kinds & {"map", "flat_map", "rekey", "join"}),
        "tumbling_window_aggregations": "tumbling_aggregate" in kinds,
        "sliding_window_aggregations": "hopping_aggregate" in kinds,
        "joins": "join" in kinds,
        "feedback_loops": "feedback" in kinds,
    }


def uc4_hierarchy(cfg: UseCaseConfig, n_keys: int | None = None) -> Hierarchy:
    if n_keys is None or n_keys == cfg.hierarchy.leaves:
        return complete_hierarchy(cfg.hierarchy)
    return hierarchy_over(n_keys, cfg.hierarchy.fanout)


def output_key_cardinality(uc: UseCaseId, cfg: UseCaseConfig, n_keys: int) -> int:
    uc = UseCaseId(uc)
    if uc == UseCaseId.UC1:
        raise NotApplicable("UC1 has no keyed aggregation output")
    if uc == UseCaseId.UC2:
        return n_keys
    if uc == UseCaseId.UC3:
        return n_keys * cfg.time_attribute.cardinality
    return len(uc4_hierarchy(cfg, n_keys).groups)


class _Unbounded:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "UNBOUNDED"


UNBOUNDED = _Unbounded()


def _closed_starts(window: WindowSpec, duration: int) -> list[int]:
    return list(range(0, duration - window.size + 1, window.advance)) if duration >= window.size else []


def expected_output_count(uc: UseCaseId, cfg: UseCaseConfig, n_keys: int, duration: int,
                          msg_rate_per_key: float, emit_on_close_only: bool):
    """Outputs a sufficient SUT produces for a run of ``duration`` ms.

    Counts windows that end within the run and received at least one
    record.  Returns :data:`UNBOUNDED` for stateful use cases that forward
    intermediate results, whose output count depends on runtime behaviour.
    """
    from scalebench.workload import schedule

    uc = UseCaseId(uc)
    sched = schedule(n_keys, msg_rate_per_key)
    if uc == UseCaseId.UC1:
        return sched.count_before(duration)
    if not emit_on_close_only:
        return UNBOUNDED
    window = cfg.window
    closed = _closed_starts(window, duration)
    if not closed:
        return 0
    last_end = closed[-1] + window.size
    dense = sched.period <= window.advance and sched.period <= window.size
    if uc == UseCaseId.UC2 and dense:
        return n_keys * len(closed)
    if uc == UseCaseId.UC4:
        h = uc4_hierarchy(cfg, n_keys)
        if dense:
            return len(h.groups) * len(closed)
        per_leaf = _populated_windows(sched, window, last_end)
        leaf_index = {leaf: i for i, leaf in enumerate(h.leaves)}
        total = 0
        for g in h.groups:
            starts = set()
            for leaf in h.leaves_under(g):
                starts |= per_leaf[leaf_index[leaf]]
            total += len(starts)
        return total
    seen = set()
    for i, t in sched.times_before(last_end):
        attr = time_attribute_value(t, cfg.time_attribute) if uc == UseCaseId.UC3 else None
        for s in assign_hopping(t, window):
            if s + window.size <= last_end:
                seen.add((i, attr, s))
    return len(seen)


def _populated_windows(sched, window: WindowSpec, until: int) -> list[set[int]]:
    per = [set() for _ in range(sched.n_keys)]
    for i, t in sched.times_before(until):
        for s in assign_hopping(t, window):
            if s + window.size <= until:
                per[i].add(s)
    return per

