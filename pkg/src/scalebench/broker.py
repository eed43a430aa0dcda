"""In-process partitioned message log with consumer groups.

Topics are split into partitions, each an append-only list of messages.
Consumer groups commit offsets per partition; the record lag of a group is
the number of produced-but-uncommitted messages, summed over partitions.

Keys are mapped to partitions with 32-bit FNV-1a over the UTF-8 encoded key,
reduced modulo the partition count.  The function is seedless, so partition
placement is identical across runs, processes and platforms.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Hashable, Iterable, NamedTuple

from scalebench.errors import (
    DuplicateTopic,
    NoInstances,
    NotAssigned,
    OffsetOutOfRange,
    StaleCommit,
    UnknownTopic,
)

FNV32_OFFSET = 0x811C9DC5
FNV32_PRIME = 0x01000193


class Message(NamedTuple):
    """A keyed, timestamped record.

    ``payload`` is a float measurement for raw sensor data, a
    :class:`~scalebench.engine.stats.WindowResult` for aggregation output,
    or a :class:`~scalebench.workload.Hierarchy` for hierarchy events.
    """

    key: str
    event_time: int
    payload: Any


@dataclass(frozen=True)
class TopicSpec:
    name: str
    partitions: int

    def __post_init__(self):
        if not self.name:
            raise ValueError("topic name must be non-empty")
        if self.partitions < 1:
            raise ValueError(f"partitions must be >= 1, got {self.partitions}")


class Topic:
    """Handle to a topic's partition logs."""

    __slots__ = ("spec", "logs")

    def __init__(self, spec: TopicSpec):
        self.spec = spec
        self.logs: list[list[Message]] = [[] for _ in range(spec.partitions)]

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def partitions(self) -> int:
        return self.spec.partitions

    def __repr__(self):
        return f"Topic({self.name!r}, partitions={self.partitions})"


def fnv1a_32(data: bytes) -> int:
    h = FNV32_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV32_PRIME) & 0xFFFFFFFF
    return h


@lru_cache(maxsize=1 << 20)
def partition_for(key: str, partitions: int) -> int:
    """Partition index of ``key`` in a topic with ``partitions`` partitions."""
    if partitions < 1:
        raise ValueError(f"partitions must be >= 1, got {partitions}")
    return fnv1a_32(key.encode("utf-8")) % partitions


def _natural_key(instance: Hashable):
    if isinstance(instance, int):
        return ((0, instance),)
    parts = re.split(r"(\d+)", str(instance))
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in parts if p)


def sort_instances(instances: Iterable[Hashable]) -> list:
    """Sort instance ids so that ``i2`` precedes ``i10``."""
    return sorted(instances, key=_natural_key)


def fair_shares(available: list[int], total: int, start: int = 0) -> list[int]:
    """Split ``total`` reads over partitions by water-filling.

    Every partition gets an equal share capped at what it has available;
    leftovers go one by one to partitions in rotating order from ``start``.
    """
    n = len(available)
    shares = [0] * n
    remaining = total
    active = [(start + i) % n for i in range(n) if available[(start + i) % n] > 0]
    while remaining > 0 and active:
        per = remaining // len(active)
        if per == 0:
            for i in active[:remaining]:
                shares[i] += 1
            break
        still = []
        for i in active:
            take = min(per, available[i] - shares[i])
            shares[i] += take
            remaining -= take
            if shares[i] < available[i]:
                still.append(i)
        active = still
    return shares


@dataclass
class ConsumerSession:
    """Read position of one instance within a consumer group.

    Positions are the next offset to read per assigned partition.  They run
    ahead of the group's committed offsets until the instance commits.
    """

    group: str
    topic: str
    instance: Hashable
    partitions: list[int]
    positions: dict[int, int] = field(default_factory=dict)
    cursor: int = 0


class Broker:
    """Thread-safe in-memory broker.

    ``produce``, ``poll``, ``commit`` and the lag queries may be called from
    concurrent workers.  ``create_topic`` and ``reset`` expect no operations
    in flight.
    """

    def __init__(self):
        self._lock = threading.RLock()
        self._topics: dict[str, Topic] = {}
        # (group, topic) -> committed offset per partition
        self._commits: dict[tuple[str, str], list[int]] = {}
        # (group, topic) -> instance -> session
        self._sessions: dict[tuple[str, str], dict[Hashable, ConsumerSession]] = {}

    # -- topics ------------------------------------------------------------

    def create_topic(self, spec: TopicSpec) -> Topic:
        with self._lock:
            if spec.name in self._topics:
                raise DuplicateTopic(spec.name)
            topic = Topic(spec)
            self._topics[spec.name] = topic
            return topic

    def topic(self, topic: str | Topic) -> Topic:
        name = topic.name if isinstance(topic, Topic) else topic
        try:
            return self._topics[name]
        except KeyError:
            raise UnknownTopic(name) from None

    def has_topic(self, name: str) -> bool:
        return name in self._topics

    def topics(self) -> list[Topic]:
        return list(self._topics.values())

    def reset(self) -> None:
        """Drop every message, commit and session; keep topic specs."""
        with self._lock:
            for t in self._topics.values():
                for log in t.logs:
                    log.clear()
            self._commits.clear()
            self._sessions.clear()

    # -- producing ---------------------------------------------------------

    def produce(self, topic: str | Topic, msg: Message) -> tuple[int, int]:
        t = self.topic(topic)
        if not msg.key:
            raise ValueError("message key must be non-empty")
        if msg.event_time < 0:
            raise ValueError(f"negative event time {msg.event_time}")
        p = partition_for(msg.key, t.spec.partitions)
        with self._lock:
            log = t.logs[p]
            log.append(msg)
            return p, len(log) - 1

    def producer(self, topic: str | Topic):
        """Fast ``produce`` bound to one topic, caching key placement."""
        t = self.topic(topic)
        n = t.spec.partitions
        placement: dict[str, int] = {}
        lock = self._lock
        logs = t.logs

        def send(msg: Message) -> tuple[int, int]:
            p = placement.get(msg.key)
            if p is None:
                if not msg.key:
                    raise ValueError("message key must be non-empty")
                p = placement[msg.key] = partition_for(msg.key, n)
            if msg.event_time < 0:
                raise ValueError(f"negative event time {msg.event_time}")
            log = logs[p]
            with lock:
                log.append(msg)
                return p, len(log) - 1

        return send

    def end_offsets(self, topic: str | Topic) -> list[int]:
        t = self.topic(topic)
        with self._lock:
            return [len(log) for log in t.logs]

    def fetch(self, topic: str | Topic, partition: int, offset: int, max_records: int) -> list[Message]:
        """Group-less read of a partition slice (used by global tables)."""
        t = self.topic(topic)
        with self._lock:
            return t.logs[partition][offset : offset + max_records]

    # -- consumer groups ---------------------------------------------------

    def _committed_list(self, group: str, t: Topic) -> list[int]:
        key = (group, t.name)
        c = self._commits.get(key)
        if c is None:
            c = self._commits[key] = [0] * t.partitions
        return c

    def assign_partitions(self, group: str, topic: str | Topic, instances: Iterable[Hashable]) -> dict[int, Hashable]:
        """Round-robin partitions over instances sorted by id."""
        t = self.topic(topic)
        ordered = sort_instances(instances)
        if not ordered:
            raise NoInstances(f"no instances for group {group!r}")
        assignment = {p: ordered[p % len(ordered)] for p in range(t.partitions)}
        with self._lock:
            committed = self._committed_list(group, t)
            sessions = {}
            for inst in ordered:
                parts = [p for p, owner in assignment.items() if owner == inst]
                sessions[inst] = ConsumerSession(
                    group, t.name, inst, parts, {p: committed[p] for p in parts}
                )
            self._sessions[(group, t.name)] = sessions
        return assignment

    def session(self, group: str, topic: str | Topic, instance: Hashable) -> ConsumerSession:
        t = self.topic(topic)
        try:
            return self._sessions[(group, t.name)][instance]
        except KeyError:
            raise NotAssigned(f"instance {instance!r} has no assignment in group {group!r} on {t.name!r}") from None

    def available(self, group: str, topic: str | Topic, instance: Hashable) -> list[int]:
        """Unread message count per assigned partition of ``instance``."""
        t = self.topic(topic)
        with self._lock:
            s = self.session(group, t, instance)
            return [len(t.logs[p]) - s.positions[p] for p in s.partitions]

    def poll(self, group: str, topic: str | Topic, instance: Hashable, max_records: int) -> list[tuple[int, int, Message]]:
        """Read up to ``max_records`` past the instance's read positions.

        Reads are spread evenly over the assigned partitions and returned
        grouped by ascending partition, offset-ordered within a partition.
        Committed offsets are not advanced.
        """
        t = self.topic(topic)
        with self._lock:
            s = self.session(group, t, instance)
            if not s.partitions or max_records <= 0:
                return []
            avail = [len(t.logs[p]) - s.positions[p] for p in s.partitions]
            shares = fair_shares(avail, max_records, s.cursor)
            s.cursor = (s.cursor + 1) % len(s.partitions)
            out = []
            for p, n in zip(s.partitions, shares):
                if n:
                    start = s.positions[p]
                    out.extend((p, start + i, m) for i, m in enumerate(t.logs[p][start : start + n]))
                    s.positions[p] = start + n
            return out

    def poll_batches(self, group: str, topic: str | Topic, instance: Hashable, max_records: int) -> list[tuple[int, int, list[Message]]]:
        """Like :meth:`poll` but returns ``(partition, first_offset, messages)`` slices."""
        t = self.topic(topic)
        with self._lock:
            s = self.session(group, t, instance)
            if not s.partitions or max_records <= 0:
                return []
            avail = [len(t.logs[p]) - s.positions[p] for p in s.partitions]
            shares = fair_shares(avail, max_records, s.cursor)
            s.cursor = (s.cursor + 1) % len(s.partitions)
            out = []
            for p, n in zip(s.partitions, shares):
                if n:
                    start = s.positions[p]
                    out.append((p, start, t.logs[p][start : start + n]))
                    s.positions[p] = start + n
            return out

    def commit(self, group: str, topic: str | Topic, partition: int, offset: int) -> None:
        t = self.topic(topic)
        with self._lock:
            end = len(t.logs[partition])
            if offset > end:
                raise OffsetOutOfRange(f"{t.name}[{partition}]: commit {offset} beyond end {end}")
            committed = self._committed_list(group, t)
            if offset < committed[partition]:
                raise StaleCommit(f"{t.name}[{partition}]: commit {offset} below {committed[partition]}")
            committed[partition] = offset

    def committed(self, group: str, topic: str | Topic, partition: int) -> int:
        t = self.topic(topic)
        with self._lock:
            return self._committed_list(group, t)[partition]

    def partition_lag(self, group: str, topic: str | Topic) -> list[int]:
        t = self.topic(topic)
        with self._lock:
            committed = self._committed_list(group, t)
            return [len(log) - c for log, c in zip(t.logs, committed)]

    def total_lag(self, group: str, topic: str | Topic) -> int:
        return sum(self.partition_lag(group, topic))

    def read_all(self, topic: str | Topic) -> list[Message]:
        """Every message of a topic, partition by partition.  For inspection."""
        t = self.topic(topic)
        with self._lock:
            return [m for log in t.logs for m in log]
