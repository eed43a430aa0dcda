"""Processing instances and the two clocks that drive them.

In simulated mode a single-threaded loop advances time in fixed ticks.  Per
tick every instance gets a record budget of ``capacity * available_time``,
where the available time shrinks by the fixed cost of a commit (if one falls
in the tick) and by a per-partition overhead.  Budgets are tracked as exact
integers so runs are bit-deterministic.

In wall-clock mode each instance is a thread that polls, burns
``record_cost_ns`` of busy work per record and commits every
``commit_interval`` of real time.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd
from typing import Any, Callable, Hashable

from scalebench.broker import Broker, Message, fair_shares
from scalebench.engine.topology import StatsAggregator, SubTopology, Topology, result_message, window_end
from scalebench.errors import NoInstances, SubexperimentFailed, UnknownTopic

log = logging.getLogger(__name__)

SIMULATED = "simulated"
WALL_CLOCK = "wall-clock"


@dataclass
class InstanceRuntime:
    """Template from which every instance of a SUT is configured.

    ``capacity`` (records/second) drives simulated mode, ``record_cost_ns``
    wall-clock mode.  ``commit_cost_ms`` is busy time spent per commit and
    ``partition_overhead_ms`` busy time per assigned partition per second;
    both only affect simulated mode.
    """

    capacity: float = 10_000.0
    commit_interval: int = 100
    record_cost_ns: int = 0
    commit_cost_ms: float = 0.0
    partition_overhead_ms: float = 0.0
    tick_ms: int | None = None
    max_poll_records: int = 500

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if self.commit_interval < 1:
            raise ValueError("commit_interval must be >= 1 ms")
        if self.tick_ms is not None and self.commit_interval % self.tick_ms:
            raise ValueError("tick_ms must divide commit_interval")

    @property
    def tick(self) -> int:
        return self.tick_ms or self.commit_interval


class SimulatedClock:
    mode = SIMULATED

    def __init__(self, start_ms: int = 0):
        self.now_ms = start_ms


class WallClock:
    mode = WALL_CLOCK

    def __init__(self):
        self._t0 = time.monotonic_ns()

    @property
    def now_ms(self) -> int:
        return (time.monotonic_ns() - self._t0) // 1_000_000

    def restart(self) -> None:
        self._t0 = time.monotonic_ns()


@dataclass
class RunReport:
    consumed: int
    consumed_by_topic: dict[str, int]
    emitted: dict[str, int]
    dropped_late: int = 0


class _Entry:
    __slots__ = ("state", "end", "dirty")

    def __init__(self, state, end):
        self.state = state
        self.end = end
        self.dirty = True


class _SubState:
    """Per-instance runtime state of one sub-topology."""

    def __init__(self, sub: SubTopology):
        self.sub = sub
        self.agg_index = sub.aggregate_index()
        self.agg = sub.stages[self.agg_index] if self.agg_index is not None else None
        self.store: dict[tuple[str, int], _Entry] = {}
        self.closed: dict[tuple[str, int], int] = {}
        self.watermark = -1
        self.floor = -1
        self.process: Callable[[Message], None] = None
        self.downstream: Callable[[Message], None] = None
        logic = self.agg.aggregator if self.agg is not None else None
        self.explicit = getattr(logic, "explicit_window", None)
        self.has_explicit = logic is not None and not isinstance(logic, StatsAggregator)


def _busy_wait(ns: int) -> None:
    end = time.perf_counter_ns() + ns
    while time.perf_counter_ns() < end:
        pass


class Instance:
    """One processing instance executing every sub-topology for its partitions."""

    def __init__(self, iid: Hashable, topology: Topology, subs: list[SubTopology], broker: Broker,
                 group: str, runtime: InstanceRuntime):
        self.id = iid
        self.topology = topology
        self.broker = broker
        self.group = group
        self.runtime = runtime
        self.subs = [_SubState(s) for s in subs]
        self.tables: dict[str, dict[str, Any]] = {t: {} for t in topology.join_topics}
        self.emitted: dict[str, int] = {}
        self.recorded: dict[str, list[Message]] = {}
        for st in self.subs:
            st.process = self._compile(st, 0)
            if st.agg is not None:
                st.downstream = self._compile(st, st.agg_index + 1)
        # (topic, sub state, is primary source)
        self.inputs = [(t, s, t == topology.source) for s in self.subs for t in s.sub.sources]
        self._table_pos = {t: [0] * broker.topic(t).partitions for t in topology.join_topics}
        self.consumed_by_topic = {t: 0 for t, _, _ in self.inputs}
        self.dropped_late = 0
        self.latency_sum = 0
        self.latency_n = 0
        self.credit = 0
        self.busy_ns = runtime.record_cost_ns

    # -- bookkeeping -------------------------------------------------------

    def assigned_partitions(self) -> int:
        return sum(len(self.broker.session(self.group, t, self.id).partitions) for t, _, _ in self.inputs)

    def available(self) -> list[int]:
        return [sum(self.broker.available(self.group, t, self.id)) for t, _, _ in self.inputs]

    def _refresh_tables(self) -> None:
        for topic, table in self.tables.items():
            pos = self._table_pos[topic]
            for p in range(len(pos)):
                for m in self.broker.fetch(topic, p, pos[p], 1 << 30):
                    table[m.key] = m.payload
                    pos[p] += 1

    # -- processing --------------------------------------------------------

    def step(self, now_ms: int, budget: int, internal_only: bool = False) -> int:
        """Poll and process up to ``budget`` records; returns how many."""
        self._refresh_tables()
        avail = self.available()
        if internal_only:
            avail = [0 if primary else a for a, (_, _, primary) in zip(avail, self.inputs)]
        shares = fair_shares(avail, budget)
        done = 0
        busy = self.busy_ns
        for (topic, st, primary), share in zip(self.inputs, shares):
            if not share:
                continue
            batches = self.broker.poll_batches(self.group, topic, self.id, share)
            process = st.process
            high = st.watermark
            n = 0
            for _, _, msgs in batches:
                if busy:
                    for m in msgs:
                        _busy_wait(busy)
                        process(m)
                else:
                    for m in msgs:
                        process(m)
                n += len(msgs)
                if st.agg is not None:
                    times = [m.event_time for m in msgs if st.explicit(m) is None] if st.has_explicit \
                        else [m.event_time for m in msgs]
                    if times:
                        high = max(high, max(times))
                if primary:
                    self.latency_sum += now_ms * len(msgs) - sum(m.event_time for m in msgs)
                    self.latency_n += len(msgs)
            done += n
            self.consumed_by_topic[topic] += n
            st.watermark = max(high, st.floor)
        return done

    def _compile(self, st: _SubState, i: int) -> Callable[[Message], None]:
        """Fuse stages ``i..`` of a sub-topology into one callable."""
        stages = st.sub.stages
        if i >= len(stages):
            return lambda m: None
        stage = stages[i]
        kind = stage.kind
        if kind == "map":
            fn, nxt = stage.fn, self._compile(st, i + 1)

            def run(m):
                m = fn(m)
                if m is not None:
                    nxt(m)
        elif kind == "join":
            fn, nxt, table = stage.fn, self._compile(st, i + 1), self.tables[stage.topic]

            def run(m):
                m = fn(m, table)
                if m is not None:
                    nxt(m)
        elif kind == "flat_map":
            fn, nxt = stage.fn, self._compile(st, i + 1)

            def run(m):
                for out in fn(m):
                    nxt(out)
        elif kind == "repartition":
            fn, send = stage.fn, self.broker.producer(stage.topic)

            def run(m):
                send(Message(fn(m), m.event_time, m.payload))
        elif kind == "sink":
            run = self._sink_fn(stage)
        else:
            def run(m):
                self._aggregate(st, m)
        return run

    def _sink_fn(self, stage) -> Callable[[Message], None]:
        name = stage.topic or "null"
        self.emitted.setdefault(name, 0)
        emitted = self.emitted
        if stage.topic is not None:
            send = self.broker.producer(stage.topic)

            def run(m):
                emitted[name] += 1
                send(m)
        elif stage.record:
            rec = self.recorded.setdefault(name, [])

            def run(m):
                emitted[name] += 1
                rec.append(m)
        else:
            def run(m):
                emitted[name] += 1
        return run

    def _aggregate(self, st: _SubState, msg: Message) -> None:
        agg = st.agg
        logic = agg.aggregator
        store = st.store
        explicit = st.explicit(msg) if st.has_explicit else None
        if explicit is not None:
            start, end = explicit
            k = (msg.key, start)
            if k in st.closed:
                self.dropped_late += 1
                return
            e = store.get(k)
            if e is None:
                e = store[k] = _Entry(logic.new_state(), end)
            logic.update(e.state, msg)
            e.dirty = True
            return
        wm = st.watermark
        for start in agg.windows(msg.event_time):
            k = (msg.key, start)
            e = store.get(k)
            if e is None:
                end = window_end(agg, start)
                if end <= wm or k in st.closed:
                    self.dropped_late += 1
                    continue
                e = store[k] = _Entry(logic.new_state(), end)
            logic.update(e.state, msg)
            e.dirty = True

    # -- commit ------------------------------------------------------------

    def forward(self, intermediate: bool = True) -> int:
        """Close due windows and forward results; returns records forwarded."""
        out = 0
        emit_intermediate = intermediate and not self.topology.emit_on_close_only
        for st in self.subs:
            if st.agg is None:
                continue
            logic = st.agg.aggregator
            wm = st.watermark
            size = st.agg.window.size
            to_close = []
            for k, e in st.store.items():
                if e.end <= wm and logic.can_close(k[0], k[1], e.end, e.state, wm, self.tables):
                    to_close.append(k)
            for k in to_close:
                e = st.store.pop(k)
                st.closed[k] = e.end
                st.downstream(result_message(k[0], k[1], e.end, logic.result(e.state), True))
                out += 1
            if emit_intermediate:
                for k, e in st.store.items():
                    if e.dirty:
                        st.downstream(result_message(k[0], k[1], e.end, logic.result(e.state), False))
                        e.dirty = False
                        out += 1
            if st.closed:
                stale = [k for k, end in st.closed.items() if wm >= end + 2 * size]
                for k in stale:
                    del st.closed[k]
        return out

    def commit_offsets(self) -> None:
        for topic, _, _ in self.inputs:
            s = self.broker.session(self.group, topic, self.id)
            for p in s.partitions:
                pos = s.positions[p]
                if pos > self.broker.committed(self.group, topic, p):
                    self.broker.commit(self.group, topic, p, pos)

    def commit(self) -> int:
        n = self.forward()
        self.commit_offsets()
        return n

    def raise_watermark(self, t: int) -> None:
        for st in self.subs:
            st.floor = max(st.floor, t)
            st.watermark = max(st.watermark, t)


def _plan(topology: Topology, broker: Broker) -> list[SubTopology]:
    for topic in [topology.source, *topology.join_topics, *topology.sink_topics()]:
        if not broker.has_topic(topic):
            raise UnknownTopic(topic)
    from scalebench.broker import TopicSpec

    partitions = broker.topic(topology.source).partitions
    for internal in topology.internal_topics():
        if not broker.has_topic(internal):
            broker.create_topic(TopicSpec(internal, partitions))
    return topology.split()


class SUT:
    """Handle to a running set of instances."""

    def __init__(self, topology: Topology, instances: list[Instance], broker: Broker, group: str,
                 runtime: InstanceRuntime, clock):
        self.topology = topology
        self.instances = instances
        self.broker = broker
        self.group = group
        self.runtime = runtime
        self.clock = clock
        self.running = True

    @property
    def topics(self) -> list[str]:
        return [t for t, _, _ in self.instances[0].inputs]

    def lag(self) -> int:
        """Record lag of the SUT's group summed over every consumed topic."""
        return sum(self.broker.total_lag(self.group, t) for t in self.topics)

    def take_latency(self) -> float | None:
        """Mean event-time latency (ms) of source records since the last call."""
        s = sum(i.latency_sum for i in self.instances)
        n = sum(i.latency_n for i in self.instances)
        for i in self.instances:
            i.latency_sum = i.latency_n = 0
        return s / n if n else None

    def report(self) -> RunReport:
        consumed_by_topic: dict[str, int] = {}
        emitted: dict[str, int] = {}
        for inst in self.instances:
            for t, n in inst.consumed_by_topic.items():
                consumed_by_topic[t] = consumed_by_topic.get(t, 0) + n
            for t, n in inst.emitted.items():
                emitted[t] = emitted.get(t, 0) + n
        return RunReport(sum(consumed_by_topic.values()), consumed_by_topic, emitted,
                         sum(i.dropped_late for i in self.instances))

    def recorded(self, sink: str = "null") -> list[Message]:
        return [m for i in self.instances for m in i.recorded.get(sink, [])]


class SimulatedSUT(SUT):
    def __init__(self, *args, tick_ms: int | None = None):
        super().__init__(*args)
        rt = self.runtime
        self.tick_ms = tick_ms or rt.tick
        if rt.commit_interval % self.tick_ms:
            raise ValueError("tick must divide the commit interval")
        self._capacity = Fraction(rt.capacity).limit_denominator(1_000_000)
        self._commit_cost_us = round(rt.commit_cost_ms * 1000)
        self._part_overhead = Fraction(rt.partition_overhead_ms).limit_denominator(1_000_000)

    def _budget(self, inst: Instance, commit_due: bool) -> int:
        avail_us = Fraction(self.tick_ms * 1000)
        if commit_due:
            avail_us -= self._commit_cost_us
        if self._part_overhead:
            avail_us -= self._part_overhead * inst.assigned_partitions() * self.tick_ms
        if avail_us <= 0:
            return 0
        inst.credit += self._capacity * avail_us
        budget = int(inst.credit // 1_000_000)
        inst.credit -= budget * 1_000_000
        return budget

    def tick(self, internal_only: bool = False) -> int:
        t1 = self.clock.now_ms + self.tick_ms
        commit_due = t1 % self.runtime.commit_interval == 0
        done = 0
        for inst in self.instances:
            done += inst.step(t1, self._budget(inst, commit_due), internal_only)
        if commit_due:
            for inst in self.instances:
                done += inst.commit()
        self.clock.now_ms = t1
        return done

    def run_until(self, t_ms: int) -> None:
        while self.clock.now_ms + self.tick_ms <= t_ms:
            self.tick()

    def drain(self, close_until: int | None = None, max_rounds: int = 10_000) -> None:
        """Tick without new input until no lag and no pending output remain."""
        if close_until is not None:
            for inst in self.instances:
                inst.raise_watermark(close_until)
        rounds = 0
        while rounds < max_rounds:
            done = self.tick()
            rounds += 1
            if self.clock.now_ms % self.runtime.commit_interval == 0 and not done and self.lag() == 0:
                break

    def settle(self, close_until: int, max_rounds: int = 64) -> None:
        """Close windows ending by ``close_until`` and let internal topics catch up.

        Source topics are not read, so a backlog on the input stays unprocessed.
        """
        for inst in self.instances:
            inst.raise_watermark(close_until)
        for _ in range(max_rounds):
            done = 0
            for inst in self.instances:
                done += inst.step(self.clock.now_ms, 1 << 40, internal_only=True)
            for inst in self.instances:
                done += inst.commit()
            if not done:
                break

    def stop(self) -> RunReport:
        if self.running:
            for inst in self.instances:
                inst.commit()
            self.running = False
        return self.report()


class WallClockSUT(SUT):
    def __init__(self, *args):
        super().__init__(*args)
        self._stop = threading.Event()
        self._threads = [threading.Thread(target=self._work, args=(i,), daemon=True,
                                          name=f"instance-{i.id}") for i in self.instances]
        self.error: BaseException | None = None
        for t in self._threads:
            t.start()

    def _work(self, inst: Instance) -> None:
        rt = self.runtime
        next_commit = self.clock.now_ms + rt.commit_interval
        try:
            while not self._stop.is_set():
                done = inst.step(self.clock.now_ms, rt.max_poll_records)
                if self.clock.now_ms >= next_commit:
                    inst.commit()
                    next_commit += rt.commit_interval
                if not done:
                    time.sleep(0.001)
            inst.commit()
        except BaseException as exc:  # surfaced through stop()
            log.exception("instance %s crashed", inst.id)
            self.error = exc

    def stop(self) -> RunReport:
        if self.running:
            self._stop.set()
            for t in self._threads:
                t.join()
            self.running = False
        if self.error is not None:
            raise SubexperimentFailed(f"instance crashed: {self.error!r}")
        return self.report()


def run_instances(topology: Topology, n: int, runtime: InstanceRuntime, clock=None, *,
                  broker: Broker, group: str | None = None, tick_ms: int | None = None) -> SUT:
    """Deploy ``n`` instances of ``topology`` against ``broker``.

    Partitions of every consumed topic are assigned round-robin to instances
    ``0 .. n-1``.  With a :class:`SimulatedClock` (the default) nothing runs
    until the handle is advanced; with a :class:`WallClock` worker threads
    start immediately.
    """
    if n < 1:
        raise NoInstances(f"need at least one instance, got {n}")
    clock = clock if clock is not None else SimulatedClock()
    subs = _plan(topology, broker)
    group = group or topology.name
    ids = list(range(n))
    for sub in subs:
        for topic in sub.sources:
            broker.assign_partitions(group, topic, ids)
    instances = [Instance(i, topology, subs, broker, group, runtime) for i in ids]
    args = (topology, instances, broker, group, runtime, clock)
    if clock.mode == SIMULATED:
        return SimulatedSUT(*args, tick_ms=tick_ms)
    return WallClockSUT(*args)


def stop_instances(handle: SUT) -> RunReport:
    return handle.stop()


def tick_for(commit_interval: int, sampling_interval: int) -> int:
    return gcd(commit_interval, sampling_interval)
