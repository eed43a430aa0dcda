"""Brute-force oracles and a small driver shared by the test modules."""

import math
import statistics
from collections import defaultdict

from scalebench.broker import Broker, TopicSpec
from scalebench.engine import InstanceRuntime, run_instances
from scalebench.engine.windows import assign_hopping
from scalebench.usecases import build_topology, topic_names
from scalebench.workload import WorkloadPoint, make_generator


def two_pass(xs):
    return (len(xs), math.fsum(xs), min(xs), max(xs), statistics.fmean(xs), statistics.pvariance(xs))


def close(a, b, rel=1e-9):
    return abs(a - b) <= rel * max(abs(a), abs(b)) or abs(a - b) <= 1e-12


def group_windows(records, window, key_fn=lambda m: m.key):
    """(key, window start) -> values, by explicit enumeration of candidate starts."""
    out = defaultdict(list)
    for m in records:
        for s in range(0, m.event_time + 1, window.advance):
            if s <= m.event_time < s + window.size:
                out[(key_fn(m), s)].append(m.payload)
    return out


def run_use_case(uc, point, base_cfg, *, instances=1, duration, partitions=4, capacity=1e9,
                 commit_interval=100, close_only=True, seed=0, drain_until=None):
    """Generate, process and drain one use case; returns (broker, input records, sut)."""
    gen, cfg = make_generator(uc, point, base_cfg, seed)
    names = topic_names(uc)
    b = Broker()
    for n in names.values():
        b.create_topic(TopicSpec(n, partitions))
    for ev in gen.hierarchy_events():
        b.produce(names["hierarchy"], ev)
    topo = build_topology(uc, cfg, emit_on_close_only=close_only, record_sink=True)
    sut = run_instances(topo, instances, InstanceRuntime(capacity=capacity, commit_interval=commit_interval),
                        broker=b)
    sent = []
    send = b.producer(names["input"])

    def produce(m):
        sent.append(m)
        send(m)

    for t in range(commit_interval, duration + 1, commit_interval):
        gen.emit_until(t, produce)
        sut.run_until(t)
    sut.drain(close_until=drain_until)
    sut.stop()
    return b, sent, sut, cfg


__all__ = ["two_pass", "close", "group_windows", "run_use_case", "assign_hopping", "WorkloadPoint"]
