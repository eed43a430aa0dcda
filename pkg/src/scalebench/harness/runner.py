"""Experiment control: one subexperiment per (workload, instance count) cell."""

from __future__ import annotations

import contextlib
import logging
import time
from pathlib import Path

from scalebench.broker import Broker, TopicSpec
from scalebench.engine.runtime import (
    SIMULATED,
    InstanceRuntime,
    SimulatedClock,
    WallClock,
    run_instances,
    tick_for,
)
from scalebench.errors import DimensionNotApplicable, SubexperimentFailed, ValidationError
from scalebench.harness.config import ExperimentConfig
from scalebench.harness.persist import LagSeries, SubexperimentResult, persist_result, write_manifest
from scalebench.usecases import UseCaseConfig, UseCaseId, build_topology, topic_names
from scalebench.workload import WorkloadPoint, applicable, make_generator

log = logging.getLogger(__name__)


def workload_point(cfg: ExperimentConfig, workload: float) -> WorkloadPoint:
    return WorkloadPoint(cfg.dimension, workload, num_keys=cfg.num_keys, message_frequency=cfg.message_frequency)


def cell_parameters(cfg: ExperimentConfig, workload: float) -> tuple[UseCaseConfig, int, float]:
    """Effective use-case config, key count and per-key rate of one workload."""
    gen, uc_cfg = make_generator(cfg.use_case, workload_point(cfg, workload), cfg.base_cfg, cfg.seed)
    return uc_cfg, len(gen.keys), gen.schedule.rate


def ensure_topics(broker: Broker, uc: UseCaseId, partitions: int) -> None:
    for name in topic_names(uc).values():
        if not broker.has_topic(name):
            broker.create_topic(TopicSpec(name, partitions))


def _runtime(cfg: ExperimentConfig, tick: int) -> InstanceRuntime:
    return InstanceRuntime(
        capacity=cfg.capacity,
        commit_interval=cfg.commit_interval,
        record_cost_ns=cfg.record_cost_ns,
        commit_cost_ms=cfg.commit_cost_ms,
        partition_overhead_ms=cfg.partition_overhead_ms,
        tick_ms=tick,
    )


def run_subexperiment(cfg: ExperimentConfig, workload: float, instances: int,
                      broker: Broker | None = None, start_time: int = 0) -> SubexperimentResult:
    """Run one grid cell against a freshly reset broker."""
    if instances < 1:
        raise ValidationError(f"instance count must be >= 1, got {instances}")
    broker = broker if broker is not None else Broker()
    ensure_topics(broker, cfg.use_case, cfg.partitions)
    gen, uc_cfg = make_generator(cfg.use_case, workload_point(cfg, workload), cfg.base_cfg, cfg.seed)
    topology = build_topology(cfg.use_case, uc_cfg, emit_on_close_only=cfg.emit_on_close_only)
    names = topic_names(cfg.use_case)
    for ev in gen.hierarchy_events():
        broker.produce(names["hierarchy"], ev)
    tick = tick_for(cfg.commit_interval, cfg.sampling_interval)
    runtime = _runtime(cfg, tick)
    produce = broker.producer(names["input"])
    want_latency = cfg.sufficiency_method == "latency_trend"

    samples: list[tuple[int, int]] = []
    latency: list[tuple[int, float]] = []
    if cfg.clock == SIMULATED:
        sut = run_instances(topology, instances, runtime, SimulatedClock(), broker=broker, tick_ms=tick)
        drive = _simulate
    else:
        sut = run_instances(topology, instances, runtime, WallClock(), broker=broker)
        drive = _wall_clock

    def result(report_emitted):
        return SubexperimentResult(
            use_case=cfg.use_case,
            dimension=cfg.dimension,
            workload=workload,
            instances=instances,
            lag=LagSeries(samples),
            input_count=sum(broker.end_offsets(names["input"])),
            output_count=(sum(broker.end_offsets(names["output"])) if "output" in names
                          else report_emitted.get("null", 0)),
            latency=latency if want_latency else None,
            start_time=start_time,
            seed=cfg.seed,
        )

    try:
        drive(cfg, gen, produce, sut, tick, samples, latency)
    except Exception as exc:
        with contextlib.suppress(Exception):
            sut.stop()
        raise SubexperimentFailed(f"SUT crashed: {exc!r}", result(sut.report().emitted)) from exc
    try:
        report = sut.stop()
    except SubexperimentFailed as exc:
        exc.partial = result(sut.report().emitted)
        raise
    return result(report.emitted)


def _simulate(cfg, gen, produce, sut, tick, samples, latency):
    samples.append((0, sut.lag()))
    interval = cfg.sampling_interval
    for t in range(tick, cfg.duration + 1, tick):
        gen.emit_until(t, produce)
        sut.run_until(t)
        if t % interval == 0:
            mean = sut.take_latency()
            if mean is not None:
                latency.append((t, mean))
            if t < cfg.duration:
                samples.append((t, sut.lag()))
    if cfg.emit_on_close_only:
        # close every window that ended within the run without reading new input
        sut.settle(cfg.duration)


def _wall_clock(cfg, gen, produce, sut, tick, samples, latency):
    """Generate in real time while sampling lag at nominal instants."""
    clock = sut.clock
    interval = cfg.sampling_interval
    next_sample = 0
    while sut.error is None:  # a crash is raised by stop() with the partial series
        now = clock.now_ms
        gen.emit_until(min(now + 1, cfg.duration), produce)
        if now >= next_sample and next_sample < cfg.duration:
            samples.append((next_sample, sut.lag()))
            mean = sut.take_latency()
            if mean is not None and next_sample > 0:
                latency.append((next_sample, mean))
            next_sample += interval
        if now >= cfg.duration:
            gen.emit_until(cfg.duration, produce)
            break
        time.sleep(0.001)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                   broker: Broker | None = None) -> list[SubexperimentResult]:
    """Run the full workload x instance-count grid in ascending order.

    Each result is persisted to ``out_dir`` (when given) before the next
    cell starts, so a failure leaves every completed cell on disk.
    """
    if not applicable(cfg.dimension, cfg.use_case, cfg.base_cfg):
        raise DimensionNotApplicable(f"{cfg.dimension.value} does not apply to {cfg.use_case.value}")
    cfg.validate()
    broker = broker if broker is not None else Broker()
    if out_dir is not None:
        write_manifest(cfg, out_dir)
    results = []
    elapsed = 0
    for w in cfg.workloads:
        for n in cfg.instance_counts:
            broker.reset()
            ensure_topics(broker, cfg.use_case, cfg.partitions)
            log.info("subexperiment %s=%s instances=%d", cfg.dimension.value, w, n)
            try:
                r = run_subexperiment(cfg, w, n, broker, start_time=elapsed)
            except SubexperimentFailed as exc:
                # keep the partial series of the failed cell next to the completed ones
                if out_dir is not None and exc.partial is not None:
                    persist_result(exc.partial, out_dir)
                raise
            if out_dir is not None:
                persist_result(r, out_dir)
            results.append(r)
            elapsed += cfg.duration
    return results
