"""Miniature keyed stream-processing runtime."""

from scalebench.engine.runtime import (
    SIMULATED,
    WALL_CLOCK,
    InstanceRuntime,
    RunReport,
    SimulatedClock,
    SimulatedSUT,
    SUT,
    WallClock,
    WallClockSUT,
    run_instances,
    stop_instances,
)
from scalebench.engine.stats import (
    SummaryStats,
    WindowResult,
    fold,
    identity,
    merge_all,
    stats_accumulate,
    stats_merge,
)
from scalebench.engine.topology import (
    FlatMap,
    Feedback,
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
from scalebench.engine.windows import WindowSpec, assign_hopping, assign_tumbling

__all__ = [
    "SIMULATED", "WALL_CLOCK", "InstanceRuntime", "RunReport", "SimulatedClock", "SimulatedSUT",
    "SUT", "WallClock", "WallClockSUT", "run_instances", "stop_instances",
    "SummaryStats", "WindowResult", "fold", "identity", "merge_all", "stats_accumulate",
    "stats_merge", "FlatMap", "Feedback", "HoppingAggregate", "Join", "Map", "Rekey", "Sink",
    "Source", "StatsAggregator", "Topology", "TumblingAggregate", "WindowSpec",
    "assign_hopping", "assign_tumbling",
]
