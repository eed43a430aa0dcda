"""Offline analysis: trend regression, sufficiency verdicts and demand curves.

Everything here is a pure function of persisted results, so an experiment
directory can be re-analysed at any time with different thresholds or
methods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from scalebench.errors import IncompleteGrid, InsufficientSamples, MethodNotApplicable, PersistFailed
from scalebench.harness.config import ExperimentConfig, format_magnitude
from scalebench.harness.persist import LagSeries, SubexperimentResult
from scalebench.harness.runner import cell_parameters
from scalebench.usecases import UNBOUNDED, expected_output_count
from scalebench.workload import WorkloadDimension

LAG_TREND = "lag_trend"
OUTPUT_COUNT = "output_count"
LATENCY_TREND = "latency_trend"

DEFAULT_TOLERANCE = 0.01

# axis label per workload dimension
UNITS = {
    WorkloadDimension.MESSAGE_FREQUENCY: "message frequency (msg/s per key)",
    WorkloadDimension.NUM_KEYS: "number of keys",
    WorkloadDimension.WINDOW_SIZE: "window size (ms)",
    WorkloadDimension.OVERLAPPING_WINDOWS: "overlapping windows",
    WorkloadDimension.ATTRIBUTE_CARDINALITY: "attribute cardinality",
    WorkloadDimension.GROUP_FANOUT: "group fanout",
    WorkloadDimension.NESTING_DEPTH: "nesting depth",
}


@dataclass(frozen=True)
class TrendFit:
    slope: float  # per second
    intercept: float  # value at t = 0
    n: int
    rss: float


@dataclass(frozen=True)
class Verdict:
    sufficient: bool
    method: str
    evidence: float  # slope for trend methods, observed - expected for output_count


@dataclass
class DemandCurve:
    dimension: WorkloadDimension
    points: list[tuple[float, int | None]]  # None marks an unsatisfiable workload
    warnings: list[str] = field(default_factory=list)

    @property
    def workloads(self) -> list[float]:
        return [w for w, _ in self.points]

    @property
    def demands(self) -> list[int | None]:
        return [d for _, d in self.points]

    def as_dict(self) -> dict[float, int | None]:
        return dict(self.points)


def _pairs(series) -> list[tuple[float, float]]:
    if isinstance(series, LagSeries):
        return list(series.samples)
    return [(t, y) for t, y in series]


def ols(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Least-squares ``(slope, intercept)`` using centred sums."""
    n = len(xs)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    if sxx == 0:
        raise InsufficientSamples("need at least two distinct timestamps")
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    return slope, my - slope * mx


def trend_slope(series, warmup: int) -> TrendFit:
    """OLS trend of ``(t_ms, value)`` samples taken at or after ``warmup``.

    The slope is reported per second.
    """
    pts = [(t, y) for t, y in _pairs(series) if t >= warmup]
    if len({t for t, _ in pts}) < 2:
        raise InsufficientSamples(f"{len(pts)} samples after warm-up {warmup} ms; need 2 distinct")
    xs = [t / 1000 for t, _ in pts]
    ys = [float(y) for _, y in pts]
    slope, intercept = ols(xs, ys)
    rss = math.fsum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    return TrendFit(slope, intercept, len(pts), rss)


def verdict_lag_trend(fit: TrendFit, threshold: float) -> Verdict:
    return Verdict(fit.slope <= threshold, LAG_TREND, fit.slope)


def verdict_output_count(expected, observed: int, tolerance: float = DEFAULT_TOLERANCE) -> Verdict:
    if expected is UNBOUNDED:
        raise MethodNotApplicable("expected output count depends on runtime behaviour")
    return Verdict(observed >= expected * (1 - tolerance), OUTPUT_COUNT, observed - expected)


def verdict_latency_trend(series, warmup: int, threshold: float) -> Verdict:
    fit = trend_slope(series, warmup)
    return Verdict(fit.slope <= threshold, LATENCY_TREND, fit.slope)


def verdict(result: SubexperimentResult, cfg: ExperimentConfig, method: str | None = None,
            threshold: float | None = None) -> Verdict:
    """Verdict of one persisted subexperiment.

    ``threshold`` is the slope threshold for lag_trend (defaulting to the
    config's), the latency growth threshold for latency_trend and the
    tolerance for output_count.
    """
    method = method or cfg.sufficiency_method
    if method == LAG_TREND:
        t = cfg.slope_threshold if threshold is None else threshold
        return verdict_lag_trend(trend_slope(result.lag, cfg.warmup), t)
    if method == LATENCY_TREND:
        t = cfg.latency_threshold if threshold is None else threshold
        if t is None:
            raise MethodNotApplicable("latency_trend needs an explicit threshold")
        if result.latency is None:
            raise MethodNotApplicable("no latency series was recorded")
        return verdict_latency_trend(result.latency, cfg.warmup, t)
    if method == OUTPUT_COUNT:
        uc_cfg, n_keys, rate = cell_parameters(cfg, result.workload)
        expected = expected_output_count(cfg.use_case, uc_cfg, n_keys, cfg.duration, rate,
                                         cfg.emit_on_close_only)
        tol = cfg.output_tolerance if threshold is None else threshold
        return verdict_output_count(expected, result.output_count, tol)
    raise ValueError(f"unknown method {method!r}")


def demand_curve(results: Iterable[SubexperimentResult], cfg: ExperimentConfig, method: str | None = None,
                 threshold: float | None = None) -> DemandCurve:
    """Minimum sufficient instance count per workload of the config's grid."""
    cells = {(float(r.workload), r.instances): r for r in results}
    missing = [(w, n) for w in cfg.workloads for n in cfg.instance_counts if (float(w), n) not in cells]
    if missing:
        raise IncompleteGrid(f"missing grid cells (workload, instances): {missing}")
    points, warnings = [], []
    for w in sorted(cfg.workloads):
        ok = [(n, verdict(cells[(float(w), n)], cfg, method, threshold).sufficient)
              for n in sorted(cfg.instance_counts)]
        sufficient = [n for n, s in ok if s]
        demand = sufficient[0] if sufficient else None
        if demand is not None:
            bad = [n for n, s in ok if n > demand and not s]
            if bad:
                warnings.append(f"workload {format_magnitude(w)}: sufficient at {demand} "
                                f"but insufficient at {bad}")
        points.append((w, demand))
    return DemandCurve(cfg.dimension, points, warnings)


def demand_csv(curve: DemandCurve) -> str:
    rows = "".join(f"{format_magnitude(w)},{'' if d is None else d}\n" for w, d in curve.points)
    return "workload,demand\n" + rows


def emit_graph(curve: DemandCurve, out: str | Path, plot_path: str | Path | None = None) -> tuple[Path, Path]:
    """Write ``demand.csv`` and a scalability graph (SVG unless ``plot_path`` says otherwise)."""
    if not curve.points:
        raise ValueError("empty demand curve")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out)
    plot = Path(plot_path) if plot_path is not None else out / "scalability.svg"
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "demand.csv"
        with open(csv_path, "w", newline="\n") as f:
            f.write(demand_csv(curve))
        fig, ax = plt.subplots(figsize=(6, 4))
        sat = [(w, d) for w, d in curve.points if d is not None]
        if sat:
            ax.plot([w for w, _ in sat], [d for _, d in sat], marker="o")
        unsat = [w for w, d in curve.points if d is None]
        if unsat:
            top = max((d for _, d in sat), default=1)
            ax.plot(unsat, [top] * len(unsat), "x", color="red", label="unsatisfiable")
            ax.legend()
        ax.set_xlabel(UNITS.get(curve.dimension, curve.dimension.value))
        ax.set_ylabel("instances")
        ax.set_ylim(bottom=0)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        # fixed metadata keeps the SVG byte-stable across runs
        meta = {"Date": None} if plot.suffix == ".svg" else {}
        if plot.suffix == ".svg":
            matplotlib.rcParams["svg.hashsalt"] = "scalebench"
        fig.savefig(plot, metadata=meta)
        plt.close(fig)
    except OSError as exc:
        raise PersistFailed(f"cannot write analysis output: {exc}") from exc
    return csv_path, plot


def parse_demand_csv(text: str) -> list[tuple[float, int | None]]:
    lines = text.split("\n")
    if lines[0] != "workload,demand":
        raise ValueError("bad demand CSV header")
    out = []
    for ln in lines[1:]:
        if ln:
            w, d = ln.split(",")
            out.append((float(w), int(d) if d else None))
    return out
