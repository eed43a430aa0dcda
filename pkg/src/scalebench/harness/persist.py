"""On-disk layout of an experiment directory.

``manifest.txt``
    every ExperimentConfig field as ``key=value``
``lag_<uc>_<dimension>_<workload>_i<instances>_s<seed>.csv``
    ``timestamp_ms,total_lag`` rows, one per lag sample
``lag_....meta``
    counts and provenance of the same subexperiment as ``key=value``
``latency_....csv``
    ``timestamp_ms,latency_ms``, only when a latency series was recorded

All files use LF line endings and are written deterministically, so equal
results give equal bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from scalebench.errors import PersistFailed, ValidationError
from scalebench.harness.config import ExperimentConfig, format_magnitude
from scalebench.usecases import UseCaseId
from scalebench.workload import WorkloadDimension

MANIFEST = "manifest.txt"
LAG_HEADER = "timestamp_ms,total_lag"
LATENCY_HEADER = "timestamp_ms,latency_ms"


@dataclass
class LagSeries:
    """``(t, lag)`` samples, ``t`` in ms since subexperiment start."""

    samples: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.samples = [(int(t), int(v)) for t, v in self.samples]
        for (t0, _), (t1, _) in zip(self.samples, self.samples[1:]):
            if t1 <= t0:
                raise ValueError(f"timestamps must be strictly increasing ({t0} then {t1})")
        if any(v < 0 for _, v in self.samples):
            raise ValueError("lag must be non-negative")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def times(self) -> list[int]:
        return [t for t, _ in self.samples]

    @property
    def values(self) -> list[int]:
        return [v for _, v in self.samples]


@dataclass
class SubexperimentResult:
    use_case: UseCaseId
    dimension: WorkloadDimension
    workload: float
    instances: int
    lag: LagSeries
    input_count: int
    output_count: int
    latency: list[tuple[int, float]] | None = None
    start_time: int = 0  # ms on the experiment clock when the cell started
    seed: int = 0

    def __post_init__(self):
        self.use_case = UseCaseId(self.use_case)
        self.dimension = WorkloadDimension(self.dimension)
        if not isinstance(self.lag, LagSeries):
            self.lag = LagSeries(self.lag)


def stem(use_case, dimension, workload, instances: int, seed: int) -> str:
    uc = UseCaseId(use_case).value.lower()
    dim = WorkloadDimension(dimension).value
    return f"{uc}_{dim}_{format_magnitude(workload)}_i{instances}_s{seed}"


def result_stem(r: SubexperimentResult) -> str:
    return stem(r.use_case, r.dimension, r.workload, r.instances, r.seed)


def lag_csv(series: LagSeries) -> str:
    return LAG_HEADER + "\n" + "".join(f"{t},{v}\n" for t, v in series)


def parse_lag_csv(text: str) -> LagSeries:
    lines = text.split("\n")
    if lines[0] != LAG_HEADER:
        raise ValueError(f"bad lag CSV header {lines[0]!r}")
    rows = [ln.split(",") for ln in lines[1:] if ln]
    return LagSeries([(int(t), int(v)) for t, v in rows])


def _latency_csv(series: list[tuple[int, float]]) -> str:
    return LATENCY_HEADER + "\n" + "".join(f"{t},{v!r}\n" for t, v in series)


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", newline="\n") as f:
            f.write(text)
    except OSError as exc:
        raise PersistFailed(f"cannot write {path}: {exc}") from exc


def write_manifest(cfg: ExperimentConfig, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PersistFailed(f"cannot create {out}: {exc}") from exc
    path = out / MANIFEST
    _write(path, cfg.to_text())
    return path


def persist_result(result: SubexperimentResult, out_dir: str | Path) -> Path:
    """Write the lag CSV (plus sidecar files) and return its path."""
    out = Path(out_dir)
    name = result_stem(result)
    meta = {
        "use_case": result.use_case.value,
        "dimension": result.dimension.value,
        "workload": format_magnitude(result.workload),
        "instances": result.instances,
        "seed": result.seed,
        "input_count": result.input_count,
        "output_count": result.output_count,
        "start_time": result.start_time,
        "samples": len(result.lag),
    }
    if result.latency is not None:
        _write(out / f"latency_{name}.csv", _latency_csv(result.latency))
    _write(out / f"lag_{name}.meta", "".join(f"{k}={v}\n" for k, v in meta.items()))
    path = out / f"lag_{name}.csv"
    _write(path, lag_csv(result.lag))
    return path


def load_result(csv_path: str | Path) -> SubexperimentResult:
    path = Path(csv_path)
    meta = dict(line.split("=", 1) for line in path.with_suffix(".meta").read_text().splitlines() if line)
    latency = None
    lat_path = path.with_name("latency_" + path.name[len("lag_"):])
    if lat_path.exists():
        rows = [ln.split(",") for ln in lat_path.read_text().split("\n")[1:] if ln]
        latency = [(int(t), float(v)) for t, v in rows]
    w = float(meta["workload"])
    return SubexperimentResult(
        use_case=meta["use_case"],
        dimension=meta["dimension"],
        workload=int(w) if w.is_integer() else w,
        instances=int(meta["instances"]),
        lag=parse_lag_csv(path.read_text()),
        input_count=int(meta["input_count"]),
        output_count=int(meta["output_count"]),
        latency=latency,
        start_time=int(meta["start_time"]),
        seed=int(meta["seed"]),
    )


def load_experiment(in_dir: str | Path) -> tuple[ExperimentConfig, list[SubexperimentResult]]:
    """Manifest and every persisted result of an experiment directory."""
    d = Path(in_dir)
    manifest = d / MANIFEST
    if not manifest.exists():
        raise ValidationError(f"no {MANIFEST} in {d}")
    cfg = ExperimentConfig.load(manifest)
    results = [load_result(p) for p in sorted(d.glob("lag_*.csv"))]
    return cfg, results
