"""Experiment configuration and its flat ``key = value`` file format."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from scalebench.engine.runtime import SIMULATED, WALL_CLOCK
from scalebench.engine.windows import WindowSpec
from scalebench.errors import DimensionNotApplicable, InvalidConfig, ValidationError
from scalebench.usecases import (
    HierarchySpec,
    TimeAttribute,
    UseCaseConfig,
    UseCaseId,
    WindowKind,
    default_config,
)
from scalebench.workload import WorkloadDimension, applicable

METHODS = ("lag_trend", "output_count", "latency_trend")
CLOCKS = (SIMULATED, WALL_CLOCK)

# use-case parameters flattened into the config file
_BASE_KEYS = ("window_size", "window_advance", "time_attribute", "window_kind", "fanout", "depth")


@dataclass
class ExperimentConfig:
    use_case: UseCaseId
    dimension: WorkloadDimension
    workloads: list[float]
    instance_counts: list[int]
    base_cfg: UseCaseConfig | None = None
    num_keys: int = 1000
    message_frequency: float = 1.0
    duration: int = 300_000
    warmup: int = 60_000
    sampling_interval: int = 5_000
    slope_threshold: float = 2000.0
    clock: str = SIMULATED
    capacity: float = 10_000.0
    record_cost_ns: int = 0
    commit_cost_ms: float = 0.0
    partition_overhead_ms: float = 0.0
    commit_interval: int = 100
    partitions: int = 40
    seed: int = 0
    sufficiency_method: str = "lag_trend"
    emit_on_close_only: bool = False
    output_tolerance: float = 0.01
    latency_threshold: float | None = None
    extra: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.use_case = UseCaseId(self.use_case)
        self.dimension = WorkloadDimension(self.dimension)
        if self.base_cfg is None:
            self.base_cfg = default_config(self.use_case)

    def validate(self) -> None:
        """Raise :class:`ValidationError` (or DimensionNotApplicable) on a bad config."""
        if not applicable(self.dimension, self.use_case, self.base_cfg):
            raise DimensionNotApplicable(f"{self.dimension.value} does not apply to {self.use_case.value}")
        problems = []
        for name in ("workloads", "instance_counts"):
            values = getattr(self, name)
            if not values:
                problems.append(f"{name} is empty")
            elif any(b <= a for a, b in zip(values, values[1:])):
                problems.append(f"{name} must be strictly ascending")
        if any(n < 1 for n in self.instance_counts):
            problems.append("instance counts must be >= 1")
        if any(not w > 0 for w in self.workloads):
            problems.append("workloads must be positive")
        if not 0 <= self.warmup < self.duration:
            problems.append("need 0 <= warmup < duration")
        if self.sampling_interval < 1 or self.sampling_interval * 3 > self.duration - self.warmup:
            problems.append("sampling_interval must leave >= 3 samples after warm-up")
        elif self.duration % self.sampling_interval:
            problems.append("duration must be a multiple of sampling_interval")
        if self.commit_interval < 1:
            problems.append("commit_interval must be >= 1 ms")
        if self.partitions < 1:
            problems.append("partitions must be >= 1")
        if self.capacity <= 0:
            problems.append("capacity must be positive")
        if self.clock not in CLOCKS:
            problems.append(f"clock must be one of {CLOCKS}")
        if self.sufficiency_method not in METHODS:
            problems.append(f"sufficiency_method must be one of {METHODS}")
        if self.num_keys < 1 or not self.message_frequency > 0:
            problems.append("num_keys and message_frequency must be positive")
        try:
            self.base_cfg.validate(self.use_case)
        except InvalidConfig as exc:
            problems.append(str(exc))
        if problems:
            raise ValidationError("; ".join(problems))

    # -- serialisation -----------------------------------------------------

    def items(self) -> list[tuple[str, str]]:
        """Every field as ``(key, text)`` in a fixed order."""
        out = []
        for f in fields(self):
            if f.name in ("base_cfg", "extra"):
                if f.name == "base_cfg":
                    out.extend(_base_items(self.base_cfg))
                continue
            out.append((f.name, _fmt(getattr(self, f.name))))
        return out

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.items())

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        raw: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"line {lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in raw:
                raise ValidationError(f"line {lineno}: duplicate key {key!r}")
            raw[key] = value
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw: dict[str, str]) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls) if f.name not in ("base_cfg", "extra")}
        unknown = sorted(set(raw) - set(known) - set(_BASE_KEYS))
        if unknown:
            raise ValidationError(f"unknown keys: {', '.join(unknown)}")
        for required in ("use_case", "dimension", "workloads", "instance_counts"):
            if required not in raw:
                raise ValidationError(f"missing required key {required!r}")
        kwargs = {}
        try:
            for key, text in raw.items():
                if key in known:
                    kwargs[key] = _parse(key, text)
            uc = UseCaseId(kwargs["use_case"])
            kwargs["base_cfg"] = _base_cfg(uc, {k: raw[k] for k in _BASE_KEYS if k in raw})
            return cls(**kwargs)
        except (ValueError, KeyError, InvalidConfig) as exc:
            raise ValidationError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())


_INTS = {"num_keys", "duration", "warmup", "sampling_interval", "record_cost_ns", "commit_interval",
         "partitions", "seed"}
_FLOATS = {"message_frequency", "slope_threshold", "capacity", "commit_cost_ms", "partition_overhead_ms",
           "output_tolerance"}


def _parse(key: str, text: str):
    if key in _INTS:
        return int(text)
    if key in _FLOATS:
        return float(text)
    if key == "latency_threshold":
        return None if text in ("", "none", "None") else float(text)
    if key == "emit_on_close_only":
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"emit_on_close_only: not a boolean: {text!r}")
        return text.lower() in ("true", "1", "yes")
    if key == "workloads":
        return [_number(v) for v in text.split(",") if v.strip()]
    if key == "instance_counts":
        return [int(v) for v in text.split(",") if v.strip()]
    return text


def _number(text: str):
    v = float(text)
    return int(v) if v.is_integer() else v


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if hasattr(value, "value") and isinstance(value.value, str):
        return value.value
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() else repr(value)
    if isinstance(value, list):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def format_magnitude(value) -> str:
    return _fmt(float(value))


def _base_items(cfg: UseCaseConfig) -> list[tuple[str, str]]:
    out = []
    if cfg.window is not None:
        out += [("window_size", str(cfg.window.size)), ("window_advance", str(cfg.window.advance))]
    if cfg.time_attribute is not None:
        out.append(("time_attribute", cfg.time_attribute.value))
    if cfg.window_kind is not None:
        out.append(("window_kind", cfg.window_kind.value))
    if cfg.hierarchy is not None:
        out += [("fanout", str(cfg.hierarchy.fanout)), ("depth", str(cfg.hierarchy.depth))]
    return out


def _base_cfg(uc: UseCaseId, raw: dict[str, str]) -> UseCaseConfig:
    """Use-case defaults overridden by whatever the file specifies."""
    base = default_config(uc)
    window = base.window
    if "window_size" in raw or "window_advance" in raw:
        if window is None:
            raise InvalidConfig(f"{uc.value} takes no window parameters")
        size = int(raw.get("window_size", window.size))
        kind = WindowKind(raw.get("window_kind", base.window_kind or "tumbling")) if uc == UseCaseId.UC4 else None
        default_adv = size if (window.is_tumbling and kind != WindowKind.HOPPING) else window.advance
        window = WindowSpec(size, int(raw.get("window_advance", default_adv)))
    attr = base.time_attribute
    if "time_attribute" in raw:
        if attr is None:
            raise InvalidConfig(f"{uc.value} takes no time_attribute")
        attr = TimeAttribute(raw["time_attribute"])
    kind = base.window_kind
    if "window_kind" in raw:
        if kind is None:
            raise InvalidConfig(f"{uc.value} takes no window_kind")
        kind = WindowKind(raw["window_kind"])
        if kind == WindowKind.HOPPING and window.is_tumbling and "window_advance" not in raw:
            raise InvalidConfig("hopping window_kind needs window_advance below window_size")
    hier = base.hierarchy
    if "fanout" in raw or "depth" in raw:
        if hier is None:
            raise InvalidConfig(f"{uc.value} takes no hierarchy parameters")
        hier = HierarchySpec(int(raw.get("fanout", hier.fanout)), int(raw.get("depth", hier.depth)))
    return UseCaseConfig(window=window, time_attribute=attr, window_kind=kind, hierarchy=hier)
