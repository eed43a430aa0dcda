import dataclasses

import pytest

from scalebench.analysis import trend_slope
from scalebench.broker import Broker
from scalebench.engine import Map, Sink, Source, Topology
from scalebench.errors import DimensionNotApplicable, SubexperimentFailed, ValidationError
from scalebench.harness import (
    ExperimentConfig,
    LagSeries,
    load_experiment,
    load_result,
    parse_lag_csv,
    persist_result,
    run_experiment,
    run_subexperiment,
)
from scalebench.harness import runner
from scalebench.harness.persist import lag_csv
from scalebench.usecases import UseCaseId
from scalebench.workload import WorkloadDimension


def uc1(**kw):
    base = dict(use_case="UC1", dimension="num_keys", workloads=[10], instance_counts=[1],
                duration=20_000, warmup=5_000, sampling_interval=1_000)
    base.update(kw)
    return ExperimentConfig(**base)


# -- configuration -------------------------------------------------------------


def test_defaults():
    cfg = ExperimentConfig("UC2", "num_keys", [1], [1])
    assert (cfg.duration, cfg.warmup, cfg.sampling_interval) == (300_000, 60_000, 5_000)
    assert (cfg.slope_threshold, cfg.commit_interval, cfg.partitions) == (2000, 100, 40)
    assert cfg.base_cfg.window.size == 60_000
    cfg.validate()


@pytest.mark.parametrize("change", [
    dict(warmup=20_000),
    dict(workloads=[]),
    dict(workloads=[20, 10]),
    dict(instance_counts=[2, 2]),
    dict(instance_counts=[0, 1]),
    dict(sampling_interval=6_000),
    dict(clock="sundial"),
    dict(sufficiency_method="vibes"),
    dict(partitions=0),
])
def test_validation_errors(change):
    with pytest.raises(ValidationError):
        uc1(**change).validate()


def test_inapplicable_dimension():
    with pytest.raises(DimensionNotApplicable):
        uc1(dimension="window_size").validate()


def test_config_text_round_trip():
    cfg = ExperimentConfig("UC3", "overlapping_windows", [1, 3], [1, 2], seed=7, emit_on_close_only=True)
    back = ExperimentConfig.from_text(cfg.to_text())
    assert back == cfg
    assert back.to_text() == cfg.to_text()


def test_config_file_overrides_use_case_params():
    cfg = ExperimentConfig.from_text("use_case=UC2\ndimension=num_keys\nworkloads=1\ninstance_counts=1\n"
                                     "window_size=5000  # short windows\n")
    assert cfg.base_cfg.window.size == cfg.base_cfg.window.advance == 5000


@pytest.mark.parametrize("text", [
    "use_case=UC1\ndimension=num_keys\nworkloads=1\ninstance_counts=1\nbogus=3\n",
    "use_case=UC1\ndimension=num_keys\nworkloads=1\n",
    "use_case=UC1\ndimension=num_keys\nworkloads=1\ninstance_counts=1\nwindow_size=5\n",
    "use_case=UC1\ndimension=num_keys\nworkloads=1\ninstance_counts=x\n",
    "use_case=UC1\nuse_case=UC2\n",
    "no equals sign\n",
])
def test_config_file_errors(text):
    with pytest.raises(ValidationError):
        ExperimentConfig.from_text(text)


# -- runs ----------------------------------------------------------------------------


def test_grid_produces_one_csv_per_cell(tmp_path):
    cfg = uc1(workloads=[10, 20, 30], instance_counts=[1, 2, 3, 4])
    results = run_experiment(cfg, tmp_path)
    assert len(results) == 12
    assert len(list(tmp_path.glob("lag_*.csv"))) == 12
    assert [(r.workload, r.instances) for r in results] == [(w, n) for w in (10, 20, 30) for n in (1, 2, 3, 4)]


def test_default_duration_gives_sixty_samples():
    cfg = uc1(duration=300_000, warmup=60_000, sampling_interval=5_000)
    r = run_subexperiment(cfg, 10, 1)
    assert len(r.lag) == 60
    assert r.lag.times[-1] == 295_000
    assert r.lag.times[-1] >= cfg.duration - cfg.sampling_interval
    assert sum(t >= 60_000 for t in r.lag.times) == 48


def test_reset_between_cells():
    cfg = uc1(workloads=[5_000], instance_counts=[1, 2], capacity=1_000)
    first, second = run_experiment(cfg)
    assert first.lag.values[-1] > 0
    assert second.lag.samples[0] == (0, 0)


def test_isolation():
    cfg = uc1(workloads=[1_500, 3_000], instance_counts=[1, 3], capacity=1_000)
    together = run_experiment(cfg)
    alone = run_subexperiment(cfg, 3_000, 3, Broker())
    assert dataclasses.replace(together[-1], start_time=0) == alone


def test_zero_instances_rejected():
    with pytest.raises(ValidationError):
        run_subexperiment(uc1(), 10, 0)


def test_slope_under_capacity_is_flat():
    cfg = uc1(workloads=[5_000], capacity=10_000, duration=60_000, warmup=10_000)
    r = run_subexperiment(cfg, 5_000, 1)
    assert abs(trend_slope(r.lag, cfg.warmup).slope) < 1


def test_slope_over_capacity_matches_shortfall():
    cfg = uc1(workloads=[25_000], capacity=10_000, duration=30_000, warmup=10_000)
    r = run_subexperiment(cfg, 25_000, 1)
    assert trend_slope(r.lag, cfg.warmup).slope == pytest.approx(15_000, rel=1e-3)


def test_counts_from_end_offsets():
    cfg = uc1(workloads=[100])
    r = run_subexperiment(cfg, 100, 1)
    assert r.input_count == 100 * 20 == r.output_count


def test_crash_keeps_partial_series(monkeypatch, tmp_path):
    calls = {"n": 0}

    def boom(m):
        calls["n"] += 1
        if calls["n"] > 500:
            raise RuntimeError("operator failure")
        return m

    monkeypatch.setattr(runner, "build_topology",
                        lambda *a, **k: Topology("uc1", [Source("uc1-input"), Map(boom), Sink(None)]))
    cfg = uc1(workloads=[100])
    with pytest.raises(SubexperimentFailed) as info:
        run_experiment(cfg, tmp_path)
    partial = info.value.partial
    assert partial is not None and 1 <= len(partial.lag) < 20
    assert load_result(next(tmp_path.glob("lag_*.csv"))).lag == partial.lag


def test_wall_clock_emission_rate():
    cfg = uc1(workloads=[2_000], clock="wall-clock", duration=3_000, warmup=1_000, sampling_interval=500,
              commit_interval=50)
    r = run_subexperiment(cfg, 2_000, 2)
    assert abs(r.input_count / (cfg.duration / 1000) - 2_000) / 2_000 < 0.02
    assert len(r.lag) == 6


# -- persistence ------------------------------------------------------------------------


def test_persist_format_and_round_trip(tmp_path):
    r = run_subexperiment(uc1(duration=60_000, warmup=10_000), 10, 1)
    path = persist_result(r, tmp_path)
    assert path.name == "lag_uc1_num_keys_10_i1_s0.csv"
    raw = path.read_bytes()
    assert raw.startswith(b"timestamp_ms,total_lag\n") and b"\r" not in raw
    assert raw.count(b"\n") == 1 + 60
    before = raw
    persist_result(r, tmp_path)
    assert path.read_bytes() == before
    assert load_result(path) == r


def test_lag_csv_inverse():
    s = LagSeries([(0, 0), (5000, 12), (10000, 3)])
    assert parse_lag_csv(lag_csv(s)) == s
    assert lag_csv(s) == "timestamp_ms,total_lag\n0,0\n5000,12\n10000,3\n"


def test_lag_series_invariants():
    with pytest.raises(ValueError):
        LagSeries([(0, 1), (0, 2)])
    with pytest.raises(ValueError):
        LagSeries([(0, -1)])


def test_manifest_lists_every_field(tmp_path):
    cfg = uc1()
    run_experiment(cfg, tmp_path)
    text = (tmp_path / "manifest.txt").read_text()
    keys = [ln.split("=")[0] for ln in text.splitlines()]
    assert {f.name for f in dataclasses.fields(cfg)} - {"base_cfg", "extra"} <= set(keys)
    loaded, results = load_experiment(tmp_path)
    assert loaded == cfg and len(results) == 1
    assert results[0].use_case == UseCaseId.UC1 and results[0].dimension == WorkloadDimension.NUM_KEYS
