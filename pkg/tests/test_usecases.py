from collections import defaultdict

import pytest

from scalebench.engine.windows import WindowSpec
from scalebench.errors import InvalidConfig, NotApplicable
from scalebench.usecases import (
    DAY_MS,
    UNBOUNDED,
    HierarchySpec,
    TimeAttribute,
    UseCaseConfig,
    UseCaseId,
    WindowKind,
    build_topology,
    characteristics,
    complete_hierarchy,
    default_config,
    expected_output_count,
    hierarchy_over,
    output_key_cardinality,
    time_attribute_value,
    topic_names,
)
from scalebench.workload import WorkloadDimension, WorkloadPoint

from helpers import close, group_windows, run_use_case, two_pass

UC1, UC2, UC3, UC4 = UseCaseId.UC1, UseCaseId.UC2, UseCaseId.UC3, UseCaseId.UC4
HOUR = 3_600_000

# expected characteristics: stateless, tumbling, sliding, joins, feedback
CHARACTERISTICS = {
    UC1: (True, False, False, False, False),
    UC2: (False, True, False, False, False),
    UC3: (True, False, True, False, False),
    UC4: (True, True, False, True, True),
}


@pytest.mark.parametrize("uc", list(UseCaseId))
def test_characteristics(uc):
    c = characteristics(build_topology(uc, default_config(uc)))
    assert tuple(c.values()) == CHARACTERISTICS[uc]


def test_uc1_is_stateless():
    topo = build_topology(UC1, UseCaseConfig())
    assert topo.is_stateless()


def test_uc3_has_rekey_and_hopping():
    assert {"rekey", "hopping_aggregate"} <= build_topology(UC3, default_config(UC3)).kinds()


def test_uc4_has_join_and_feedback():
    assert {"join", "feedback"} <= build_topology(UC4, default_config(UC4)).kinds()


def test_uc4_hopping_variant_uses_sliding_windows():
    cfg = UseCaseConfig(window=WindowSpec(60_000, 20_000), window_kind=WindowKind.HOPPING,
                        hierarchy=HierarchySpec(2, 2))
    assert characteristics(build_topology(UC4, cfg))["sliding_window_aggregations"]


@pytest.mark.parametrize("uc,cfg", [
    (UC1, UseCaseConfig(window=WindowSpec.tumbling(10))),
    (UC2, UseCaseConfig()),
    (UC2, UseCaseConfig(window=WindowSpec(10, 5))),
    (UC3, UseCaseConfig(window=WindowSpec(10, 5))),
    (UC4, UseCaseConfig(window=WindowSpec(10, 5), window_kind=WindowKind.TUMBLING, hierarchy=HierarchySpec(2, 1))),
])
def test_config_mismatch(uc, cfg):
    with pytest.raises(InvalidConfig):
        build_topology(uc, cfg)


def test_time_attribute_values():
    assert time_attribute_value(0, TimeAttribute.HOUR_OF_DAY) == 0
    assert time_attribute_value(25 * HOUR, TimeAttribute.HOUR_OF_DAY) == 1
    assert time_attribute_value(0, TimeAttribute.DAY_OF_WEEK) == 0
    assert time_attribute_value(8 * DAY_MS, TimeAttribute.DAY_OF_WEEK) == 1
    assert time_attribute_value(0, TimeAttribute.DAY_OF_YEAR) == 0
    # 1971-01-01 starts a new year
    assert time_attribute_value(365 * DAY_MS, TimeAttribute.DAY_OF_YEAR) == 0
    assert time_attribute_value(364 * DAY_MS, TimeAttribute.DAY_OF_YEAR) == 364


def test_time_attribute_cardinality():
    assert [a.cardinality for a in TimeAttribute] == [24, 7, 365]
    assert TimeAttribute.from_cardinality(7) == TimeAttribute.DAY_OF_WEEK
    with pytest.raises(InvalidConfig):
        TimeAttribute.from_cardinality(5)


def test_output_key_cardinality():
    uc3 = lambda attr: UseCaseConfig(window=WindowSpec(3 * DAY_MS, DAY_MS), time_attribute=attr)
    assert output_key_cardinality(UC3, uc3(TimeAttribute.DAY_OF_WEEK), 10) == 70
    assert output_key_cardinality(UC3, uc3(TimeAttribute.HOUR_OF_DAY), 20) == 480
    assert output_key_cardinality(UC2, default_config(UC2), 13) == 13
    cfg4 = UseCaseConfig(window=WindowSpec.tumbling(60_000), window_kind=WindowKind.TUMBLING,
                         hierarchy=HierarchySpec(4, 2))
    assert output_key_cardinality(UC4, cfg4, 16) == 5
    with pytest.raises(NotApplicable):
        output_key_cardinality(UC1, UseCaseConfig(), 10)


def test_uc3_hour_keys_from_simulation():
    # enumerate distinct (sensor, hour) keys over 3 simulated days
    from scalebench.workload import schedule

    seen = {(i, time_attribute_value(t, TimeAttribute.HOUR_OF_DAY)) for i, t in schedule(20, 1 / 600).times_before(3 * DAY_MS)}
    assert len(seen) == 480


def test_hierarchy_shapes():
    h = complete_hierarchy(HierarchySpec(4, 2))
    assert len(h.leaves) == 16 and len(h.groups) == 5
    # every leaf has exactly one chain of depth groups up to the root
    for leaf in h.leaves:
        chain, node = [], leaf
        while node in h.parents:
            node = h.parents[node]
            chain.append(node)
        assert len(chain) == 2 and chain[-1] == h.root
    chain = complete_hierarchy(HierarchySpec(1, 3))
    assert len(chain.groups) == 3 and len(chain.leaves) == 1
    ho = hierarchy_over(10, 4)
    assert len(ho.leaves) == 10 and sorted(ho.leaves_under(ho.root)) == sorted(ho.leaves)
    assert max(len(c) for c in ho.children.values()) <= 4


def test_expected_output_count_examples():
    w60 = UseCaseConfig(window=WindowSpec.tumbling(60_000))
    assert expected_output_count(UC2, w60, 100, 300_000, 1.0, True) == 500
    assert expected_output_count(UC1, UseCaseConfig(), 10, 60_000, 1.0, False) == 600
    assert expected_output_count(UC2, w60, 100, 300_000, 1.0, False) is UNBOUNDED
    cfg4 = UseCaseConfig(window=WindowSpec.tumbling(60_000), window_kind=WindowKind.TUMBLING,
                         hierarchy=HierarchySpec(4, 2))
    assert expected_output_count(UC4, cfg4, 16, 300_000, 1.0, True) == 25


def test_expected_output_count_sparse_matches_enumeration():
    from scalebench.workload import schedule

    cfg = UseCaseConfig(window=WindowSpec(3 * DAY_MS, DAY_MS), time_attribute=TimeAttribute.DAY_OF_WEEK)
    n, rate, duration = 5, 1 / 7200, 5 * DAY_MS
    windows = set()
    for i, t in schedule(n, rate).times_before(duration):
        attr = time_attribute_value(t, cfg.time_attribute)
        for s in range(0, duration, DAY_MS):
            if s <= t < s + 3 * DAY_MS and s + 3 * DAY_MS <= duration:
                windows.add((i, attr, s))
    assert expected_output_count(UC3, cfg, n, duration, rate, True) == len(windows)


def test_topic_names():
    assert topic_names(UC1) == {"input": "uc1-input"}
    assert set(topic_names(UC4)) == {"input", "output", "hierarchy"}


def test_uc1_pass_through_bijection():
    b, sent, sut, _ = run_use_case(UC1, WorkloadPoint(WorkloadDimension.NUM_KEYS, 20), UseCaseConfig(),
                                   duration=5000)
    rows = sut.recorded()
    assert len(rows) == len(sent) == 100
    assert sorted(r.payload for r in rows) == sorted((m.key, m.event_time, m.payload) for m in sent)


def test_uc2_matches_brute_force_small():
    cfg = UseCaseConfig(window=WindowSpec.tumbling(10_000))
    b, sent, sut, _ = run_use_case(UC2, WorkloadPoint(WorkloadDimension.NUM_KEYS, 7, message_frequency=2.0), cfg,
                                   duration=40_000, instances=2, drain_until=40_000)
    oracle = group_windows(sent, cfg.window)
    out = {(r.payload.key, r.payload.start): r.payload for r in b.read_all("uc2-output")}
    assert set(out) == set(oracle)
    for k, vals in oracle.items():
        want = two_pass(vals)
        got = out[k].stats.as_tuple()
        assert got[0] == want[0]
        assert all(close(g, w) for g, w in zip(got[1:], want[1:]))
    assert len(out) == expected_output_count(UC2, cfg, 7, 40_000, 2.0, True)


def test_uc3_records_expand_into_overlapping_windows():
    cfg = UseCaseConfig(window=WindowSpec(3 * HOUR, HOUR), time_attribute=TimeAttribute.DAY_OF_WEEK)
    point = WorkloadPoint(WorkloadDimension.NUM_KEYS, 3, message_frequency=1 / 600)
    b, sent, sut, _ = run_use_case(UC3, point, cfg, duration=12 * HOUR, commit_interval=60_000,
                                   drain_until=15 * HOUR)  # past the end of every window
    key = lambda m: f"{m.key}@{time_attribute_value(m.event_time, cfg.time_attribute)}"
    oracle = group_windows(sent, cfg.window, key)
    out = {(r.payload.key, r.payload.start): r.payload.stats.count for r in b.read_all("uc3-output")}
    assert out == {k: len(v) for k, v in oracle.items()}
    # record-level multiplicity: min(overlap, windows covering t)
    assert sum(out.values()) == sum(min(3, m.event_time // HOUR + 1) for m in sent)


def test_uc4_root_equals_leaf_totals():
    point = WorkloadPoint(WorkloadDimension.NESTING_DEPTH, 2, message_frequency=0.5)
    cfg = UseCaseConfig(window=WindowSpec.tumbling(10_000), window_kind=WindowKind.TUMBLING,
                        hierarchy=HierarchySpec(3, 1))
    b, sent, sut, eff = run_use_case(UC4, point, cfg, duration=30_000, instances=2, drain_until=30_000)
    assert eff.hierarchy == HierarchySpec(3, 2)
    roots = [r.payload for r in b.read_all("uc4-output") if r.key == "g"]
    per_window = defaultdict(list)
    for m in sent:
        per_window[m.event_time // 10_000 * 10_000].append(m.payload)
    assert {r.start: r.stats.count for r in roots} == {s: len(v) for s, v in per_window.items()}
    for r in roots:
        assert r.stats.sum == sum(per_window[r.start])
