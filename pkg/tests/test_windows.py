import pytest
from hypothesis import given
from hypothesis import strategies as st

from scalebench.engine.windows import WindowSpec, assign_hopping, assign_tumbling
from scalebench.errors import SpecMismatch

DAY = 86_400_000


def brute_force_starts(t, spec):
    return [s for s in range(0, t + 1) if s % spec.advance == 0 and s <= t < s + spec.size]


def test_tumbling_examples():
    spec = WindowSpec.tumbling(60_000)
    assert assign_tumbling(65_000, spec) == 60_000
    assert assign_tumbling(0, spec) == 0
    assert assign_tumbling(59_999, spec) == 0
    assert assign_tumbling(60_000, spec) == 60_000


def test_tumbling_rejects_hopping():
    with pytest.raises(SpecMismatch):
        assign_tumbling(5, WindowSpec(10, 5))


def test_hopping_three_days():
    spec = WindowSpec(3 * DAY, DAY)
    assert assign_hopping(int(2.5 * DAY), spec) == [0, DAY, 2 * DAY]
    assert assign_hopping(int(0.5 * DAY), spec) == [0]
    assert assign_hopping(int(5.5 * DAY), spec) == [3 * DAY, 4 * DAY, 5 * DAY]


@pytest.mark.parametrize("bad", [(0, 0), (5, 6), (5, 0)])
def test_spec_invariants(bad):
    with pytest.raises(ValueError):
        WindowSpec(*bad)


def test_overlap():
    assert WindowSpec(3 * DAY, DAY).overlap == 3
    assert WindowSpec.tumbling(10).overlap == 1
    assert WindowSpec(10, 3).overlap == 4


@given(st.integers(0, 10**12), st.integers(1, 10**7))
def test_tumbling_special_case_of_hopping(t, size):
    spec = WindowSpec.tumbling(size)
    assert assign_hopping(t, spec) == [assign_tumbling(t, spec)]


@given(st.integers(0, 400), st.integers(1, 40), st.integers(1, 40))
def test_hopping_matches_brute_force(t, a, b):
    spec = WindowSpec(max(a, b), min(a, b))
    got = assign_hopping(t, spec)
    assert got == brute_force_starts(t, spec)
    assert len(got) <= spec.overlap
