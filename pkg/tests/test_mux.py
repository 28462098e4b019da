import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fhasel_sense.actuator import ModelError
from fhasel_sense.calibration import PolyMap3
from fhasel_sense.estimation import FeatureStream
from fhasel_sense.evaluation.joints import run_multiplexed
from fhasel_sense.mux import MuxPlan, hold_estimates, measured_rates, schedule, step_mux

BASE = 500.0
IDENTITY = PolyMap3((0.0, 1.0, 0.0, 0.0), 0.0, 1.0)


def _streams(n_channels, n_windows, kind="voltage"):
    return [FeatureStream(np.full(n_windows, float(ch)), BASE, kind) for ch in range(n_channels)]


def test_single_channel_is_always_connected():
    plan = MuxPlan(n_channels=1)
    assert all(schedule(plan, w) == (0, False) for w in range(20))


def test_round_robin_order():
    plan = MuxPlan()
    assert [schedule(plan, w).channel for w in range(8)] == [0, 1, 2, 3, 0, 1, 2, 3]


def test_settling_discards_first_window_of_each_slot():
    plan = MuxPlan(n_channels=4, slot_windows=2, settle_windows=1)
    slots = [schedule(plan, w) for w in range(8)]
    assert [s.discard for s in slots] == [True, False] * 4
    assert [s.channel for s in slots] == [0, 0, 1, 1, 2, 2, 3, 3]


def test_custom_order_and_bad_order():
    plan = MuxPlan(n_channels=3, order=(2, 0, 1))
    assert [schedule(plan, w).channel for w in range(3)] == [2, 0, 1]
    with pytest.raises(ModelError):
        MuxPlan(n_channels=3, order=(0, 0, 1))


@pytest.mark.parametrize("n, rate", [(1, 500.0), (2, 250.0), (4, 125.0), (8, 62.5)])
def test_rate_law_reference_points(n, rate):
    plan = MuxPlan(n_channels=n)
    ests = step_mux(plan, _streams(n, 5000), [IDENTITY] * n)
    assert measured_rates(ests, n, 10.0) == pytest.approx([rate] * n, abs=1 / 10.0)


@given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 5))
def test_rate_law_holds_within_one_window(n, slot, settle):
    plan = MuxPlan(n_channels=n, slot_windows=slot, settle_windows=settle)
    duration = 10.0
    windows = int(BASE * duration)
    ests = step_mux(plan, _streams(n, windows), [IDENTITY] * n)
    expected = plan.channel_rate(BASE)
    if settle < slot:
        assert expected == pytest.approx(BASE * (slot - settle) / (n * slot))
    for got in measured_rates(ests, n, duration):
        # a partial last cycle can miss at most one slot's worth of windows
        assert abs(got - expected) * duration <= plan.valid_per_slot


@given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 5), st.integers(1, 5))
def test_every_full_cycle_is_fair(n, slot, settle, cycles):
    plan = MuxPlan(n_channels=n, slot_windows=slot, settle_windows=settle)
    counts = np.zeros(n, dtype=int)
    for w in range(cycles * plan.cycle_windows):
        ch, discard = schedule(plan, w)
        counts[ch] += not discard
    assert np.all(counts == counts[0]) and counts[0] == cycles * plan.valid_per_slot


@given(st.lists(st.floats(-3, 3), min_size=40, max_size=40), st.lists(st.floats(-3, 3), min_size=40, max_size=40))
def test_channel_estimates_ignore_other_channels(other_a, other_b):
    plan = MuxPlan(n_channels=2)
    mine = FeatureStream(np.linspace(0, 1, 40), BASE, "voltage")
    a = step_mux(plan, [mine, FeatureStream(np.array(other_a), BASE, "voltage")], [IDENTITY, IDENTITY])
    b = step_mux(plan, [mine, FeatureStream(np.array(other_b), BASE, "voltage")], [IDENTITY, IDENTITY])
    assert [e for e in a if e.channel == 0] == [e for e in b if e.channel == 0]


def test_isolation_through_the_simulated_front_end(setup):
    setup = setup.with_scenario(duration_s=2.0, warmup_s=0.5)
    plan = MuxPlan(n_channels=2)
    n = int(2.0 * setup.circuit.fs)
    t = np.arange(n) / setup.circuit.fs
    moving = (3.5 + np.sin(2 * math.pi * 2 * t), setup.scenario.load_n, None)
    idle = (np.zeros(n), setup.scenario.load_n, None)
    other = (3.5 + np.sin(2 * math.pi * 3 * t), setup.scenario.load_n, None)
    q_max = [setup.actuator.q_max] * 2
    # channel 1 must be calibratable in both runs, so only the evaluation pass differs
    a = run_multiplexed(setup, plan, ["a", "b"], [moving, other], [moving, idle], q_max)
    b = run_multiplexed(setup, plan, ["a", "b"], [moving, other], [moving, other], q_max)
    assert [e for e in a.estimates if e.channel == 0] == [e for e in b.estimates if e.channel == 0]


def test_mismatched_channels_are_rejected():
    plan = MuxPlan(n_channels=2)
    with pytest.raises(ModelError):
        step_mux(plan, _streams(3, 10), [IDENTITY] * 3)
    streams = _streams(2, 10)
    streams[1] = FeatureStream(np.ones(9), BASE, "voltage")
    with pytest.raises(ModelError):
        step_mux(plan, streams, [IDENTITY] * 2)
    with pytest.raises(ModelError):
        step_mux(plan, _streams(2, 10, "impedance"), [IDENTITY] * 2)


def test_hold_marks_stale_after_a_full_cycle():
    plan = MuxPlan(n_channels=2)
    ests = step_mux(plan, _streams(2, 10), [IDENTITY] * 2)
    times = FeatureStream(np.zeros(10), BASE, "voltage").t
    held = hold_estimates(ests, plan, times)
    assert not any(e.stale for e in held)
    # drop channel 1 after its first estimate
    ests = [e for e in ests if e.channel == 0 or e.t < times[2]]
    held = hold_estimates(ests, plan, times)
    ch1 = [e for e in held if e.channel == 1]
    assert [e.stale for e in ch1] == [False, False, False] + [True] * 6
    assert all(e.displacement == 1.0 for e in ch1)
