import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fhasel_sense.actuator import ModelError
from fhasel_sense.evaluation.metrics import nrmse, phase_lag

RATE = 500.0


def test_nrmse_identity_and_offset():
    truth = np.sin(np.linspace(0, 10, 300)) * 2.0
    assert nrmse(truth, truth) == 0.0
    span = truth.max() - truth.min()
    assert nrmse(truth + 0.1, truth) == pytest.approx(0.1 / span, rel=1e-12)


def test_nrmse_errors():
    with pytest.raises(ModelError):
        nrmse(np.ones(5), np.ones(5))
    with pytest.raises(ModelError):
        nrmse(np.ones(4), np.arange(5.0))


def _tone(f, n, delay=0.0, phase=0.0):
    t = np.arange(n) / RATE
    return np.sin(2 * np.pi * f * (t - delay) + phase)


def test_identical_streams_have_zero_lag():
    x = _tone(2.0, 2500)
    assert phase_lag(x, x, 2.0, RATE) == 0.0


@pytest.mark.parametrize("f", [0.5, 1.0, 5.0, 10.0])
def test_quarter_period_delay_is_plus_ninety(f):
    n = int(RATE * 12 / f)
    truth = _tone(f, n)
    est = _tone(f, n, delay=0.25 / f)
    assert phase_lag(est, truth, f, RATE) == pytest.approx(90.0, abs=1e-6)
    assert phase_lag(truth, est, f, RATE) == pytest.approx(-90.0, abs=1e-6)


@given(st.floats(-179.0, 179.0), st.floats(0.5, 10.0), st.floats(0.0, 2.0))
def test_lag_recovers_phase_shift(shift, f, offset):
    n = int(RATE * 10 / f)
    truth = _tone(f, n) + offset
    est = 0.7 * _tone(f, n, phase=-np.radians(shift)) + offset
    # n is not a whole number of periods, so window leakage leaves a tiny bias
    assert phase_lag(est, truth, f, RATE) == pytest.approx(shift, abs=1e-3)


def test_lag_is_wrapped_into_half_open_interval():
    n = 5000
    truth = _tone(1.0, n)
    assert phase_lag(-truth, truth, 1.0, RATE) == pytest.approx(180.0)


def test_too_few_periods_is_an_error():
    x = _tone(1.0, 2000)
    with pytest.raises(ModelError):
        phase_lag(x, x, 1.0, RATE)


def test_missing_component_is_an_error():
    x = _tone(1.0, 5000)
    with pytest.raises(ModelError, match="estimate"):
        phase_lag(np.ones(5000), x, 1.0, RATE)
    with pytest.raises(ModelError, match="truth"):
        phase_lag(x, _tone(7.3, 5000), 1.0, RATE)
