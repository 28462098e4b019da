import math
import os
import tempfile

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fhasel_sense import io
from fhasel_sense.actuator import ModelError
from fhasel_sense.calibration import DualPolyMap3, PolyMap3
from fhasel_sense.circuit import SignalTrace
from fhasel_sense.config import ConfigError, default_config_text, load_config, parse_config
from fhasel_sense.estimation import FeatureStream
from fhasel_sense.evaluation import Setup
from fhasel_sense.mux import ChannelEstimate

from .conftest import CONFIGS


def test_default_text_round_trips_to_defaults():
    assert parse_config(default_config_text()) == Setup()


def test_shipped_defaults_file_is_current():
    assert load_config(CONFIGS / "defaults.ini") == Setup()


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.ini")), ids=lambda p: p.name)
def test_shipped_configs_load(path):
    load_config(path)


def test_values_are_typed():
    s = parse_config("""
[actuator]
tau_c = 0
[circuit]
cmrr_db = inf
[estimation]
smoothing = 3
[calibration]
hold_last_on_tie = no
[mux]
n_channels = 3
order = 2, 0, 1
[scenario]
sweep_frequencies = 1, 2.5
sweep_methods = impedance
overrides = actuator.damping:4.0, circuit.cmrr_db:40
noise = false
""")
    assert s.actuator.tau_c == 0.0
    assert math.isinf(s.circuit.cmrr_db)
    assert s.rms.smoothing == 3 and s.rms.fs == s.circuit.fs
    assert s.calibration.hold_last_on_tie is False
    assert s.mux.order == (2, 0, 1)
    assert s.scenario.sweep_frequencies == (1.0, 2.5)
    assert s.scenario.sweep_methods == ("impedance",)
    assert s.scenario.overrides == {"actuator.damping": 4.0, "circuit.cmrr_db": 40.0}
    assert s.scenario.noise is False
    assert s.resolved().actuator.damping == 4.0


@pytest.mark.parametrize("text, match", [
    ("[actuator]\nbogus = 1\n", "unknown key"),
    ("[plant]\nx = 1\n", "unknown section"),
    ("[actuator]\nmass = heavy\n", "mass"),
    ("[scenario]\nnoise = maybe\n", "noise"),
    ("[scenario]\noffset_kv = 5.5\n", "supply"),
    ("[estimation]\nwindow = 130\n", "sensing periods"),
    ("[actuator]\nk_f = 0.1\nequilibrium_fraction = 0.5\n", "either"),
    ("no section\n", "section"),
])
def test_invalid_configs(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_force_coefficient_can_be_derived():
    s = parse_config("[actuator]\nequilibrium_fraction = 0.5\n")
    expected = (400 * 0.5 * 0.006 + 0.0478 * 9.81) / 16
    assert s.actuator.k_f == pytest.approx(expected, rel=1e-12)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=30))
def test_trace_round_trip_keeps_nine_digits(values):
    trace = SignalTrace(np.array(values), 100e3, 0.25)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "v.csv")
        io.atomic_write(path, io.trace_to_csv(trace))
        back = io.read_trace_csv(path)
    np.testing.assert_allclose(back.samples, trace.samples, rtol=1e-8, atol=1e-300)
    assert back.fs == pytest.approx(100e3, rel=1e-8)
    assert back.t0 == 0.25


def test_trace_header(tmp_path):
    text = io.trace_to_csv(SignalTrace(np.array([1.0, 2.0]), 1e5))
    assert text.splitlines() == ["t_s,value_v", "0,1", "1e-05,2"]


def test_feature_round_trip(tmp_path):
    fs = FeatureStream(np.array([0.5, 0.75, 1.0]), 500.0, "impedance", 0.000995)
    path = tmp_path / "f.csv"
    io.atomic_write(path, io.features_to_csv(fs))
    assert path.read_text().splitlines()[0] == "t_s,value,kind"
    back = io.read_features_csv(path)
    assert back.kind == "impedance" and back.rate == pytest.approx(500.0)
    np.testing.assert_array_equal(back.values, fs.values)


def test_single_map_round_trip(tmp_path):
    m = PolyMap3((0.00312345678901234, 1.1e-3, -2.2e-4, 3.3e-5), 1.14233140302, 0.407060625541, "voltage")
    path = tmp_path / "map.csv"
    io.write_map(m, path)
    lines = path.read_text().splitlines()
    assert lines[:4] == ["kind,voltage", "mean,1.14233140302", "scale,0.407060625541", "branch,c0,c1,c2,c3"]
    assert lines[4].startswith("single,0.00312345678901,")
    back = io.read_map(path)
    assert back.coeffs == pytest.approx(m.coeffs, rel=1e-11)
    assert (back.mean, back.scale) == (m.mean, m.scale)


def test_dual_map_round_trip(tmp_path):
    r = PolyMap3((1.0, 2.0, 3.0, 4.0), 0.5, 0.25, "impedance")
    f = PolyMap3((-1.0, -2.0, -3.0, -4.0), 0.5, 0.25, "impedance")
    path = tmp_path / "map.csv"
    io.write_map(DualPolyMap3(r, f), path)
    back = io.read_map(path, slope_window=7)
    assert isinstance(back, DualPolyMap3) and back.slope_window == 7
    assert back.rising.coeffs == r.coeffs and back.falling.coeffs == f.coeffs


@pytest.mark.parametrize("text", ["kind,voltage\nmean,1\n", "kind,voltage\nmean,1\nscale,1\nbranch,c0,c1,c2,c3\nup,1,2,3,4\n",
                                  "kind,voltage\nmean,1\nscale,1\nbranch,c0,c1,c2,c3\nsingle,1,2\n"])
def test_malformed_maps(text):
    with pytest.raises(ModelError):
        io.map_from_text(text)


def test_mux_csv():
    rows = [ChannelEstimate(2, 0.002995, 0.0031, 1.2, True)]
    assert io.mux_to_csv(rows).splitlines() == ["t_s,channel,displacement_m,stale", "0.002995,2,0.0031,1"]


def test_atomic_write_replaces_and_cleans_up(tmp_path):
    path = tmp_path / "sub" / "report.csv"
    io.atomic_write(path, "a\n")
    io.atomic_write(path, "b\n")
    assert path.read_text() == "b\n"
    assert os.listdir(path.parent) == ["report.csv"]


def test_failed_atomic_write_keeps_the_old_file(tmp_path, monkeypatch):
    path = tmp_path / "report.csv"
    io.atomic_write(path, "old\n")

    def boom(*args):
        raise OSError("disk full")

    monkeypatch.setattr(io.os, "replace", boom)
    with pytest.raises(OSError):
        io.atomic_write(path, "new\n")
    assert path.read_text() == "old\n"
    assert os.listdir(tmp_path) == ["report.csv"]
