import pytest

from fhasel_sense.cli import main

from .conftest import CONFIGS

FAST = """
[scenario]
name = fast
frequency_hz = 5
duration_s = 3
"""


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.ini"
    path.write_text(FAST)
    return path


def test_simulate_writes_all_outputs(fast_config, tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", str(fast_config), "--out", str(out), "--seed", "4"]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["displacement.csv", "drive.csv", "estimate.csv", "features.csv", "metadata.json",
                     "report.csv", "v_c.csv", "v_h.csv", "v_k.csv"]
    assert (out / "v_h.csv").read_text().startswith("t_s,value_v\n")
    assert (out / "features.csv").read_text().splitlines()[1].endswith(",voltage")
    assert (out / "report.csv").read_text().splitlines()[1].endswith(",4")
    assert "fast,voltage,single,5," in capsys.readouterr().out


def test_outputs_are_byte_identical_across_runs(fast_config, tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", str(fast_config), "--out", str(tmp_path / d)]) == 0
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes(), p.name


def test_calibrate_then_run_with_the_map(fast_config, tmp_path, capsys):
    map_path = tmp_path / "map.csv"
    assert main(["calibrate", str(fast_config), "--out", str(map_path), "--mapping", "dual"]) == 0
    assert map_path.read_text().splitlines()[3] == "branch,c0,c1,c2,c3"
    capsys.readouterr()
    assert main(["run", str(fast_config), "--map", str(map_path), "--seed", "9"]) == 0
    assert capsys.readouterr().out.splitlines()[1].startswith("fast,voltage,dual,5,")


def test_run_method_and_mapping_flags(fast_config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", str(fast_config), "--method", "impedance", "--mapping", "dual", "--out", str(out)]) == 0
    row = (out / "report.csv").read_text().splitlines()[1].split(",")
    assert row[:4] == ["fast", "impedance", "dual", "5"]
    assert (out / "estimate.csv").read_text().startswith("t_s,truth_m,estimate_m\n")


def test_sweep(tmp_path, capsys):
    cfg = tmp_path / "sweep.ini"
    cfg.write_text("[scenario]\nsweep_frequencies = 5, 10\nsweep_methods = voltage\n")
    assert main(["sweep", str(cfg), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0] == "scenario,method,mapping,freq_hz,nrmse,phase_deg,seed"


def test_noise_bench(tmp_path, capsys):
    assert main(["noise-bench", str(CONFIGS / "noise_bench.ini"), "--out", str(tmp_path)]) == 0
    rows = dict(line.split(",") for line in (tmp_path / "noise_bench.csv").read_text().splitlines()[1:])
    assert float(rows["rms_vk_v"]) == pytest.approx(0.6186)
    assert float(rows["reduction_factor_vk_over_vh"]) >= 10


def test_mux_demo(tmp_path):
    cfg = tmp_path / "mux.ini"
    cfg.write_text("[mux]\nn_channels = 2\n[scenario]\nname = m\nfrequency_hz = 5\nduration_s = 3\n")
    assert main(["mux-demo", str(cfg), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "mux_estimates.csv").read_text().splitlines()
    assert lines[0] == "t_s,channel,displacement_m,stale"
    assert {line.split(",")[1] for line in lines[1:]} == {"0", "1"}
    assert len((tmp_path / "report.csv").read_text().splitlines()) == 4


def test_joints(tmp_path):
    cfg = tmp_path / "joints.ini"
    cfg.write_text("[scenario]\nname = j\nactuation = constant\nduration_s = 6\n")
    assert main(["joints", str(cfg), "--out", str(tmp_path)]) == 0
    names = [line.split(",")[0] for line in (tmp_path / "report.csv").read_text().splitlines()[1:]]
    assert names == ["j", "j:knee_left", "j:knee_right", "j:hip_left", "j:hip_right"]


@pytest.mark.parametrize("text", ["[actuator]\nbogus = 1\n", "[scenario]\noffset_kv = 9\n"])
def test_validation_errors_exit_one(tmp_path, text, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(text)
    assert main(["run", str(cfg)]) == 1
    assert "error:" in capsys.readouterr().err


def test_bad_arguments_exit_one(fast_config, tmp_path):
    assert main(["run", str(fast_config), "--method", "optical"]) == 1
    assert main(["teleport", str(fast_config)]) == 1
    assert main(["run", str(tmp_path / "missing.ini")]) == 1


def test_model_errors_exit_two(tmp_path, capsys):
    cfg = tmp_path / "lag.ini"
    cfg.write_text("[actuator]\ntau_c = 1e-6\n")
    assert main(["run", str(cfg)]) == 2
    assert "[actuator]" in capsys.readouterr().err
