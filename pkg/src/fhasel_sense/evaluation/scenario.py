"""End-to-end scenario runner: drive -> actuator -> circuit -> features -> map -> metrics."""
from __future__ import annotations

import contextlib
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

import numpy as np

from ..actuator import G, ActuatorParams, ModelError, simulate_actuator
from ..calibration import DualPolyMap3, PolyMap3, apply_map, branch_jumps, fit_dual_poly3, fit_poly3
from ..circuit import CircuitParams, SensingFrame, calibrate_noise, sensing_sine, simulate_sensing_path
from ..estimation import FeatureStream, RmsConfig, extract_feature, window_means
from ..mux import MuxPlan
from .metrics import nrmse, phase_lag
from .report import EvalReport

ACTUATIONS = ("sine", "step", "constant", "load_step", "fig6")
PERIODIC = ("sine", "step")
SUPPLY_MAX_KV = 6.0


class PipelineError(ModelError):
    def __init__(self, stage: str, err: Exception):
        super().__init__(f"[{stage}] {err}")
        self.stage = stage


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except (ModelError, ValueError, FloatingPointError) as err:
        raise PipelineError(name, err) from err


@dataclass(frozen=True)
class Scenario:
    name: str = "sine"
    actuation: str = "sine"
    amplitude_kv: float = 1.0
    offset_kv: float = 3.5
    frequency_hz: float = 1.0
    method: str = "voltage"
    mapping: str = "single"
    duration_s: float = 12.0
    warmup_s: float = 1.0
    seed: int = 0
    noise: bool = True
    polarity: int = 1
    load_n: float = 0.0478 * G
    load_step_n: float = 0.0
    load_step_time_s: float = 6.0
    drive_on_time_s: float = 0.5
    sweep_frequencies: tuple[float, ...] = (0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 10.0)
    sweep_methods: tuple[str, ...] = ("voltage", "impedance")
    segment_frequencies: tuple[float, ...] = (0.5, 1.0, 2.0, 3.0, 5.0)
    segment_periods: int = 5
    segment_amplitude_kv: float = 1.0
    segment_offset_kv: float = 3.5
    eval_periods: int = 10
    # joint session
    moment_arm_m: float = 0.03
    series_stiffness: float = 20.0
    pretension_n: float = 0.135
    hold_kv: float = 4.0
    overrides: Mapping[str, float] = field(default_factory=dict)

    def validate(self) -> "Scenario":
        if self.actuation not in ACTUATIONS:
            raise ModelError(f"actuation must be one of {ACTUATIONS}, got {self.actuation!r}")
        if self.method not in ("voltage", "impedance"):
            raise ModelError(f"method must be voltage or impedance, got {self.method!r}")
        if self.mapping not in ("single", "dual"):
            raise ModelError(f"mapping must be single or dual, got {self.mapping!r}")
        if self.polarity not in (1, -1):
            raise ModelError("polarity must be +1 or -1")
        if self.amplitude_kv < 0 or self.amplitude_kv + abs(self.offset_kv) > SUPPLY_MAX_KV:
            raise ModelError(f"amplitude + offset exceeds the {SUPPLY_MAX_KV:g} kV supply range")
        if self.segment_amplitude_kv + abs(self.segment_offset_kv) > SUPPLY_MAX_KV:
            raise ModelError(f"segment amplitude + offset exceeds the {SUPPLY_MAX_KV:g} kV supply range")
        if abs(self.hold_kv) > SUPPLY_MAX_KV:
            raise ModelError(f"hold voltage exceeds the {SUPPLY_MAX_KV:g} kV supply range")
        if self.duration_s <= 0 or self.warmup_s < 0:
            raise ModelError("duration must be positive and warmup non-negative")
        if self.actuation in PERIODIC:
            if self.frequency_hz <= 0:
                raise ModelError("periodic actuation needs a positive frequency")
            if (self.duration_s - self.warmup_s) * self.frequency_hz < 10 - 1e-9:
                raise ModelError("periodic scenarios must cover at least 10 actuation periods after warmup")
        if self.actuation != "fig6" and self.warmup_s >= self.duration_s:
            raise ModelError("warmup leaves nothing to evaluate")
        return self

    @property
    def effective_duration(self) -> float:
        if self.actuation == "fig6":
            step = self.segment_periods / self.frequency_hz
            return self.warmup_s + step + sum(self.segment_periods / f for f in self.segment_frequencies)
        return self.duration_s


@dataclass(frozen=True)
class CalibrationSettings:
    slope_window: int = 5
    hold_last_on_tie: bool = True
    tie_rel: float = 1e-6


@dataclass(frozen=True)
class Setup:
    actuator: ActuatorParams = field(default_factory=ActuatorParams)
    circuit: CircuitParams = field(default_factory=CircuitParams)
    rms: RmsConfig = field(default_factory=RmsConfig)
    calibration: CalibrationSettings = field(default_factory=CalibrationSettings)
    mux: MuxPlan = field(default_factory=MuxPlan)
    scenario: Scenario = field(default_factory=Scenario)

    def with_scenario(self, **changes) -> "Setup":
        return replace(self, scenario=replace(self.scenario, **changes))

    def resolved(self) -> "Setup":
        """Apply the scenario's ``section.key`` parameter overrides."""
        out = self
        for key, value in self.scenario.overrides.items():
            section, _, name = key.partition(".")
            if section not in ("actuator", "circuit", "rms", "calibration") or not name:
                raise ModelError(f"bad override key {key!r}")
            target = getattr(out, section)
            if not hasattr(target, name):
                raise ModelError(f"unknown override {key!r}")
            out = replace(out, **{section: replace(target, **{name: value})})
        return out


def drive_waveform(s: Scenario, fs: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sampled time, driving voltage (kV, polarity applied) and tensile load (N)."""
    n = int(round(s.effective_duration * fs))
    t = np.arange(n) / fs
    if s.actuation == "sine":
        v = s.offset_kv + s.amplitude_kv * np.sin(2 * math.pi * s.frequency_hz * t)
    elif s.actuation == "step":
        v = s.offset_kv + s.amplitude_kv * np.where(np.sin(2 * math.pi * s.frequency_hz * t) >= 0, 1.0, -1.0)
    elif s.actuation in ("constant", "load_step"):
        v = np.where(t >= s.drive_on_time_s, s.offset_kv, 0.0)
    else:
        v = _fig6(s, t)
    f = np.full(n, float(s.load_n))
    if s.load_step_n:
        f = f + np.where(t >= s.load_step_time_s, s.load_step_n, 0.0)
    return t, s.polarity * v, f


def _fig6(s: Scenario, t: np.ndarray) -> np.ndarray:
    low = s.offset_kv - s.amplitude_kv
    v = np.full(t.size, low)
    start = s.warmup_s
    stop = start + s.segment_periods / s.frequency_hz
    seg = (t >= start) & (t < stop)
    ph = 2 * math.pi * s.frequency_hz * (t[seg] - start)
    v[seg] = s.offset_kv + s.amplitude_kv * np.where(np.sin(ph) >= 0, 1.0, -1.0)
    for f in s.segment_frequencies:
        start, stop = stop, stop + s.segment_periods / f
        seg = (t >= start) & (t < stop)
        v[seg] = s.segment_offset_kv - s.segment_amplitude_kv * np.cos(2 * math.pi * f * (t[seg] - start))
    return v


@dataclass
class ChannelRun:
    """One actuator observed by the sensing front-end on a calibration and an evaluation pass."""

    q: np.ndarray
    c_e: np.ndarray
    truth: np.ndarray
    feature_cal: FeatureStream
    feature_eval: FeatureStream
    frame_eval: SensingFrame | None = None


def noise_seeds(seed: int, channel: int = 0) -> tuple[np.random.Generator, np.random.Generator]:
    cal, ev = np.random.SeedSequence([int(seed), int(channel)]).spawn(2)
    return np.random.default_rng(cal), np.random.default_rng(ev)


def run_channel(setup: Setup, v_d, f_ext, method: str, noise: bool, seed: int, channel: int = 0,
                keep_frame: bool = False) -> ChannelRun:
    act, circ, rms = setup.actuator, setup.circuit, setup.rms
    if rms.fs != circ.fs:
        raise PipelineError("config", ModelError("estimation fs differs from circuit fs"))
    with stage("actuator"):
        traj = simulate_actuator(v_d, f_ext, circ.fs, act)
    v_in = sensing_sine(circ, len(traj.q))
    rng_cal, rng_eval = noise_seeds(seed, channel)
    feats = []
    frame = None
    for rng in (rng_cal, rng_eval):
        with stage("circuit"):
            frame = simulate_sensing_path(traj.c_e, v_in, circ, noise, act, v_drive=v_d, rng=rng)
        with stage("estimation"):
            feats.append(extract_feature(frame, method, rms, circ.r_c))
    truth = window_means(traj.q, rms.window)
    return ChannelRun(traj.q, traj.c_e, truth, feats[0], feats[1], frame if keep_frame else None)


def fit_map(features: FeatureStream, truth, mask, mapping: str, cal: CalibrationSettings) -> PolyMap3 | DualPolyMap3:
    sub = FeatureStream(features.values[mask], features.rate, features.kind)
    with stage("calibration"):
        if mapping == "dual":
            return fit_dual_poly3(sub, np.asarray(truth)[mask], cal.slope_window, cal.hold_last_on_tie, cal.tie_rel)
        return fit_poly3(sub, np.asarray(truth)[mask])


def report_metadata(setup: Setup, extra: Mapping | None = None) -> dict:
    s = setup.scenario
    meta = {
        "actuator": asdict(setup.actuator),
        "circuit": asdict(setup.circuit),
        "closure_note": "actuator stroke, capacitance range, mechanics and noise spectrum are model closure values, not measurements",
        "rms_window": setup.rms.window,
        "rms_windows": "non-overlapping, trailing partial window dropped",
        "feature_smoothing": setup.rms.smoothing,
        "slope_window": setup.calibration.slope_window,
        "tie_rule": f"hold previous phase when |slope| <= {setup.calibration.tie_rel:g} x calibration range",
        "nrmse_normalization": "ground-truth range",
        "phase_method": "Hann-windowed single-bin Fourier projection",
        "truth_alignment": "truth averaged over each RMS window",
        "split": "calibration and evaluation passes share actuation, differ in noise seed",
        "noise_calibration": "ripple amplitude fitted to reference RMS values; the v_h reduction factor follows from cmrr_db",
        "warmup_s": s.warmup_s,
        "seed": s.seed,
        "noise": s.noise,
    }
    if extra:
        meta.update(extra)
    return meta


@dataclass
class ScenarioResult:
    report: EvalReport
    t: np.ndarray
    truth: np.ndarray
    estimate: np.ndarray
    run: ChannelRun
    map: PolyMap3 | DualPolyMap3


def run_scenario(setup: Setup, keep_frame: bool = False, map_=None) -> ScenarioResult:
    """Calibrate on one noisy pass and evaluate on another; ``map_`` skips the fit."""
    setup = setup.resolved()
    s = setup.scenario
    with stage("scenario"):
        s.validate()
    t, v_d, f_ext = drive_waveform(s, setup.circuit.fs)
    run = run_channel(setup, v_d, f_ext, s.method, s.noise, s.seed, keep_frame=keep_frame)
    tw = run.feature_eval.t
    mask = tw >= s.warmup_s
    if map_ is None:
        map_ = fit_map(run.feature_cal, run.truth, mask, s.mapping, setup.calibration)
    elif map_.feature_kind != run.feature_eval.kind:
        raise PipelineError("calibration", ModelError(
            f"map was fitted on {map_.feature_kind!r} features but the run produces {run.feature_eval.kind!r}"))
    with stage("estimation"):
        est = apply_map(map_, run.feature_eval, setup.actuator.q_max)
    with stage("metrics"):
        err = nrmse(est[mask], run.truth[mask])
        lag = None
        freq = None
        if s.actuation in PERIODIC:
            freq = s.frequency_hz
            if s.actuation == "sine":
                lag = phase_lag(est[mask], run.truth[mask], freq, run.feature_eval.rate)
    extra = {}
    mapping = "single"
    if isinstance(map_, DualPolyMap3):
        mapping = "dual"
        jumps = branch_jumps(map_, run.feature_eval.values[mask])
        extra["max_branch_jump_frac"] = float(jumps.max()) / setup.actuator.q_max if jumps.size else 0.0
    report = EvalReport(s.name, s.method, mapping, freq, err, lag, s.seed, metadata=report_metadata(setup, extra))
    return ScenarioResult(report, tw, run.truth, est, run, map_)


def run_sweep(setup: Setup, mapping: str | None = None) -> list[EvalReport]:
    """NRMSE and phase lag over the scenario's sweep frequencies for each sweep method."""
    s = setup.scenario
    reports = []
    for f in s.sweep_frequencies:
        duration = s.warmup_s + max(s.eval_periods / f, 2.0)
        for method in s.sweep_methods:
            sub = setup.with_scenario(actuation="sine", frequency_hz=f, duration_s=duration, method=method,
                                      mapping=mapping or s.mapping)
            reports.append(run_scenario(sub).report)
    return reports


@dataclass
class NoiseBenchResult:
    rms_vk: float
    rms_vc: float
    rms_vh: float
    rms_vh_ideal_cmrr: float
    floor_v: float
    circuit: CircuitParams
    actuator: ActuatorParams

    @property
    def factor(self) -> float:
        return self.rms_vk / self.rms_vh

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("rms_vk_v", self.rms_vk),
            ("rms_vc_v", self.rms_vc),
            ("rms_vh_v", self.rms_vh),
            ("reduction_factor_vk_over_vh", self.factor),
            ("rms_vh_ideal_cmrr_v", self.rms_vh_ideal_cmrr),
            ("diff_floor_v", self.floor_v),
            ("ripple_tone_v_per_kv", self.circuit.ripple.tone_v_per_kv),
            ("c_couple_f", self.actuator.c_couple),
            ("cmrr_db", self.circuit.cmrr_db),
        ]


def noise_bench(setup: Setup, drive_kv: float = 4.8, duration_s: float = 0.05,
                target_vk: float = 0.6186, target_vc: float = 1.382) -> NoiseBenchResult:
    """Constant-drive noise comparison of v_k, v_c and v_h with no sensing signal."""
    setup = setup.resolved()
    seed = setup.scenario.seed
    n = int(round(duration_s * setup.circuit.fs))
    with stage("noise-calibration"):
        circ, act = calibrate_noise(setup.circuit, setup.actuator, drive_kv, target_vk, target_vc, n=n, seed=seed)
    v_d = np.full(n, setup.scenario.polarity * drive_kv)
    with stage("actuator"):
        traj = simulate_actuator(v_d, setup.scenario.load_n, circ.fs, act)
    v_in = sensing_sine(circ.with_(a_sense=0.0), n)
    with stage("circuit"):
        frame = simulate_sensing_path(traj.c_e, v_in, circ, True, act, v_drive=v_d, rng=np.random.default_rng(seed))
        ideal = simulate_sensing_path(traj.c_e, v_in, circ.with_(cmrr_db=math.inf), True, act, v_drive=v_d,
                                      rng=np.random.default_rng(seed))
    return NoiseBenchResult(frame.v_k.rms(), frame.v_c.rms(), frame.v_h.rms(), ideal.v_h.rms(),
                            circ.ripple.diff_floor_v, circ, act)
