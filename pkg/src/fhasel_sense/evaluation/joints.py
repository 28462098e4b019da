"""Multiplexed multi-actuator runs: the mux demo and the four-joint tracking session."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..actuator import ModelError, simulate_actuator
from ..calibration import fit_poly3
from ..circuit import sensing_sine, simulate_sensing_path
from ..estimation import FeatureStream, extract_feature, window_means
from ..mux import ChannelEstimate, MuxPlan, measured_rates, schedule, step_mux
from .metrics import nrmse
from .report import EvalReport
from .scenario import Setup, noise_seeds, report_metadata, stage

JOINTS = ("knee_left", "knee_right", "hip_left", "hip_right")
FULL_FLEXION_DEG = (135.0, 135.0, 120.0, 120.0)
MAX_ANGLE_DEG = 135.0


@dataclass(frozen=True)
class JointSession:
    """Joint angle trajectories (deg, one row per joint) and the string/load transmission."""

    angles: np.ndarray
    fs: float
    joints: tuple[str, ...] = JOINTS
    full_flexion_deg: tuple[float, ...] = FULL_FLEXION_DEG
    moment_arm_m: float = 0.03
    series_stiffness: float = 20.0
    pretension_n: float = 0.135

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.angles, dtype=float))
        if a.shape[0] != len(self.joints) or len(self.full_flexion_deg) != len(self.joints):
            raise ModelError("one trajectory and one full-flexion angle per joint required")
        if np.any(a < -1e-9) or np.any(a > MAX_ANGLE_DEG + 1e-9):
            raise ModelError(f"joint angles must lie in [0, {MAX_ANGLE_DEG:g}] deg")
        if self.moment_arm_m <= 0 or self.series_stiffness < 0:
            raise ModelError("moment arm must be positive and series stiffness non-negative")
        object.__setattr__(self, "angles", a)

    @property
    def duration(self) -> float:
        return self.angles.shape[1] / self.fs

    def path_length(self, angle_deg):
        """String path-length change over the joint (m)."""
        return self.moment_arm_m * np.radians(angle_deg)

    def tensile_force(self, angle_deg):
        return self.pretension_n + self.series_stiffness * self.path_length(angle_deg)


def flexion_trajectory(fs: float, duration: float, full_flexion=FULL_FLEXION_DEG, warmup: float = 1.0,
                       periods=(3.0, 3.5, 4.0, 4.5)) -> np.ndarray:
    """Repeated full flexions (raised cosine), one period per joint, after a rest of ``warmup`` s."""
    t = np.arange(int(round(duration * fs))) / fs
    rows = []
    for full, period in zip(full_flexion, periods):
        tt = np.clip(t - warmup, 0.0, None)
        rows.append(full * (1.0 - np.cos(2.0 * math.pi * tt / period)) / 2.0)
    return np.array(rows)


def random_trajectory(fs: float, duration: float, rng: np.random.Generator, full_flexion=FULL_FLEXION_DEG,
                      warmup: float = 1.0, n_tones: int = 3) -> np.ndarray:
    """Smooth seeded trajectories inside [0, 0.9 * full flexion], at rest during ``warmup``."""
    t = np.arange(int(round(duration * fs))) / fs
    tt = np.clip(t - warmup, 0.0, None)
    rows = []
    for full in full_flexion:
        freqs = rng.uniform(0.1, 0.6, n_tones)
        phases = rng.uniform(0.0, 2.0 * math.pi, n_tones)
        x = sum(np.cos(2.0 * math.pi * f * tt + p) - math.cos(p) for f, p in zip(freqs, phases))
        x = x / (2.0 * n_tones)  # within [-1, 1]
        rows.append(0.9 * full * x * x)
    return np.array(rows)


@dataclass
class MuxRun:
    reports: list[EvalReport]
    estimates: list[ChannelEstimate]
    rates: list[float]
    truth_at_estimates: list[float] = field(default_factory=list)


def _observe(setup: Setup, v_d, f_ext, method: str, noise: bool, rng) -> FeatureStream:
    circ = setup.circuit
    with stage("actuator"):
        traj = simulate_actuator(v_d, f_ext, circ.fs, setup.actuator)
    with stage("circuit"):
        frame = simulate_sensing_path(traj.c_e, sensing_sine(circ, v_d.size), circ, noise, setup.actuator,
                                      v_drive=v_d, rng=rng)
    with stage("estimation"):
        return extract_feature(frame, method, setup.rms, circ.r_c), traj.q


def run_multiplexed(setup: Setup, plan: MuxPlan, names: Sequence[str],
                    cal_inputs: Sequence[tuple], eval_inputs: Sequence[tuple],
                    clamp: Sequence[float | None]) -> MuxRun:
    """Calibrate then evaluate N channels through one multiplexed front-end.

    Each input is ``(v_d, f_ext, target)``; ``target`` is the per-sample
    quantity the map should output, or None for the actuator displacement.
    """
    s = setup.scenario
    if len(cal_inputs) != plan.n_channels or len(eval_inputs) != plan.n_channels:
        raise ModelError(f"mux plan has {plan.n_channels} channels but {len(cal_inputs)} inputs were given")
    w = setup.rms.window
    feats = {"cal": [], "eval": []}
    targets = {"cal": [], "eval": []}
    for ch in range(plan.n_channels):
        rng_cal, rng_eval = noise_seeds(s.seed, ch)
        for key, (v_d, f_ext, target), rng in (("cal", cal_inputs[ch], rng_cal), ("eval", eval_inputs[ch], rng_eval)):
            feat, q = _observe(setup, np.asarray(v_d, dtype=float), f_ext, s.method, s.noise, rng)
            feats[key].append(feat)
            targets[key].append(window_means(q if target is None else target, w))

    t_w = feats["cal"][0].t
    maps = []
    for ch in range(plan.n_channels):
        idx = [k for k in range(len(t_w)) if t_w[k] >= s.warmup_s
               and (slot := schedule(plan, k)).channel == ch and not slot.discard]
        sub = FeatureStream(feats["cal"][ch].values[idx], 1.0, feats["cal"][ch].kind)
        with stage("calibration"):
            maps.append(fit_poly3(sub, targets["cal"][ch][idx]))

    with stage("mux"):
        ests = step_mux(plan, feats["eval"], maps, list(clamp))
    t_eval = feats["eval"][0].t
    rate = feats["eval"][0].rate
    truth_at = []
    reports = []
    duration = len(t_eval) / rate
    rates = measured_rates(ests, plan.n_channels, duration)
    for ch in range(plan.n_channels):
        mine = [e for e in ests if e.channel == ch and e.t >= s.warmup_s]
        k = np.rint((np.array([e.t for e in mine]) - t_eval[0]) * rate).astype(int)
        truth = targets["eval"][ch][k]
        est = np.array([e.displacement for e in mine])
        with stage("metrics"):
            # a constant truth (e.g. a joint at rest) has no range to normalise by
            err = nrmse(est, truth) if np.ptp(truth) > 0 else None
            rmse = float(np.sqrt(np.mean((est - truth) ** 2)))
        reports.append(EvalReport(f"{s.name}:{names[ch]}", s.method, "single", None, err, None, s.seed,
                                  metadata={"update_rate_hz": rates[ch], "rmse": rmse}))
        truth_at.extend(truth.tolist())
    return MuxRun(reports, ests, rates, truth_at)


def _worst(reports) -> float | None:
    vals = [r.nrmse for r in reports if r.nrmse is not None]
    return max(vals) if vals else None


def run_joint_session(setup: Setup, cal: JointSession, ev: JointSession, plan: MuxPlan | None = None) -> MuxRun:
    """Calibrate per-joint angle maps on ``cal`` and track ``ev`` through the multiplexer."""
    setup = setup.resolved()
    s = setup.scenario
    plan = plan or setup.mux
    if plan.n_channels != len(cal.joints) or cal.joints != ev.joints:
        raise ModelError("mux plan, calibration and evaluation sessions must cover the same joints")
    for name, full, row in zip(cal.joints, cal.full_flexion_deg, cal.angles):
        if row.max() < full - 1.0:
            raise ModelError(f"calibration pass never reaches full flexion ({full:g} deg) for joint {name}")
    for sess in (cal, ev):
        if sess.fs != setup.circuit.fs:
            raise ModelError("joint session sample rate differs from the circuit rate")

    def inputs(sess: JointSession):
        v = np.full(sess.angles.shape[1], s.polarity * s.hold_kv)
        return [(v, sess.tensile_force(row), row) for row in sess.angles]

    run = run_multiplexed(setup, plan, cal.joints, inputs(cal), inputs(ev), list(cal.full_flexion_deg))
    meta = report_metadata(setup, {
        "moment_arm_m": cal.moment_arm_m,
        "series_stiffness": cal.series_stiffness,
        "pretension_n": cal.pretension_n,
        "mux": {"n_channels": plan.n_channels, "slot_windows": plan.slot_windows,
                "settle_windows": plan.settle_windows},
        "joint_transmission": "path length = moment arm x angle; force = pretension + series stiffness x path length",
    })
    summary = EvalReport(s.name, s.method, "single", None, _worst(run.reports), None, s.seed, channels=run.reports, metadata=meta)
    run.reports = [summary]
    return run


def default_sessions(setup: Setup) -> tuple[JointSession, JointSession]:
    s = setup.scenario
    fs = setup.circuit.fs
    kw = dict(fs=fs, moment_arm_m=s.moment_arm_m, series_stiffness=s.series_stiffness, pretension_n=s.pretension_n)
    cal = JointSession(flexion_trajectory(fs, s.duration_s, warmup=s.warmup_s), **kw)
    rng = np.random.default_rng(np.random.SeedSequence([int(s.seed), 7]))
    ev = JointSession(random_trajectory(fs, s.duration_s, rng, warmup=s.warmup_s), **kw)
    return cal, ev


def run_mux_demo(setup: Setup) -> MuxRun:
    """N actuators on sines of different frequency, tracked through one front-end."""
    setup = setup.resolved()
    s = setup.scenario
    plan = setup.mux
    n = int(round(s.duration_s * setup.circuit.fs))
    t = np.arange(n) / setup.circuit.fs
    chans = []
    for ch in range(plan.n_channels):
        f = s.frequency_hz * (1.0 + 0.25 * ch)
        v = s.polarity * (s.offset_kv + s.amplitude_kv * np.sin(2.0 * math.pi * f * t + ch))
        chans.append((v, s.load_n, None))
    names = [f"ch{ch}" for ch in range(plan.n_channels)]
    run = run_multiplexed(setup, plan, names, chans, chans, [setup.actuator.q_max] * plan.n_channels)
    meta = report_metadata(setup, {"mux": {"n_channels": plan.n_channels, "slot_windows": plan.slot_windows,
                                          "settle_windows": plan.settle_windows}})
    run.reports = [EvalReport(s.name, s.method, "single", None, _worst(run.reports), None, s.seed, channels=run.reports, metadata=meta)]
    return run
