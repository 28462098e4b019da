"""Transient simulation of the low-voltage sensing loop.

Signal path (single actuator)::

    v_in -- R_N --(a)-- [R_E + C_E] --(b)-- R_C -- gnd

``v_h`` is read differentially across the sensing electrodes (a, b) by an
instrumentation amplifier, ``v_c`` across R_C. HV supply ripple reaches the LV
loop through the parasitic HV->LV capacitance and, because R_N == R_C, lands on
both electrode nodes as a common-mode voltage. The legacy measurement ``v_k``
is the ripple current through a sense resistor placed directly in the HV path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .actuator import ActuatorParams, ModelError


@dataclass(frozen=True)
class NoiseParams:
    """HV ripple model; amplitudes are per kV of driving voltage."""

    f_ripple: float = 30e3
    tone_v_per_kv: float = 1.10
    broadband_v_per_kv: float = 0.22
    c_hv: float = 100e-12
    diff_floor_v: float = 0.010

    def __post_init__(self):
        if self.f_ripple <= 0 or self.c_hv <= 0:
            raise ModelError("f_ripple and c_hv must be positive")
        if min(self.tone_v_per_kv, self.broadband_v_per_kv, self.diff_floor_v) < 0:
            raise ModelError("noise amplitudes must be >= 0")


@dataclass(frozen=True)
class CircuitParams:
    r_n: float = 1e6
    r_c: float = 1e6
    r_k: float = 10e3
    f_sense: float = 2000.0
    a_sense: float = 5.0
    fs: float = 100e3
    cmrr_db: float = 32.0
    ripple: NoiseParams = field(default_factory=NoiseParams)
    # trapezoidal sub-steps per output sample
    substeps: int = 8

    def __post_init__(self):
        if min(self.r_n, self.r_c, self.r_k) <= 0:
            raise ModelError("resistances must be positive")
        if self.r_n != self.r_c:
            raise ModelError("r_n must equal r_c for common-mode rejection")
        if self.f_sense <= 0 or self.fs < 20 * self.f_sense:
            raise ModelError("need f_sense > 0 and fs >= 20 * f_sense")
        if self.a_sense < 0 or self.substeps < 1:
            raise ModelError("a_sense must be >= 0 and substeps >= 1")

    def with_(self, **changes) -> "CircuitParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class SignalTrace:
    samples: np.ndarray
    fs: float
    t0: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1:
            raise ModelError("SignalTrace samples must be one-dimensional")
        if not self.fs > 0:
            raise ModelError("SignalTrace fs must be positive")
        if not np.all(np.isfinite(s)):
            raise ModelError("SignalTrace samples must be finite")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def t(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.fs

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples ** 2)))

    def slice(self, start: int, stop: int | None = None) -> "SignalTrace":
        return SignalTrace(self.samples[start:stop], self.fs, self.t0 + start / self.fs)


@dataclass(frozen=True)
class SensingFrame:
    v_h: SignalTrace
    v_c: SignalTrace
    v_k: SignalTrace

    def __post_init__(self):
        if not (len(self.v_h) == len(self.v_c) == len(self.v_k)):
            raise ModelError("SensingFrame traces must have equal lengths")
        if not (self.v_h.fs == self.v_c.fs == self.v_k.fs):
            raise ModelError("SensingFrame traces must share a sample rate")


def cutoff_frequency(r_series: float, r_e: float, c_e: float) -> float:
    """-3 dB frequency of the first-order RC low-pass formed by the sensing loop."""
    if not (r_series > 0 and r_e > 0 and c_e > 0):
        raise ModelError("cutoff_frequency needs positive inputs")
    return 1.0 / (2.0 * math.pi * (r_series + r_e) * c_e)


def steady_state_gains(f: float, params: CircuitParams, r_e: float, c_e: float):
    """Phasor gains of v_h and v_c relative to v_in for constant capacitance.

    Returns ``(gain_vh, gain_vc, phase_vh, phase_vc)`` with phases in radians.
    """
    if not f > 0:
        raise ModelError("frequency must be positive")
    z_e = r_e + 1.0 / (2j * math.pi * f * c_e)
    z_tot = params.r_n + params.r_c + z_e
    h = z_e / z_tot
    c = params.r_c / z_tot
    return abs(h), abs(c), float(np.angle(h)), float(np.angle(c))


def instrumentation_amp(v_plus: SignalTrace, v_minus: SignalTrace, cmrr_db: float) -> SignalTrace:
    """Differential amplifier with finite common-mode rejection (unity gain)."""
    if len(v_plus) != len(v_minus) or v_plus.fs != v_minus.fs:
        raise ModelError("instrumentation_amp inputs differ in length or rate")
    leak = 10.0 ** (-cmrr_db / 20.0)
    a, b = v_plus.samples, v_minus.samples
    out = a - b
    if leak:
        out = out + leak * (a + b) / 2.0
    return SignalTrace(out, v_plus.fs, v_plus.t0)


def sensing_sine(params: CircuitParams, n: int, t0: float = 0.0) -> SignalTrace:
    t = t0 + np.arange(n) / params.fs
    return SignalTrace(params.a_sense * np.sin(2.0 * math.pi * params.f_sense * t), params.fs, t0)


def _lagrange_weights(m: int) -> np.ndarray:
    s = np.arange(m + 1) / m
    return np.stack([
        -s * (s - 1) * (s - 2) / 6.0,
        (s + 1) * (s - 1) * (s - 2) / 2.0,
        -(s + 1) * s * (s - 2) / 2.0,
        (s + 1) * s * (s - 1) / 6.0,
    ], axis=1)


@njit(cache=True)
def _loop_charge(v, c, r_loop, dt, w):
    # Trapezoidal rule on dQ/dt = (v - Q/c)/R over sub-steps; v between samples
    # by 4-point cubic interpolation, c linear.
    n = v.shape[0]
    m = w.shape[0] - 1
    h = dt / m
    k = h / (2.0 * r_loop)
    q_out = np.empty(n)
    q = 0.0
    q_out[0] = 0.0
    for i in range(n - 1):
        vm = v[i - 1] if i > 0 else 2.0 * v[i] - v[i + 1]
        vp = v[i + 2] if i + 2 < n else 2.0 * v[i + 1] - v[i]
        v_prev = v[i]
        c_prev = c[i]
        for j in range(1, m + 1):
            v_next = w[j, 0] * vm + w[j, 1] * v[i] + w[j, 2] * v[i + 1] + w[j, 3] * vp
            s = j / m
            c_next = c[i] + s * (c[i + 1] - c[i])
            q = (q * (1.0 - k / c_prev) + k * (v_prev + v_next)) / (1.0 + k / c_next)
            v_prev = v_next
            c_prev = c_next
        q_out[i + 1] = q
    return q_out


def ripple_noise(v_drive: np.ndarray, params: CircuitParams, rng: np.random.Generator):
    """Sampled HV ripple slope (V/s) and a differential amplifier floor (V).

    The ripple scales with ``|v_drive|`` so the result does not depend on the
    drive polarity.
    """
    rp = params.ripple
    n = v_drive.size
    t = np.arange(n) / params.fs
    phase = rng.uniform(0.0, 2.0 * math.pi)
    broadband = rng.standard_normal(n)
    floor = rng.standard_normal(n)
    scale = np.abs(v_drive)
    ripple = scale * (rp.tone_v_per_kv * np.sin(2.0 * math.pi * rp.f_ripple * t + phase)
                      + rp.broadband_v_per_kv * broadband)
    slope = np.diff(ripple, prepend=ripple[:1]) * params.fs
    return slope, rp.diff_floor_v * floor


def simulate_sensing_path(
    c_e_of_t,
    v_in: SignalTrace,
    params: CircuitParams,
    noise_on: bool,
    actuator: ActuatorParams,
    v_drive=None,
    rng: np.random.Generator | int | None = None,
) -> SensingFrame:
    """Simulate v_h, v_c and v_k for a capacitance stream sampled with ``v_in``.

    ``v_drive`` (kV per sample, or a scalar) only matters when ``noise_on``.
    """
    c = np.ascontiguousarray(c_e_of_t, dtype=float)
    if c.shape != v_in.samples.shape:
        raise ModelError("capacitance stream and v_in differ in length")
    if v_in.fs != params.fs:
        raise ModelError(f"v_in rate {v_in.fs} Hz does not match circuit fs {params.fs} Hz")
    if c.size < 2:
        raise ModelError("need at least two samples")
    if np.any(c < 1e-12) or np.any(c > 1e-6) or not np.all(np.isfinite(c)):
        raise ModelError("capacitance outside [1 pF, 1 uF]")

    v = v_in.samples
    r_loop = params.r_n + actuator.r_e + params.r_c
    q = _loop_charge(v, c, r_loop, 1.0 / params.fs, _lagrange_weights(params.substeps))
    i_loop = (v - q / c) / r_loop
    v_h = i_loop * actuator.r_e + q / c
    v_c = i_loop * params.r_c
    v_k = np.zeros_like(v)

    if noise_on:
        if rng is None or isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        drive = np.broadcast_to(np.asarray(0.0 if v_drive is None else v_drive, dtype=float), v.shape)
        slope, floor = ripple_noise(drive, params, rng)
        # equal R_N and R_C split the coupled current evenly: both electrode
        # nodes move by i * R_C / 2
        v_cm = SignalTrace(actuator.c_couple * slope * params.r_c / 2.0, params.fs, v_in.t0)
        leak = instrumentation_amp(v_cm, v_cm, params.cmrr_db).samples
        v_h = v_h + leak + floor
        v_c = v_c + v_cm.samples
        v_k = params.r_k * params.ripple.c_hv * slope

    fs, t0 = params.fs, v_in.t0
    return SensingFrame(SignalTrace(v_h, fs, t0), SignalTrace(v_c, fs, t0), SignalTrace(v_k, fs, t0))


def loop_charge(frame: SensingFrame, c_e_of_t, params: CircuitParams, actuator: ActuatorParams) -> np.ndarray:
    """Capacitor charge recovered from a noise-free frame."""
    i_loop = frame.v_c.samples / params.r_c
    return np.asarray(c_e_of_t, dtype=float) * (frame.v_h.samples - i_loop * actuator.r_e)


def calibrate_noise(
    params: CircuitParams,
    actuator: ActuatorParams,
    v_drive: float = 4.8,
    target_vk: float = 0.6186,
    target_vc: float = 1.382,
    n: int = 10000,
    seed: int = 0,
) -> tuple[CircuitParams, ActuatorParams]:
    """Fit the ripple amplitude and HV->LV coupling to measured noise RMS values.

    Both v_k and v_c are linear in the ripple amplitude, and v_c is also linear
    in the coupling capacitance, so the fit is a closed-form rescale of a probe
    run with the same seed.
    """
    probe = params.with_(ripple=replace(params.ripple, tone_v_per_kv=1.0,
                                        broadband_v_per_kv=params.ripple.broadband_v_per_kv
                                        / max(params.ripple.tone_v_per_kv, 1e-300)))
    if params.ripple.tone_v_per_kv == 0:
        raise ModelError("noise calibration needs a nonzero ripple tone")
    slope, _ = ripple_noise(np.full(n, float(v_drive)), probe, np.random.default_rng(seed))
    slope_rms = float(np.sqrt(np.mean(slope ** 2)))
    gain = target_vk / (params.r_k * params.ripple.c_hv * slope_rms)
    ripple = replace(params.ripple, tone_v_per_kv=gain,
                     broadband_v_per_kv=gain * probe.ripple.broadband_v_per_kv)
    c_couple = target_vc / (gain * slope_rms * params.r_c / 2.0)
    return params.with_(ripple=ripple), actuator.with_(c_couple=c_couple)
