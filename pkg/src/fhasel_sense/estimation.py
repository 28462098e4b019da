"""Sensing features: windowed RMS, the voltage feature and the impedance feature."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .actuator import ModelError
from .circuit import SignalTrace

KINDS = ("rms", "voltage", "impedance")


@dataclass(frozen=True)
class RmsConfig:
    window: int = 200
    fs: float = 100e3
    f_sense: float | None = 2000.0
    smoothing: int = 1

    def __post_init__(self):
        if self.window < 2:
            raise ModelError("RMS window must hold at least two samples")
        if not self.fs > 0:
            raise ModelError("fs must be positive")
        if self.smoothing < 1:
            raise ModelError("smoothing length must be >= 1")
        if self.f_sense is not None:
            periods = self.window * self.f_sense / self.fs
            if abs(periods - round(periods)) > 1e-9 or round(periods) < 1:
                raise ModelError(f"window of {self.window} samples spans {periods:g} sensing periods, not a whole number")

    @property
    def rate(self) -> float:
        return self.fs / self.window


@dataclass(frozen=True)
class FeatureStream:
    """Feature samples at the RMS window rate; ``t0`` is the first window centre."""

    values: np.ndarray
    rate: float
    kind: str
    t0: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ModelError("feature values must be one-dimensional")
        if not self.rate > 0:
            raise ModelError("feature rate must be positive")
        if not np.all(np.isfinite(v)):
            raise ModelError("feature values must be finite")
        if self.kind not in KINDS:
            raise ModelError(f"unknown feature kind {self.kind!r}")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    @property
    def t(self) -> np.ndarray:
        return self.t0 + np.arange(self.values.size) / self.rate


def window_means(x, window: int) -> np.ndarray:
    """Mean over consecutive non-overlapping windows, trailing partial dropped."""
    x = np.asarray(x, dtype=float)
    n = x.size // window
    return x[: n * window].reshape(n, window).mean(axis=1)


def windowed_rms(trace: SignalTrace, cfg: RmsConfig) -> FeatureStream:
    if trace.fs != cfg.fs:
        raise ModelError(f"trace rate {trace.fs} Hz does not match RMS config {cfg.fs} Hz")
    if len(trace) < cfg.window:
        raise ModelError(f"trace of {len(trace)} samples is shorter than one {cfg.window}-sample window")
    values = np.sqrt(window_means(trace.samples ** 2, cfg.window))
    t0 = trace.t0 + (cfg.window - 1) / 2.0 / cfg.fs
    return FeatureStream(values, cfg.rate, "rms", t0)


def moving_average(stream: FeatureStream, n: int) -> FeatureStream:
    """Causal moving average; the first ``n - 1`` outputs average what is available."""
    if n <= 1:
        return stream
    c = np.cumsum(np.insert(stream.values, 0, 0.0))
    idx = np.arange(1, stream.values.size + 1)
    lo = np.maximum(idx - n, 0)
    out = (c[idx] - c[lo]) / (idx - lo)
    return FeatureStream(out, stream.rate, stream.kind, stream.t0)


def impedance_magnitude(v_h_rms, v_c_rms, r_c: float, eps: float = 1e-6):
    """|Z| of the sensing electrodes from RMS voltages across them and across R_C."""
    if not r_c > 0:
        raise ModelError("r_c must be positive")
    vc = np.asarray(v_c_rms, dtype=float)
    if np.any(vc <= eps):
        raise ModelError(f"v_c RMS at or below the {eps:g} V noise floor")
    z = np.asarray(v_h_rms, dtype=float) * r_c / vc
    return float(z) if np.ndim(z) == 0 else z


def capacitance_from_impedance(z_mag, r_e: float, f: float):
    """Electrode capacitance from |Z| given a known series resistance and sensing frequency."""
    z = np.asarray(z_mag, dtype=float)
    if not f > 0 or r_e < 0:
        raise ModelError("need f > 0 and r_e >= 0")
    if np.any(z <= r_e):
        raise ModelError("|Z| not above the electrode resistance; noise or wrong r_e")
    c = 1.0 / (2.0 * math.pi * f * np.sqrt(z * z - r_e * r_e))
    return float(c) if np.ndim(c) == 0 else c


def impedance_of_capacitance(c_e, r_e: float, f: float):
    """Forward |Z| of a series R_E + C_E branch."""
    c = np.asarray(c_e, dtype=float)
    z = np.sqrt(r_e ** 2 + (1.0 / (2.0 * math.pi * f * c)) ** 2)
    return float(z) if np.ndim(z) == 0 else z


def voltage_feature(v_h_rms: FeatureStream) -> FeatureStream:
    return FeatureStream(v_h_rms.values, v_h_rms.rate, "voltage", v_h_rms.t0)


def impedance_feature(v_h_rms: FeatureStream, v_c_rms: FeatureStream, r_c: float) -> FeatureStream:
    if len(v_h_rms) != len(v_c_rms) or v_h_rms.rate != v_c_rms.rate:
        raise ModelError("v_h and v_c RMS streams are not aligned")
    z = impedance_magnitude(v_h_rms.values, v_c_rms.values, r_c)
    return FeatureStream(np.atleast_1d(z), v_h_rms.rate, "impedance", v_h_rms.t0)


def extract_feature(frame, method: str, cfg: RmsConfig, r_c: float) -> FeatureStream:
    """Feature stream for one sensing frame under the voltage- or impedance-method."""
    v_h = windowed_rms(frame.v_h, cfg)
    if method == "voltage":
        out = voltage_feature(v_h)
    elif method == "impedance":
        out = impedance_feature(v_h, windowed_rms(frame.v_c, cfg), r_c)
    else:
        raise ModelError(f"unknown method {method!r}")
    return moving_average(out, cfg.smoothing)


class StreamingRms:
    """Sample-by-sample windowed RMS; yields one value per completed window."""

    def __init__(self, window: int):
        if window < 2:
            raise ModelError("RMS window must hold at least two samples")
        self.window = window
        self._acc = 0.0
        self._count = 0

    def push(self, samples) -> list[float]:
        out = []
        for x in np.asarray(samples, dtype=float).ravel():
            self._acc += x * x
            self._count += 1
            if self._count == self.window:
                out.append(math.sqrt(self._acc / self.window))
                self._acc = 0.0
                self._count = 0
        return out
