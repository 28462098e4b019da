from __future__ import annotations

import math

import numpy as np

from ..actuator import ModelError


def nrmse(estimate, truth) -> float:
    """Root-mean-square error normalised by the range of the truth."""
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape or est.size < 2:
        raise ModelError("nrmse needs two equal-length streams of at least two samples")
    span = float(np.max(tru) - np.min(tru))
    if span <= 0:
        raise ModelError("nrmse undefined for a constant truth")
    return float(np.sqrt(np.mean((est - tru) ** 2)) / span)


def tone_phasor(x, f: float, rate: float) -> complex:
    """Hann-windowed single-bin projection of ``x`` onto ``exp(j 2 pi f t)``.

    Returns the complex amplitude, so ``A cos(2 pi f t + p)`` maps to ``A e^{jp}``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    k = np.arange(n)
    w = 0.5 - 0.5 * np.cos(2.0 * math.pi * k / n)
    basis = np.exp(-2j * math.pi * f * k / rate)
    return complex(2.0 * np.sum(w * (x - x.mean()) * basis) / np.sum(w))


def phase_lag(estimate, truth, f_act: float, rate: float, floor: float = 1e-3) -> float:
    """Phase of truth minus phase of estimate at ``f_act``, degrees in (-180, 180].

    Positive when the estimate lags the truth.
    """
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ModelError("phase_lag needs equal-length streams")
    if not f_act > 0 or est.size * f_act / rate < 5:
        raise ModelError("phase_lag needs at least five periods of the actuation frequency")
    pe = tone_phasor(est, f_act, rate)
    pt = tone_phasor(tru, f_act, rate)
    for name, p, x in (("estimate", pe, est), ("truth", pt, tru)):
        if not abs(p) > floor * np.std(x) * math.sqrt(2.0) or np.std(x) == 0:
            raise ModelError(f"{f_act:g} Hz component of the {name} is below the noise floor")
    lag = math.degrees(np.angle(pt) - np.angle(pe))
    lag = (lag + 180.0) % 360.0 - 180.0
    return 180.0 if lag == -180.0 else lag
