"""Cubic feature-to-displacement maps, single and direction-switched (dual)."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .actuator import ModelError
from .estimation import FeatureStream


class Phase(enum.Enum):
    RISING = "rising"
    FALLING = "falling"


@dataclass(frozen=True)
class PolyMap3:
    """Cubic in ``z = (feature - mean) / scale``; coeffs are ascending powers."""

    coeffs: tuple[float, float, float, float]
    mean: float
    scale: float
    feature_kind: str = "voltage"
    residual_rms: float = float("nan")

    def __post_init__(self):
        if len(self.coeffs) != 4:
            raise ModelError("a cubic map needs exactly four coefficients")
        if not self.scale > 0:
            raise ModelError("map scale must be positive")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def __call__(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.scale
        c0, c1, c2, c3 = self.coeffs
        return c0 + z * (c1 + z * (c2 + z * c3))


@dataclass(frozen=True)
class DualPolyMap3:
    rising: PolyMap3
    falling: PolyMap3
    slope_window: int = 5
    hold_last_on_tie: bool = True
    tie_rel: float = 1e-6

    def __post_init__(self):
        if self.slope_window < 2:
            raise ModelError("slope_window must be >= 2")
        if self.rising.feature_kind != self.falling.feature_kind:
            raise ModelError("dual map branches disagree on feature kind")

    @property
    def feature_kind(self) -> str:
        return self.rising.feature_kind

    @property
    def tie_tol(self) -> float:
        # scale is the half-range of the calibration features
        return self.tie_rel * 2.0 * self.rising.scale

    def branch(self, phase: Phase) -> PolyMap3:
        return self.rising if phase is Phase.RISING else self.falling


def _values(x) -> np.ndarray:
    return np.asarray(x.values if isinstance(x, FeatureStream) else x, dtype=float)


def normalization(features) -> tuple[float, float]:
    """Mid-range centre and half-range, so calibration features span [-1, 1]."""
    x = _values(features)
    lo, hi = float(np.min(x)), float(np.max(x))
    return (lo + hi) / 2.0, (hi - lo) / 2.0


def fit_poly3(features, truth, mean: float | None = None, scale: float | None = None) -> PolyMap3:
    """Least-squares cubic from features to truth on a centred, scaled feature axis."""
    x = _values(features)
    y = np.asarray(truth, dtype=float)
    kind = features.kind if isinstance(features, FeatureStream) else "voltage"
    if x.shape != y.shape:
        raise ModelError(f"features ({x.size}) and truth ({y.size}) differ in length")
    if x.size < 4:
        raise ModelError("need at least four samples to fit a cubic")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ModelError("non-finite calibration data")
    if mean is None or scale is None:
        mean, scale = normalization(x)
    if not scale > 0:
        raise ModelError("constant features: cubic design matrix is rank-deficient")
    z = (x - mean) / scale
    design = np.vander(z, 4, increasing=True)
    coeffs, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < 4:
        raise ModelError(f"cubic design matrix is rank-deficient (rank {rank})")
    resid = y - design @ coeffs
    return PolyMap3(tuple(coeffs), mean, scale, kind, float(np.sqrt(np.mean(resid ** 2))))


def window_slope(history) -> float:
    h = np.asarray(history, dtype=float)
    k = np.arange(h.size) - (h.size - 1) / 2.0
    return float(k @ (h - h.mean()) / (k @ k))


def classify_phase(history, prev: Phase = Phase.RISING, tie_tol: float = 0.0) -> Phase:
    """Contraction/relaxation label from the least-squares slope of recent features."""
    if len(history) < 2:
        return prev
    slope = window_slope(history)
    if abs(slope) <= tie_tol:
        return prev
    return Phase.RISING if slope > 0 else Phase.FALLING


def classify_series(values, slope_window: int, tie_tol: float = 0.0, initial: Phase = Phase.RISING) -> list[Phase]:
    """Causal phase label for every sample, using up to ``slope_window`` past values."""
    x = _values(values)
    phases = []
    prev = initial
    for i in range(x.size):
        prev = classify_phase(x[max(0, i - slope_window + 1): i + 1], prev, tie_tol)
        phases.append(prev)
    return phases


def fit_dual_poly3(features, truth, slope_window: int = 5, hold_last_on_tie: bool = True, tie_rel: float = 1e-6) -> DualPolyMap3:
    """Fit separate cubics to the contracting and relaxing parts of the calibration data."""
    x = _values(features)
    y = np.asarray(truth, dtype=float)
    kind = features.kind if isinstance(features, FeatureStream) else "voltage"
    if x.shape != y.shape:
        raise ModelError(f"features ({x.size}) and truth ({y.size}) differ in length")
    mean, scale = normalization(x)
    if not scale > 0:
        raise ModelError("constant features: cubic design matrix is rank-deficient")
    tie_tol = tie_rel * 2.0 * scale if hold_last_on_tie else 0.0
    labels = np.array([p is Phase.RISING for p in classify_series(x, slope_window, tie_tol)])
    branches = {}
    for phase, mask in ((Phase.RISING, labels), (Phase.FALLING, ~labels)):
        if mask.sum() < 4:
            raise ModelError(f"calibration data has too few {phase.value} samples ({int(mask.sum())}) for a cubic")
        fs = FeatureStream(x[mask], 1.0, kind) if isinstance(features, FeatureStream) else x[mask]
        branches[phase] = fit_poly3(fs, y[mask], mean, scale)
    return DualPolyMap3(branches[Phase.RISING], branches[Phase.FALLING], slope_window, hold_last_on_tie, tie_rel)


def _clamp(y, q_max):
    if q_max is None:
        return y
    return np.clip(y, -0.05 * q_max, 1.05 * q_max)


def estimate_displacement(map_, feature: float, history=None, prev: Phase = Phase.RISING, q_max: float | None = None) -> float:
    """Apply a fitted map to one feature value.

    For a dual map, ``history`` holds the most recent features (the current one
    last) and selects the branch.
    """
    if not np.isfinite(feature):
        raise ModelError("non-finite feature")
    if isinstance(map_, DualPolyMap3):
        if history is None:
            raise ModelError("a dual map needs the feature history")
        tol = map_.tie_tol if map_.hold_last_on_tie else 0.0
        phase = classify_phase(list(history)[-map_.slope_window:], prev, tol)
        return float(_clamp(map_.branch(phase)(feature), q_max))
    return float(_clamp(map_(feature), q_max))


def apply_map(map_, features, q_max: float | None = None) -> np.ndarray:
    """Batch version of :func:`estimate_displacement` over a whole stream."""
    x = _values(features)
    if not np.all(np.isfinite(x)):
        raise ModelError("non-finite feature")
    if isinstance(map_, DualPolyMap3):
        tol = map_.tie_tol if map_.hold_last_on_tie else 0.0
        rising = np.array([p is Phase.RISING for p in classify_series(x, map_.slope_window, tol)], dtype=bool)
        y = np.where(rising, map_.rising(x), map_.falling(x))
    else:
        y = map_(x)
    return _clamp(np.asarray(y, dtype=float), q_max)


def branch_jumps(map_: DualPolyMap3, features) -> np.ndarray:
    """Gap between the two branches at every sample where the phase label switches."""
    x = _values(features)
    tol = map_.tie_tol if map_.hold_last_on_tie else 0.0
    rising = np.array([p is Phase.RISING for p in classify_series(x, map_.slope_window, tol)], dtype=bool)
    idx = np.nonzero(rising[1:] != rising[:-1])[0] + 1
    return np.abs(map_.rising(x[idx]) - map_.falling(x[idx]))


@dataclass
class ChannelEstimator:
    """Per-channel runtime state for applying a (possibly dual) map online."""

    map: PolyMap3 | DualPolyMap3
    q_max: float | None = None
    history: list = field(default_factory=list)
    phase: Phase = Phase.RISING

    def update(self, feature: float) -> float:
        self.history.append(float(feature))
        if isinstance(self.map, DualPolyMap3):
            del self.history[:-self.map.slope_window]
            tol = self.map.tie_tol if self.map.hold_last_on_tie else 0.0
            self.phase = classify_phase(self.history, self.phase, tol)
            return float(_clamp(self.map.branch(self.phase)(feature), self.q_max))
        self.history = self.history[-1:]
        return estimate_displacement(self.map, feature, q_max=self.q_max)
