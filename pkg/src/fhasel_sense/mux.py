"""Round-robin multiplexing of one sensing front-end across several actuators."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .actuator import ModelError
from .calibration import ChannelEstimator
from .estimation import FeatureStream


@dataclass(frozen=True)
class MuxPlan:
    n_channels: int = 4
    slot_windows: int = 1
    settle_windows: int = 0
    order: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n_channels < 1:
            raise ModelError("need at least one channel")
        if self.slot_windows < 1 or self.settle_windows < 0:
            raise ModelError("slot_windows must be >= 1 and settle_windows >= 0")
        order = tuple(range(self.n_channels)) if self.order is None else tuple(int(c) for c in self.order)
        if sorted(order) != list(range(self.n_channels)):
            raise ModelError(f"order {order} is not a permutation of {self.n_channels} channels")
        object.__setattr__(self, "order", order)

    @property
    def slot_length(self) -> int:
        """Windows per slot; a slot is lengthened when settling would eat it whole."""
        if self.settle_windows < self.slot_windows:
            return self.slot_windows
        return self.slot_windows + self.settle_windows

    @property
    def valid_per_slot(self) -> int:
        return self.slot_length - self.settle_windows

    @property
    def cycle_windows(self) -> int:
        return self.n_channels * self.slot_length

    def channel_rate(self, base_rate: float) -> float:
        return base_rate * self.valid_per_slot / self.cycle_windows


class ChannelSlot(NamedTuple):
    channel: int
    discard: bool


@dataclass(frozen=True)
class ChannelEstimate:
    channel: int
    t: float
    displacement: float
    feature: float
    stale: bool = False


def schedule(plan: MuxPlan, window_index: int) -> ChannelSlot:
    """Channel connected during a given RMS window, and whether it is still settling."""
    if window_index < 0:
        raise ModelError("window_index must be >= 0")
    pos = window_index % plan.cycle_windows
    slot, offset = divmod(pos, plan.slot_length)
    return ChannelSlot(plan.order[slot], offset < plan.settle_windows)


def step_mux(
    plan: MuxPlan,
    features: Sequence[FeatureStream],
    maps: Sequence,
    q_max=None,
) -> list[ChannelEstimate]:
    """Fresh estimates produced by the multiplexed front-end, in time order.

    ``features[i]`` is what channel ``i`` would present to the front-end in
    every window; only scheduled, settled windows are consumed. Each channel
    keeps its own estimator state (dual-map history). ``q_max`` is one clamp
    scale for all channels or a sequence with one per channel.
    """
    if len(features) != plan.n_channels or len(maps) != plan.n_channels:
        raise ModelError(f"plan has {plan.n_channels} channels but got {len(features)} feature streams and {len(maps)} maps")
    ref = features[0]
    for i, fs in enumerate(features):
        if fs.rate != ref.rate or len(fs) != len(ref) or fs.t0 != ref.t0:
            raise ModelError(f"channel {i} feature stream does not match channel 0 (rate/length/start)")
        if fs.kind != maps[i].feature_kind:
            raise ModelError(f"channel {i} map expects {maps[i].feature_kind!r} features, got {fs.kind!r}")
    clamps = list(q_max) if isinstance(q_max, (list, tuple)) else [q_max] * plan.n_channels
    estimators = [ChannelEstimator(m, c) for m, c in zip(maps, clamps)]
    out = []
    t = ref.t
    for w in range(len(ref)):
        ch, discard = schedule(plan, w)
        if discard:
            continue
        x = float(features[ch].values[w])
        out.append(ChannelEstimate(ch, float(t[w]), estimators[ch].update(x), x))
    return out


def hold_estimates(estimates: Sequence[ChannelEstimate], plan: MuxPlan, times) -> list[ChannelEstimate]:
    """Zero-order-hold view: every channel's latest estimate at every window time.

    An estimate older than one full mux cycle is flagged stale. Channels with
    no estimate yet are omitted.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        raise ModelError("need at least two window times")
    period = float(times[1] - times[0])
    max_age = plan.cycle_windows * period * (1 + 1e-9)
    latest: dict[int, ChannelEstimate] = {}
    rows = []
    it = iter(estimates)
    nxt = next(it, None)
    for t in times:
        while nxt is not None and nxt.t <= t + 1e-12:
            latest[nxt.channel] = nxt
            nxt = next(it, None)
        for ch in range(plan.n_channels):
            e = latest.get(ch)
            if e is not None:
                rows.append(ChannelEstimate(ch, float(t), e.displacement, e.feature, (t - e.t) > max_age))
    return rows


def measured_rates(estimates: Sequence[ChannelEstimate], n_channels: int, duration: float) -> list[float]:
    """Fresh estimates per second for each channel."""
    counts = np.bincount([e.channel for e in estimates], minlength=n_channels)
    return [float(c) / duration for c in counts]
