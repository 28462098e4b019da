"""CSV formats for traces, feature streams, calibration maps and mux estimates."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .actuator import ModelError
from .calibration import DualPolyMap3, PolyMap3
from .circuit import SignalTrace
from .estimation import FeatureStream
from .mux import ChannelEstimate


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_to_csv(trace: SignalTrace) -> str:
    lines = ["t_s,value_v"]
    lines.extend(f"{t:.9g},{v:.9g}" for t, v in zip(trace.t, trace.samples))
    return "\n".join(lines) + "\n"


def _read_rows(path, header: str) -> list[list[str]]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != header:
        raise ModelError(f"{path}: expected header {header!r}")
    return [ln.split(",") for ln in lines[1:] if ln.strip()]


def read_trace_csv(path) -> SignalTrace:
    rows = _read_rows(path, "t_s,value_v")
    if len(rows) < 2:
        raise ModelError(f"{path}: need at least two samples to infer the sample rate")
    t = np.array([float(r[0]) for r in rows])
    v = np.array([float(r[1]) for r in rows])
    fs = (len(t) - 1) / (t[-1] - t[0])
    return SignalTrace(v, float(f"{fs:.9g}"), float(t[0]))


def features_to_csv(stream: FeatureStream) -> str:
    lines = ["t_s,value,kind"]
    lines.extend(f"{t:.9g},{v:.9g},{stream.kind}" for t, v in zip(stream.t, stream.values))
    return "\n".join(lines) + "\n"


def read_features_csv(path) -> FeatureStream:
    rows = _read_rows(path, "t_s,value,kind")
    if len(rows) < 2:
        raise ModelError(f"{path}: need at least two feature samples")
    t = np.array([float(r[0]) for r in rows])
    kinds = {r[2].strip() for r in rows}
    if len(kinds) != 1:
        raise ModelError(f"{path}: mixed feature kinds {sorted(kinds)}")
    rate = (len(t) - 1) / (t[-1] - t[0])
    return FeatureStream(np.array([float(r[1]) for r in rows]), float(f"{rate:.9g}"), kinds.pop(), float(t[0]))


def map_to_text(map_: PolyMap3 | DualPolyMap3) -> str:
    if isinstance(map_, DualPolyMap3):
        branches = [("rising", map_.rising), ("falling", map_.falling)]
        ref = map_.rising
    else:
        branches = [("single", map_)]
        ref = map_
    lines = [f"kind,{ref.feature_kind}", f"mean,{ref.mean:.12g}", f"scale,{ref.scale:.12g}", "branch,c0,c1,c2,c3"]
    for name, m in branches:
        lines.append(",".join([name] + [f"{c:.12g}" for c in m.coeffs]))
    return "\n".join(lines) + "\n"


def map_from_text(text: str, slope_window: int = 5, hold_last_on_tie: bool = True):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    try:
        head = dict(ln.split(",", 1) for ln in lines[:3])
        kind, mean, scale = head["kind"], float(head["mean"]), float(head["scale"])
        if lines[3].replace(" ", "") != "branch,c0,c1,c2,c3":
            raise ValueError("missing branch header")
        rows = {}
        for ln in lines[4:]:
            name, *coeffs = ln.split(",")
            if len(coeffs) != 4:
                raise ValueError(f"row {ln!r} needs four coefficients")
            rows[name] = PolyMap3(tuple(float(c) for c in coeffs), mean, scale, kind)
    except (KeyError, IndexError, ValueError) as err:
        raise ModelError(f"malformed calibration map: {err}") from err
    if set(rows) == {"single"}:
        return rows["single"]
    if set(rows) == {"rising", "falling"}:
        return DualPolyMap3(rows["rising"], rows["falling"], slope_window, hold_last_on_tie)
    raise ModelError(f"calibration map has unexpected branches {sorted(rows)}")


def write_map(map_, path) -> None:
    atomic_write(path, map_to_text(map_))


def read_map(path, **kw):
    return map_from_text(Path(path).read_text(), **kw)


def mux_to_csv(rows: Iterable[ChannelEstimate]) -> str:
    lines = ["t_s,channel,displacement_m,stale"]
    lines.extend(f"{e.t:.9g},{e.channel},{e.displacement:.9g},{int(e.stale)}" for e in rows)
    return "\n".join(lines) + "\n"


def series_to_csv(header: str, columns) -> str:
    lines = [header]
    lines.extend(",".join(f"{v:.9g}" for v in row) for row in zip(*columns))
    return "\n".join(lines) + "\n"
