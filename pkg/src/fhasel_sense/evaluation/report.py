from __future__ import annotations

import json
from dataclasses import dataclass, field

REPORT_HEADER = ("scenario", "method", "mapping", "freq_hz", "nrmse", "phase_deg", "seed")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


@dataclass
class EvalReport:
    scenario: str
    method: str
    mapping: str
    freq_hz: float | None
    nrmse: float | None
    phase_lag_deg: float | None
    seed: int
    channels: list["EvalReport"] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.nrmse is not None and not self.nrmse >= 0:
            raise ValueError("nrmse must be non-negative")

    def row(self) -> tuple[str, ...]:
        return tuple(_fmt(v) for v in (self.scenario, self.method, self.mapping, self.freq_hz,
                                       self.nrmse, self.phase_lag_deg, self.seed))

    def rows(self) -> list[tuple[str, ...]]:
        return [self.row()] + [r for ch in self.channels for r in ch.rows()]


def reports_to_csv(reports) -> str:
    lines = [",".join(REPORT_HEADER)]
    for r in reports:
        lines.extend(",".join(row) for row in r.rows())
    return "\n".join(lines) + "\n"


def metadata_json(reports) -> str:
    doc = [{"scenario": r.scenario, "method": r.method, "mapping": r.mapping, "metadata": r.metadata} for r in reports]
    return json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"
