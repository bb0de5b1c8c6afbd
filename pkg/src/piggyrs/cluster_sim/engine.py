"""Trace-driven repair accounting under RS and Piggybacked-RS cost models.

``unavailable_machines`` counts flagged outages per day (a machine that is
flagged twice in one day counts twice).

Every flagged machine has all of its blocks repaired at flag time.
Machines flagged at the same instant form one batch; a stripe missing
m >= 2 blocks within a batch is decoded once at k full blocks under every
model. Single-block repairs cost:

  rs     k * L
  pb     the implemented code's plan: (k + |g|) * L/2 for a data block in
         group g, k * L otherwise
  flat30 a flat 30% saving on k * L

All reads cross racks because a stripe never has two blocks on one rack.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from typing import Iterable

import numpy as np

from ..errors import UnknownNode
from ..stripe_io import BlockSetLayout
from .topology import ClusterTopology, Placement
from .trace import FLAG_THRESHOLD_S, FailureEvent

DAY_S = 86_400
TB = 10**12
FLAT_SAVINGS = Fraction(3, 10)
REPORT_FORMAT = 1
CSV_COLUMNS = [
    "day",
    "unavailable_machines",
    "blocks_repaired",
    "rs_bytes",
    "pb_bytes",
    "savings_bytes",
    "pb_flat30_bytes",
    "savings_flat30_bytes",
]


@dataclass
class DayStats:
    day: str
    unavailable_machines: int = 0
    blocks_repaired: int = 0
    stripes_repaired: int = 0
    rs_bytes: int = 0
    pb_bytes: int = 0
    pb_flat30_bytes: int = 0
    missing: dict = field(default_factory=lambda: {"1": 0, "2": 0, "3+": 0})

    @property
    def savings_bytes(self) -> int:
        return self.rs_bytes - self.pb_bytes

    @property
    def savings_flat30_bytes(self) -> int:
        return self.rs_bytes - self.pb_flat30_bytes

    def to_json(self) -> dict:
        out = asdict(self)
        out["savings_bytes"] = self.savings_bytes
        out["savings_flat30_bytes"] = self.savings_flat30_bytes
        return out


@dataclass
class TrafficReport:
    k: int
    r: int
    groups: list
    days: list[DayStats]
    threshold_s: float = FLAG_THRESHOLD_S
    notes: dict = field(default_factory=dict)

    def missing_counts(self) -> dict:
        out = {"1": 0, "2": 0, "3+": 0}
        for d in self.days:
            for key, v in d.missing.items():
                out[key] += v
        return out

    def totals(self) -> dict:
        keys = ["unavailable_machines", "blocks_repaired", "stripes_repaired", "rs_bytes", "pb_bytes", "pb_flat30_bytes"]
        return {key: sum(getattr(d, key) for d in self.days) for key in keys}

    def summary(self) -> dict:
        def median(attr):
            values = [getattr(d, attr) for d in self.days]
            return float(statistics.median(values)) if values else 0.0

        totals = self.totals()
        rs = totals["rs_bytes"]
        pct = lambda saved: 100.0 * saved / rs if rs else 0.0  # noqa: E731
        p1, p2, p3 = summarize_missing_distribution(self)
        return {
            "days": len(self.days),
            "median_unavailable_machines": median("unavailable_machines"),
            "median_blocks_repaired": median("blocks_repaired"),
            "median_rs_tb": median("rs_bytes") / TB,
            "median_pb_tb": median("pb_bytes") / TB,
            "median_pb_flat30_tb": median("pb_flat30_bytes") / TB,
            "median_savings_tb": median("savings_bytes") / TB,
            "median_savings_flat30_tb": median("savings_flat30_bytes") / TB,
            "savings_pct": pct(rs - totals["pb_bytes"]),
            "savings_flat30_pct": pct(rs - totals["pb_flat30_bytes"]),
            "missing_pct": {"1": p1, "2": p2, "3+": p3},
            "models": {
                "rs": "Reed-Solomon: k full blocks per repaired stripe",
                "pb": "implemented Piggybacked-RS plans; parity blocks and multi-failures at RS cost",
                "flat30": "flat 30% saving on single-block repairs, multi-failures at RS cost",
            },
        }

    def to_json(self) -> dict:
        return {
            "format_version": REPORT_FORMAT,
            "code": {"k": self.k, "r": self.r, "partition": self.groups},
            "threshold_s": self.threshold_s,
            "days": [d.to_json() for d in self.days],
            "missing_distribution": self.missing_counts(),
            "summary": self.summary(),
            "notes": self.notes,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for d in self.days:
            row = d.to_json()
            lines.append(",".join(str(row[c]) for c in CSV_COLUMNS))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_json(cls, doc: dict) -> "TrafficReport":
        days = []
        for d in doc["days"]:
            d = {key: v for key, v in d.items() if key not in ("savings_bytes", "savings_flat30_bytes")}
            days.append(DayStats(**d))
        code = doc["code"]
        return cls(code["k"], code["r"], code["partition"], days, doc.get("threshold_s", FLAG_THRESHOLD_S), doc.get("notes", {}))


def summarize_missing_distribution(report: TrafficReport) -> tuple[float, float, float]:
    """Percent of repaired stripes missing exactly 1, exactly 2, and 3+ blocks."""
    counts = report.missing_counts()
    total = sum(counts.values())
    if not total:
        return 0.0, 0.0, 0.0
    return tuple(100.0 * counts[key] / total for key in ("1", "2", "3+"))


def _day_label(day: int) -> str:
    return datetime.fromtimestamp(day * DAY_S, tz=timezone.utc).strftime("%Y-%m-%d")


def flag_batches(events: Iterable[FailureEvent], threshold: float = FLAG_THRESHOLD_S) -> list[tuple[float, list[int]]]:
    """(flag time, nodes) for every instant at which machines get flagged."""
    batches: dict[float, list[int]] = {}
    for ev in events:
        if ev.flagged:
            batches.setdefault(ev.timestamp + threshold, []).append(ev.node)
    return sorted(batches.items())


def single_repair_units(layout: BlockSetLayout) -> np.ndarray:
    """Half-block units to repair each block index alone, per code."""
    return np.array([layout.repair_bytes(i, 2) for i in range(layout.k + layout.r)], dtype=np.int64)


def simulate(
    topology: ClusterTopology,
    placement: Placement,
    events: list[FailureEvent],
    layout: BlockSetLayout,
    threshold: float = FLAG_THRESHOLD_S,
) -> TrafficReport:
    n = layout.k + layout.r
    if placement.width != n:
        raise ValueError(f"placement width {placement.width} does not match a ({layout.k},{layout.r}) code")
    for ev in events:
        if not 0 <= ev.node < topology.nodes:
            raise UnknownNode(ev.node)
    pb_layout = layout if layout.codec == "pb" else BlockSetLayout(layout.k, layout.r, 2, "pb")
    units = single_repair_units(pb_layout)
    k = layout.k
    days: dict[int, DayStats] = {}
    if events:
        first = int(min(ev.timestamp for ev in events) // DAY_S)
        last = int(max(ev.timestamp + (threshold if ev.flagged else 0) for ev in events) // DAY_S)
        for day in range(first, last + 1):
            days[day] = DayStats(_day_label(day))
    for when, nodes in flag_batches(events, threshold):
        day = int(when // DAY_S)
        stats = days[day]
        stats.unavailable_machines += len(nodes)
        blocks = np.concatenate([placement.blocks_on(node) for node in nodes])
        if blocks.size == 0:
            continue
        stripe, index = np.divmod(blocks, n)
        uniq, first_pos, counts = np.unique(stripe, return_index=True, return_counts=True)
        lens = placement.block_lens[uniq]
        full = k * lens
        single = counts == 1
        pb = np.where(single, units[index[first_pos]] * (lens // 2), full)
        rs_total = int(full.sum())
        single_rs = int(full[single].sum())
        stats.blocks_repaired += int(blocks.size)
        stats.stripes_repaired += int(uniq.size)
        stats.rs_bytes += rs_total
        stats.pb_bytes += int(pb.sum())
        stats.pb_flat30_bytes += rs_total - int(round(FLAT_SAVINGS * single_rs))
        stats.missing["1"] += int(single.sum())
        stats.missing["2"] += int((counts == 2).sum())
        stats.missing["3+"] += int((counts >= 3).sum())
    return TrafficReport(k, layout.r, [list(g) for g in pb_layout.groups], [days[d] for d in sorted(days)], threshold)
