"""Synthetic failure traces calibrated to published cluster medians.

The measured series are not public, so the generator is driven by the
medians instead: flagged machines per day, block repairs per day, cross-rack
bytes per day and the share of stripes missing 1, 2 or 3+ blocks.

Machines that fail together form a batch on distinct racks. For a batch of
f machines the chance that a stripe loses m blocks has a closed form
(hypergeometric over racks, thinned by the node choice inside each rack).
Each day's flagged machines are split into batches, and the batch count is
chosen day by day with error diffusion so that the cumulative expected
ratios of 2-missing and 3+-missing to 1-missing stripes track the target.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from ..stripe_io import BlockSetLayout
from .engine import DAY_S, TB, TrafficReport, simulate
from .topology import ClusterTopology, Placement, place_stripes
from .trace import FLAG_THRESHOLD_S, FailureEvent, flag_events, parse_timestamp


@lru_cache(maxsize=None)
def batch_loss_probs(racks: int, nodes_per_rack: int, width: int, f: int) -> tuple[float, float, float]:
    """P(a stripe loses 1, 2, 3+ blocks) when f machines on f distinct racks fail."""
    q = 1.0 / nodes_per_rack
    probs = [0.0] * (width + 1)
    total = math.comb(racks, width)
    for j in range(0, min(f, width) + 1):
        hyp = math.comb(f, j) * math.comb(racks - f, width - j) / total
        if hyp == 0.0:
            continue
        for m in range(j + 1):
            probs[m] += hyp * math.comb(j, m) * q**m * (1 - q) ** (j - m)
    return probs[1], probs[2], sum(probs[3:])


def split_even(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + 1] * extra + [base] * (parts - extra)


def plan_batches(
    daily: list[int], topology: ClusterTopology, width: int, target: tuple[float, float, float]
) -> list[list[int]]:
    """Batch sizes per day so the expected 2- and 3+-missing shares track ``target``."""
    ratio2 = target[1] / target[0]
    ratio3 = target[2] / target[0]
    plans = []
    c1 = c2 = c3 = 0.0
    for total in daily:
        if total == 0:
            plans.append([])
            continue
        best = None
        lo = max(1, math.ceil(total / topology.racks))
        for parts in range(lo, total + 1):
            sizes = split_even(total, parts)
            e = np.zeros(3)
            for f in sizes:
                e += batch_loss_probs(topology.racks, topology.nodes_per_rack, width, f)
            err = abs(c2 + e[1] - ratio2 * (c1 + e[0])) + abs(c3 + e[2] - ratio3 * (c1 + e[0]))
            if best is None or err < best[0]:
                best = (err, sizes, e)
        _, sizes, e = best
        c1, c2, c3 = c1 + e[0], c2 + e[1], c3 + e[2]
        plans.append(sizes)
    return plans


@dataclass(frozen=True)
class TraceSpec:
    days: int
    median_daily_failures: float
    seed: int = 0
    start: str = "2013-02-01T00:00:00Z"
    daily_jitter: float = 0.25  # daily count uniform in median * (1 +- jitter)
    blip_fraction: float = 0.2  # extra sub-threshold outages per flagged one
    mean_extra_downtime_s: float = 3600.0
    target_missing: tuple[float, float, float] = (98.08, 1.87, 0.05)


def daily_counts(spec: TraceSpec, rng: np.random.Generator) -> list[int]:
    counts = []
    for _ in range(spec.days):
        jitter = rng.uniform(-spec.daily_jitter, spec.daily_jitter) if spec.daily_jitter else 0.0
        counts.append(max(0, int(round(spec.median_daily_failures * (1 + jitter)))))
    return counts


def generate_trace(spec: TraceSpec, topology: ClusterTopology, width: int) -> list[FailureEvent]:
    """Synthetic down/up events; flagged outages arrive in same-instant batches."""
    rng = np.random.default_rng(spec.seed)
    start = parse_timestamp(spec.start)
    counts = daily_counts(spec, rng)
    plans = plan_batches(counts, topology, width, spec.target_missing)
    busy_until = np.zeros(topology.nodes)
    events: list[FailureEvent] = []
    latest_down = DAY_S - FLAG_THRESHOLD_S - 1
    for day, sizes in enumerate(plans):
        base = start + day * DAY_S
        outages = [(float(rng.integers(0, latest_down)), "batch", f) for f in sizes]
        blips = int(round(spec.blip_fraction * sum(sizes)))
        outages += [(float(rng.integers(0, DAY_S)), "blip", 1) for _ in range(blips)]
        outages.sort(key=lambda o: o[0])
        for offset, kind, f in outages:
            t = base + offset
            chosen = []
            for rack in rng.permutation(topology.racks):
                if len(chosen) == f:
                    break
                slots = rack * topology.nodes_per_rack + np.arange(topology.nodes_per_rack)
                free = slots[busy_until[slots] <= t]
                if free.size:
                    chosen.append(int(rng.choice(free)))
            for node in chosen:
                if kind == "batch":
                    down_for = FLAG_THRESHOLD_S + 60 + float(rng.exponential(spec.mean_extra_downtime_s))
                else:
                    down_for = float(rng.integers(60, FLAG_THRESHOLD_S - 60))
                down_for = round(down_for)
                busy_until[node] = t + down_for + 1
                events.append(FailureEvent(t, node, "down"))
                events.append(FailureEvent(t + down_for, node, "up"))
    return flag_events(events)


def block_fill_for(targets: dict, k: int, block_size: int) -> float:
    """Mean fraction of block_size per repaired block implied by the targets."""
    p1, p2, p3 = (x / 100.0 for x in targets["missing_distribution"])
    blocks_per_stripe = (p1 + 2 * p2 + 3 * p3) / (p1 + p2 + p3)
    stripes = targets["repairs_per_day"] / blocks_per_stripe
    return targets["rs_tb_per_day"] * TB / (stripes * k * block_size)


def sample_block_lens(count: int, block_size: int, fill: float, rng: np.random.Generator) -> np.ndarray:
    """Full blocks with probability 2*fill - 1, otherwise uniform partial (even) lengths."""
    if not 0.5 <= fill <= 1.0:
        raise ValueError(f"mean block fill {fill:.3f} outside the supported range [0.5, 1]")
    full = rng.random(count) < 2 * fill - 1
    half = block_size // 2
    partial = 2 * rng.integers(1, half + 1, size=count)
    return np.where(full, 2 * half, partial).astype(np.int64)


@dataclass
class Calibration:
    name: str
    targets: dict
    layout: BlockSetLayout
    topology: ClusterTopology
    trace: TraceSpec
    desk_scale: float = 100.0
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def width(self) -> int:
        return self.layout.k + self.layout.r

    @property
    def blocks_per_node(self) -> float:
        return self.targets["repairs_per_day"] / self.trace.median_daily_failures

    def stripes_for(self, topology: ClusterTopology) -> int:
        return int(round(topology.nodes * self.blocks_per_node / self.width))

    def block_fill(self) -> float:
        return block_fill_for(self.targets, self.layout.k, self.layout.block_size)

    def desk(self) -> "Calibration":
        """Same workload on ~1/desk_scale of the machines.

        Blocks per machine and flagged machines per day are unchanged, so the
        per-machine failure rate rises by the scale factor and daily repair
        counts stay put.
        """
        topo = self.topology.scaled(self.desk_scale, min_racks=self.width + 1)
        return replace(self, name=f"{self.name}-desk", topology=topo, desk_scale=1.0)

    def build(self) -> tuple[Placement, list[FailureEvent]]:
        seed = self.trace.seed
        placement = place_stripes(self.topology, self.stripes_for(self.topology), self.width, seed + 1)
        rng = np.random.default_rng(seed + 2)
        placement.block_lens = sample_block_lens(placement.stripes, self.layout.block_size, self.block_fill(), rng)
        return placement, generate_trace(self.trace, self.topology, self.width)

    def run(self) -> TrafficReport:
        placement, events = self.build()
        report = simulate(self.topology, placement, events, self.layout)
        report.notes = {
            "calibration": self.name,
            "topology": {"racks": self.topology.racks, "nodes_per_rack": self.topology.nodes_per_rack},
            "stripes": placement.stripes,
            "blocks_per_node": self.blocks_per_node,
            "mean_block_fill": self.block_fill(),
            "targets": self.targets,
        }
        return report


def calibration_from_dict(doc: dict) -> Calibration:
    code = doc["code"]
    groups = code.get("partition")
    layout = BlockSetLayout(
        code["k"], code["r"], code["block_size"], "pb",
        tuple(tuple(g) for g in groups) if groups else None,
    )
    topo = doc["topology"]
    t = dict(doc["trace"])
    if "target_missing" not in t:
        t["target_missing"] = tuple(doc["targets"]["missing_distribution"])
    else:
        t["target_missing"] = tuple(t["target_missing"])
    t.setdefault("median_daily_failures", doc["targets"]["daily_failures"])
    return Calibration(
        doc.get("name", "calibration"),
        doc["targets"],
        layout,
        ClusterTopology(topo["racks"], topo["nodes_per_rack"]),
        TraceSpec(**t),
        doc.get("desk_scale", 100.0),
        raw=doc,
    )


def load_calibration(path: Optional[Path] = None) -> Calibration:
    """Load a calibration file, or the bundled one when ``path`` is None."""
    if path is None:
        text = resources.files("piggyrs.data").joinpath("calibration.json").read_text()
    else:
        text = Path(path).read_text()
    return calibration_from_dict(json.loads(text))
