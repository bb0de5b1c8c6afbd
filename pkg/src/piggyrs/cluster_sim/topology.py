"""Racks, nodes and one-block-per-rack stripe placement."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import PlacementInfeasible

TIB = 1 << 40


@dataclass(frozen=True)
class ClusterTopology:
    racks: int
    nodes_per_rack: int
    node_capacity: int = 36 * TIB

    @property
    def nodes(self) -> int:
        return self.racks * self.nodes_per_rack

    def rack_of(self, node):
        return node // self.nodes_per_rack

    def scaled(self, factor: float, min_racks: int) -> "ClusterTopology":
        """Roughly ``nodes / factor`` nodes, keeping at least ``min_racks`` racks."""
        target = max(min_racks, round(self.nodes / factor))
        racks = min(target, max(min_racks, round(self.racks / factor)))
        return ClusterTopology(racks, max(1, round(target / racks)), self.node_capacity)


@dataclass
class Placement:
    """Node hosting each block: ``nodes[s, i]`` holds block i of stripe s."""

    nodes: np.ndarray  # (stripes, k + r) int32
    block_lens: np.ndarray  # (stripes,) int64, bytes per block of each stripe
    _index: Optional[tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False)

    @property
    def stripes(self) -> int:
        return self.nodes.shape[0]

    @property
    def width(self) -> int:
        return self.nodes.shape[1]

    def blocks_on(self, node: int) -> np.ndarray:
        """Flat block ids (stripe * width + index) hosted by ``node``."""
        if self._index is None:
            flat = self.nodes.ravel()
            order = np.argsort(flat, kind="stable")
            bounds = np.searchsorted(flat[order], np.arange(int(flat.max(initial=-1)) + 2))
            self._index = (order, bounds)
        order, bounds = self._index
        if node + 1 >= bounds.size:
            return order[:0]
        return order[bounds[node] : bounds[node + 1]]

    def blocks_per_node(self, nodes: int) -> np.ndarray:
        return np.bincount(self.nodes.ravel(), minlength=nodes)


def place_stripes(
    topology: ClusterTopology,
    stripe_count: int,
    width: int,
    seed: int,
    block_len: int = 0,
    chunk: int = 20_000,
) -> Placement:
    """Put each stripe's blocks on ``width`` distinct racks, one random node per rack."""
    if topology.racks < width:
        raise PlacementInfeasible(f"{topology.racks} racks cannot host {width} blocks on distinct racks")
    rng = np.random.default_rng(seed)
    nodes = np.empty((stripe_count, width), dtype=np.int32)
    for lo in range(0, stripe_count, chunk):
        hi = min(stripe_count, lo + chunk)
        racks = np.argsort(rng.random((hi - lo, topology.racks)), axis=1)[:, :width]
        slots = rng.integers(topology.nodes_per_rack, size=(hi - lo, width))
        nodes[lo:hi] = racks * topology.nodes_per_rack + slots
    return Placement(nodes, np.full(stripe_count, block_len, dtype=np.int64))
