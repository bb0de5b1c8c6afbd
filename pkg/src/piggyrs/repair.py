"""Repair plans: which symbols to download and how to combine them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

# Substripe tags. RS stripes have a single unsplit substripe (tag None);
# piggybacked pairs carry "a" and "b".
Tag = Optional[str]
SymbolKey = tuple[int, Tag]
Fetch = Callable[[int, Tag], object]


class Read(NamedTuple):
    node: int
    tag: Tag
    count: int = 1


@dataclass(frozen=True)
class Step:
    """One decode step.

    ops:
      decode       solve the data vector of substripe ``tag`` from ``inputs``
      unpiggyback  strip p_parity(b) off a stored b-parity, exposing a group sum
      peel         subtract the other group members' a-symbols from that sum
      encode       recompute the missing node's symbols from decoded data
    """

    op: str
    tag: Tag = None
    inputs: tuple[SymbolKey, ...] = ()
    parity: Optional[int] = None
    target: Optional[int] = None


@dataclass(frozen=True)
class RepairPlan:
    missing: int
    reads: tuple[Read, ...]
    recipe: tuple[Step, ...]
    kind: str = "decode"
    notes: dict = field(default_factory=dict, compare=False)

    @property
    def cost(self) -> int:
        return sum(read.count for read in self.reads)

    def read_set(self) -> set[SymbolKey]:
        return {(read.node, read.tag) for read in self.reads}

    def consumed(self) -> set[SymbolKey]:
        return {key for step in self.recipe for key in step.inputs}


def fetch_reads(plan: RepairPlan, fetch: Fetch) -> dict[SymbolKey, object]:
    return {(read.node, read.tag): fetch(read.node, read.tag) for read in plan.reads}
