"""Piggybacked-RS: two RS substripes coupled through parity piggybacks.

Substripe ``a`` is a plain RS codeword. Substripe ``b`` is an RS codeword
whose parity g+1 additionally carries the XOR of the ``a`` data symbols of
group g. Parity 0 of ``b`` is never touched, so ``b`` can always be solved
from the other data nodes plus parity 0. Once b_i is known, the piggyback
on parity g+1 exposes the group sum of ``a``, and the rest of the group
yields a_i. Single data-node repair then downloads k + |g| symbols instead
of the 2k needed by RS over the same pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    InsufficientSymbols,
    InvalidPartition,
    NoPiggybackParity,
    Unrecoverable,
)
from .linalg import mat_vec_mul
from .repair import Fetch, Read, RepairPlan, Step, fetch_reads
from .rs_code import CodeParams, _as_symbols, choose_sources, rs_decode, rs_encode, rs_parity


@dataclass(frozen=True)
class GroupPartition:
    params: CodeParams
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        groups = tuple(tuple(sorted(g)) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if len(groups) > max(self.params.r - 1, 0):
            raise InvalidPartition(
                f"a (k={self.params.k}, r={self.params.r}) code has only "
                f"{self.params.r - 1} piggyback parities, got {len(groups)} groups"
            )
        seen: set[int] = set()
        for g in groups:
            for i in g:
                if not 0 <= i < self.params.k:
                    raise InvalidPartition(f"group member {i} is not a data position")
                if i in seen:
                    raise InvalidPartition(f"data position {i} appears in two groups")
                seen.add(i)

    @classmethod
    def of(cls, k: int, r: int, groups: Iterable[Iterable[int]]) -> "GroupPartition":
        return cls(CodeParams(k, r), tuple(tuple(g) for g in groups))

    def group_of(self, i: int) -> Optional[int]:
        for idx, g in enumerate(self.groups):
            if i in g:
                return idx
        return None

    @property
    def covering(self) -> bool:
        return sum(len(g) for g in self.groups) == self.params.k

    def to_json(self) -> list[list[int]]:
        return [list(g) for g in self.groups]


def default_partition(params: CodeParams) -> GroupPartition:
    """Contiguous split of the data positions into r-1 near-equal groups, larger first."""
    if params.r < 2:
        raise NoPiggybackParity(f"r={params.r}: no parity left to carry a piggyback")
    parts = params.r - 1
    base, extra = divmod(params.k, parts)
    groups, start = [], 0
    for g in range(parts):
        size = base + (1 if g < extra else 0)
        groups.append(tuple(range(start, start + size)))
        start += size
    return GroupPartition(params, tuple(groups))


@dataclass(frozen=True)
class StripePair:
    a: np.ndarray  # (k + r,) or (k + r, L)
    b: np.ndarray
    partition: GroupPartition

    @property
    def stored_symbols(self) -> int:
        return self.a.shape[0] + self.b.shape[0]

    def node(self, i: int):
        return self.a[i], self.b[i]


def piggybacks(partition: GroupPartition, a_data) -> np.ndarray:
    """Values added onto the r parities of substripe b (row 0 is always zero)."""
    params = partition.params
    a_data = np.asarray(a_data, dtype=np.uint8)
    out = np.zeros((params.r,) + a_data.shape[1:], dtype=np.uint8)
    for g, members in enumerate(partition.groups):
        for i in members:
            out[g + 1] ^= a_data[i]
    return out


def pb_encode(a_data, b_data, partition: GroupPartition) -> StripePair:
    params = partition.params
    a_data = _as_symbols(a_data, params.k, "a_data")
    b_data = _as_symbols(b_data, params.k, "b_data")
    if a_data.shape != b_data.shape:
        raise DimensionMismatch("substripes a and b must have the same shape")
    a = rs_encode(params, a_data).symbols
    b = rs_encode(params, b_data).symbols
    b[params.k:] ^= piggybacks(partition, a_data)
    return StripePair(a, b, partition)


def check_pair(pair: StripePair) -> list[str]:
    """Invariant violations of a StripePair (empty when consistent)."""
    params = pair.partition.params
    k = params.k
    problems = []
    a_par = rs_parity(params, pair.a[:k])
    if not np.array_equal(a_par, pair.a[k:]):
        problems.append("substripe a is not an RS codeword")
    b_par = rs_parity(params, pair.b[:k]) ^ piggybacks(pair.partition, pair.a[:k])
    for j in range(params.r):
        if not np.array_equal(b_par[j], pair.b[k + j]):
            problems.append(f"substripe b parity {j} does not match its piggybacked equation")
    return problems


def _strip(partition: GroupPartition, node: int, b_symbol, a_data) -> np.ndarray:
    k = partition.params.k
    b_symbol = np.asarray(b_symbol, dtype=np.uint8)
    if node <= k:
        return b_symbol
    return b_symbol ^ piggybacks(partition, a_data)[node - k]


def pb_decode(available: Mapping[int, tuple], partition: GroupPartition) -> tuple[np.ndarray, np.ndarray]:
    """Recover (a_data, b_data) from the (a, b) symbols of at least k nodes."""
    params = partition.params
    if len(available) < params.k:
        raise InsufficientSymbols(f"need {params.k} nodes, have {len(available)}")
    a_data = rs_decode(params, {n: ab[0] for n, ab in available.items()})
    b_avail = {n: _strip(partition, n, ab[1], a_data) for n, ab in available.items()}
    return a_data, rs_decode(params, b_avail)


def _full_decode_plan(partition: GroupPartition, missing: int, alive: set[int], kind: str) -> RepairPlan:
    params = partition.params
    if len(alive) < params.k:
        raise Unrecoverable(f"only {len(alive)} of the {params.k} nodes needed are alive")
    sources = choose_sources(params, alive)
    if missing >= params.k and all(i in alive for i in range(params.k)):
        sources = tuple(range(params.k))
    reads = tuple(Read(n, t) for t in ("a", "b") for n in sources)
    recipe = (
        Step("decode", "a", tuple((n, "a") for n in sources)),
        Step("decode", "b", tuple((n, "b") for n in sources)),
        Step("encode", target=missing),
    )
    return RepairPlan(missing, reads, recipe, kind=kind)


def _check_missing(partition: GroupPartition, missing: int, alive: Optional[Iterable[int]]) -> set[int]:
    n = partition.params.n
    if not 0 <= missing < n:
        raise DimensionMismatch(f"node {missing} outside stripe of {n}")
    alive = set(range(n)) - {missing} if alive is None else set(alive)
    if missing in alive:
        raise ValueError(f"node {missing} is listed as both missing and alive")
    return alive


def pb_repair_data_node(partition: GroupPartition, missing: int, alive: Optional[Iterable[int]] = None) -> RepairPlan:
    """Cheapest plan for a lost data node.

    When the node belongs to a group and the needed helpers are alive this
    downloads k + |group| symbols; otherwise both substripes are decoded
    from k survivors (2k symbols).
    """
    params = partition.params
    k = params.k
    if not 0 <= missing < k:
        raise DimensionMismatch(f"node {missing} is not a data node")
    alive = _check_missing(partition, missing, alive)
    g = partition.group_of(missing)
    if g is None:
        return _full_decode_plan(partition, missing, alive, "fallback")
    others = [i for i in range(k) if i != missing]
    carrier = k + g + 1
    mates = [i for i in partition.groups[g] if i != missing]
    needed = set(others) | {k, carrier}
    if not needed <= alive:
        return _full_decode_plan(partition, missing, alive, "fallback")
    b_sources = tuple((i, "b") for i in others) + ((k, "b"),)
    a_mates = tuple((i, "a") for i in mates)
    reads = tuple(Read(n, t) for n, t in b_sources + ((carrier, "b"),) + a_mates)
    recipe = (
        Step("decode", "b", b_sources),
        Step("unpiggyback", "b", ((carrier, "b"),), parity=g + 1),
        Step("peel", "a", a_mates, target=missing),
        Step("encode", target=missing),
    )
    return RepairPlan(missing, reads, recipe, kind="piggyback", notes={"group": g})


def pb_repair_parity_node(partition: GroupPartition, missing: int, alive: Optional[Iterable[int]] = None) -> RepairPlan:
    """Re-encode a lost parity node from both substripes of the data (2k symbols)."""
    params = partition.params
    if not params.k <= missing < params.n:
        raise DimensionMismatch(f"node {missing} is not a parity node")
    alive = _check_missing(partition, missing, alive)
    return _full_decode_plan(partition, missing, alive, "parity")


def pb_repair_plan(partition: GroupPartition, missing: int, alive: Optional[Iterable[int]] = None) -> RepairPlan:
    if missing < partition.params.k:
        return pb_repair_data_node(partition, missing, alive)
    return pb_repair_parity_node(partition, missing, alive)


def execute_pb_plan(partition: GroupPartition, plan: RepairPlan, fetch: Fetch):
    """Run ``plan`` and return the lost node's (a, b) symbols."""
    params = partition.params
    k = params.k
    symbols = fetch_reads(plan, fetch)
    data: dict[str, np.ndarray] = {}
    group_sum = peeled = None
    for step in plan.recipe:
        if step.op == "decode" and step.tag == "a":
            data["a"] = rs_decode(params, {n: symbols[(n, t)] for n, t in step.inputs})
        elif step.op == "decode" and step.tag == "b":
            if any(n > k for n, _ in step.inputs) and "a" not in data:
                raise ValueError("piggybacked b-parities need substripe a decoded first")
            data["b"] = rs_decode(
                params, {n: _strip(partition, n, symbols[(n, t)], data.get("a")) for n, t in step.inputs}
            )
        elif step.op == "unpiggyback":
            row = params.generator().parity[step.parity : step.parity + 1]
            stored = np.asarray(symbols[step.inputs[0]], dtype=np.uint8)
            group_sum = stored ^ mat_vec_mul(row, data["b"])[0]
        elif step.op == "peel":
            peeled = group_sum.copy()
            for key in step.inputs:
                peeled ^= np.asarray(symbols[key], dtype=np.uint8)
        elif step.op == "encode":
            i = step.target
            if i < k:
                a = peeled if peeled is not None else data["a"][i]
                return a, data["b"][i]
            j = i - k
            row = params.generator().parity[j : j + 1]
            a = mat_vec_mul(row, data["a"])[0]
            b = mat_vec_mul(row, data["b"])[0] ^ piggybacks(partition, data["a"])[j]
            return a, b
        else:
            raise ValueError(f"unknown piggyback recipe step {step.op!r}")
    raise ValueError("piggyback recipe did not produce the lost symbols")


@dataclass(frozen=True)
class CostSummary:
    k: int
    r: int
    per_node: tuple[int, ...]
    rs_cost: int  # RS over the pair: 2k

    @property
    def data_average(self) -> Fraction:
        return Fraction(sum(self.per_node[: self.k]), self.k)

    @property
    def all_average(self) -> Fraction:
        return Fraction(sum(self.per_node), len(self.per_node))

    @property
    def data_savings(self) -> Fraction:
        return 1 - self.data_average / self.rs_cost

    @property
    def all_savings(self) -> Fraction:
        return 1 - self.all_average / self.rs_cost

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "r": self.r,
            "per_node": list(self.per_node),
            "rs_cost": self.rs_cost,
            "data_average": float(self.data_average),
            "all_average": float(self.all_average),
            "data_savings": float(self.data_savings),
            "all_savings": float(self.all_savings),
        }


def average_repair_cost(partition: GroupPartition) -> CostSummary:
    """Per-node single-failure repair cost, counted from the actual plans."""
    params = partition.params
    per_node = tuple(pb_repair_plan(partition, i).cost for i in range(params.n))
    return CostSummary(params.k, params.r, per_node, 2 * params.k)


def closed_form_data_average(partition: GroupPartition) -> Fraction:
    """k + sum(|g|^2)/k, valid for partitions that cover every data node."""
    k = partition.params.k
    return k + Fraction(sum(len(g) ** 2 for g in partition.groups), k)


def block_repair_units(partition: GroupPartition, index: int) -> int:
    """Half-block units read to repair block ``index`` with all others alive."""
    g = partition.group_of(index) if index < partition.params.k else None
    if g is None:
        return 2 * partition.params.k
    return partition.params.k + len(partition.groups[g])


def partition_from_sizes(params: CodeParams, sizes: Sequence[int]) -> GroupPartition:
    groups, start = [], 0
    for s in sizes:
        groups.append(tuple(range(start, start + s)))
        start += s
    return GroupPartition(params, tuple(groups))
