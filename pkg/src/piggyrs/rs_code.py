"""Systematic (k, r) Reed-Solomon erasure codec.

Symbols are GF(256) elements. Every function accepts either a vector of
scalars or a stack of equal-length byte buffers (one row per position), so
the same code path serves single byte-level stripes and whole blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

from .errors import CorruptStripe, DimensionMismatch, InsufficientSymbols, Unrecoverable
from .linalg import GeneratorMatrix, invert, mat_vec_mul, rs_generator
from .repair import Fetch, Read, RepairPlan, Step, fetch_reads


@dataclass(frozen=True)
class CodeParams:
    k: int
    r: int

    def __post_init__(self):
        if self.k < 1 or self.r < 1 or self.k + self.r > 256:
            raise ValueError(f"invalid code parameters (k={self.k}, r={self.r})")

    @property
    def n(self) -> int:
        return self.k + self.r

    @property
    def overhead(self) -> float:
        return self.n / self.k

    def generator(self) -> GeneratorMatrix:
        return rs_generator(self.k, self.r)


@dataclass(frozen=True)
class Stripe:
    params: CodeParams
    symbols: np.ndarray  # (k + r,) or (k + r, L)

    @property
    def data(self) -> np.ndarray:
        return self.symbols[: self.params.k]

    @property
    def parity(self) -> np.ndarray:
        return self.symbols[self.params.k:]


def _as_symbols(values, length: int, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.shape[:1] != (length,):
        raise DimensionMismatch(f"{what}: expected {length} symbols, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError(f"{what}: symbols must be bytes")
        arr = arr.astype(np.uint8)
    return arr


def rs_parity(params: CodeParams, data) -> np.ndarray:
    data = _as_symbols(data, params.k, "data")
    return mat_vec_mul(params.generator().parity, data)


def rs_encode(params: CodeParams, data) -> Stripe:
    data = _as_symbols(data, params.k, "data")
    symbols = np.concatenate([data, rs_parity(params, data)])
    return Stripe(params, symbols)


@lru_cache(maxsize=4096)
def decode_matrix(k: int, r: int, positions: tuple[int, ...]) -> np.ndarray:
    """Inverse of the generator rows at ``positions`` (k of them)."""
    inv = invert(rs_generator(k, r).matrix[list(positions)])
    inv.setflags(write=False)
    return inv


def choose_sources(params: CodeParams, positions: Iterable[int]) -> tuple[int, ...]:
    chosen = tuple(sorted(set(positions))[: params.k])
    if len(chosen) < params.k:
        raise InsufficientSymbols(
            f"need {params.k} distinct symbols to decode, have {len(chosen)}"
        )
    return chosen


def rs_decode(params: CodeParams, available: Mapping[int, object], check: bool = False) -> np.ndarray:
    """Recover the k data symbols from any k available positions.

    The lowest k positions are used. With ``check=True`` any extra symbols
    are re-encoded and compared, raising CorruptStripe on mismatch.
    """
    for pos in available:
        if not 0 <= pos < params.n:
            raise DimensionMismatch(f"position {pos} outside stripe of {params.n}")
    chosen = choose_sources(params, available)
    stacked = np.stack([np.asarray(available[p], dtype=np.uint8) for p in chosen])
    if chosen == tuple(range(params.k)):
        data = stacked
    else:
        data = mat_vec_mul(decode_matrix(params.k, params.r, chosen), stacked)
    if check:
        extras = sorted(set(available) - set(chosen))
        if extras:
            full = rs_encode(params, data).symbols
            bad = [p for p in extras if not np.array_equal(full[p], np.asarray(available[p], dtype=np.uint8))]
            if bad:
                raise CorruptStripe(f"symbols at positions {bad} disagree with the decoded codeword")
    return data


def verify_stripe_symbols(params: CodeParams, symbols) -> list[int]:
    """Indices of parity equations violated by a full stripe of symbols."""
    symbols = _as_symbols(symbols, params.n, "stripe")
    expected = rs_parity(params, symbols[: params.k])
    return [j for j in range(params.r) if not np.array_equal(expected[j], symbols[params.k + j])]


def rs_repair_plan(params: CodeParams, missing: int, alive: Iterable[int]) -> RepairPlan:
    alive = set(alive)
    if not 0 <= missing < params.n:
        raise DimensionMismatch(f"position {missing} outside stripe of {params.n}")
    if missing in alive:
        raise ValueError(f"position {missing} is listed as both missing and alive")
    if len(alive) < params.k:
        raise Unrecoverable(f"only {len(alive)} of the {params.k} symbols needed are alive")
    sources = choose_sources(params, alive)
    inputs = tuple((p, None) for p in sources)
    return RepairPlan(
        missing=missing,
        reads=tuple(Read(p, None) for p in sources),
        recipe=(Step("decode", None, inputs), Step("encode", target=missing)),
        kind="rs",
    )


def execute_rs_plan(params: CodeParams, plan: RepairPlan, fetch: Fetch):
    """Run ``plan``, pulling each read symbol through ``fetch(node, tag)``."""
    symbols = fetch_reads(plan, fetch)
    data = None
    for step in plan.recipe:
        if step.op == "decode":
            data = rs_decode(params, {node: symbols[(node, tag)] for node, tag in step.inputs})
        elif step.op == "encode":
            row = params.generator().matrix[step.target : step.target + 1]
            return mat_vec_mul(row, data)[0]
        else:
            raise ValueError(f"unknown RS recipe step {step.op!r}")
    raise ValueError("RS recipe did not produce a symbol")
