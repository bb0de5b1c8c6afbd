"""Arithmetic in GF(2^8) with the primitive polynomial x^8+x^4+x^3+x^2+1.

Scalars are plain ints in 0..255. Multiplication goes through exp/log
tables; ``MUL`` is the full 256x256 product table as a numpy array so that
whole byte buffers can be scaled with one fancy-indexing lookup.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InversionOfZero

PRIMITIVE_POLY = 0x11D
GENERATOR = 0x02
ORDER = 255  # size of the multiplicative group


@dataclass(frozen=True)
class FieldTables:
    exp: tuple[int, ...]  # 512 entries, exp[i + 255] == exp[i]
    log: tuple[int, ...]  # 256 entries, log[0] is a placeholder


def build_tables(poly: int = PRIMITIVE_POLY, generator: int = GENERATOR) -> FieldTables:
    exp = [0] * 512
    log = [0] * 256
    x = 1
    for i in range(ORDER):
        exp[i] = x
        log[x] = i
        # multiply by the generator with shift-and-reduce
        acc, a, b = 0, x, generator
        while b:
            if b & 1:
                acc ^= a
            a <<= 1
            if a & 0x100:
                a ^= poly
            b >>= 1
        x = acc
        if x == 1 and i < ORDER - 1:
            raise ValueError(f"{generator:#x} is not primitive modulo {poly:#x}")
    for i in range(ORDER, 512):
        exp[i] = exp[i - ORDER]
    return FieldTables(exp=tuple(exp), log=tuple(log))


TABLES = build_tables()
EXP = TABLES.exp
LOG = TABLES.log


def _product_table() -> np.ndarray:
    exp = np.array(EXP, dtype=np.uint8)
    log = np.array(LOG, dtype=np.int32)
    table = exp[log[:, None] + log[None, :]]
    table[0, :] = 0
    table[:, 0] = 0
    table.setflags(write=False)
    return table


MUL = _product_table()
INV = np.array([0] + [EXP[ORDER - LOG[x]] for x in range(1, 256)], dtype=np.uint8)
INV.setflags(write=False)


def gf_add(x: int, y: int) -> int:
    return x ^ y


gf_sub = gf_add


def gf_mul(x: int, y: int) -> int:
    if x == 0 or y == 0:
        return 0
    return EXP[LOG[x] + LOG[y]]


def gf_inv(x: int) -> int:
    if x == 0:
        raise InversionOfZero("0 has no multiplicative inverse in GF(256)")
    return EXP[ORDER - LOG[x]]


def gf_div(x: int, y: int) -> int:
    if y == 0:
        raise InversionOfZero("division by zero in GF(256)")
    if x == 0:
        return 0
    return EXP[LOG[x] + ORDER - LOG[y]]


def gf_pow(x: int, n: int) -> int:
    if n == 0:
        return 1
    if x == 0:
        return 0
    return EXP[(LOG[x] * n) % ORDER]


def scale(c: int, buf: np.ndarray) -> np.ndarray:
    """Multiply every byte of ``buf`` by the constant ``c``."""
    if c == 1:
        return buf.copy()
    return MUL[c][buf]
