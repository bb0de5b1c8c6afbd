"""Dense matrix algebra over GF(256) and systematic generator construction.

Matrices are 2-D ``uint8`` numpy arrays. Functions never mutate their
inputs and return read-only arrays for anything that may be cached.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, DuplicateEvaluationPoint, SingularMatrix
from .gf256 import EXP, INV, MUL, gf_pow

# Above this many square minors the direct parity block is not checked and
# the always-MDS systematized Vandermonde construction is used instead.
MDS_CHECK_LIMIT = 20_000


@dataclass(frozen=True)
class GeneratorMatrix:
    k: int
    r: int
    matrix: np.ndarray  # (k + r) x k

    @property
    def parity(self) -> np.ndarray:
        return self.matrix[self.k:]


def as_matrix(rows: Iterable[Sequence[int]]) -> np.ndarray:
    m = np.array([list(row) for row in rows], dtype=np.int64)
    if m.ndim != 2:
        raise DimensionMismatch("matrix rows must all have the same length")
    if m.size and (m.min() < 0 or m.max() > 255):
        raise ValueError("matrix cells must be field elements 0..255")
    return m.astype(np.uint8)


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.uint8)


def _frozen(m: np.ndarray) -> np.ndarray:
    m.setflags(write=False)
    return m


def vandermonde(points: Sequence[int], cols: int) -> np.ndarray:
    """Row i is [1, p_i, p_i^2, ..., p_i^(cols-1)]."""
    if len(set(points)) != len(points):
        raise DuplicateEvaluationPoint(f"evaluation points must be distinct: {list(points)}")
    if len(points) > 256:
        raise DuplicateEvaluationPoint("GF(256) has only 256 distinct evaluation points")
    return np.array([[gf_pow(p, j) for j in range(cols)] for p in points], dtype=np.uint8)


def mat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.uint8)
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            c = a[i, j]
            if c:
                out[i] ^= MUL[c][b[j]]
    return out


def mat_vec_mul(m: np.ndarray, v) -> np.ndarray:
    """Multiply ``m`` by a vector of symbols.

    ``v`` may be a vector of scalars (shape ``(cols,)``) or a stack of byte
    buffers (shape ``(cols, L)``); the product is taken position-wise along
    the trailing axis.
    """
    m = np.asarray(m, dtype=np.uint8)
    v = np.asarray(v, dtype=np.uint8)
    if m.ndim != 2 or v.shape[:1] != (m.shape[1],):
        raise DimensionMismatch(f"cannot multiply {m.shape} by vector of shape {v.shape}")
    out = np.zeros((m.shape[0],) + v.shape[1:], dtype=np.uint8)
    for i in range(m.shape[0]):
        for j in range(m.shape[1]):
            c = m[i, j]
            if c == 1:
                out[i] ^= v[j]
            elif c:
                out[i] ^= MUL[c][v[j]]
    return out


def invert(m: np.ndarray) -> np.ndarray:
    """Gauss-Jordan inverse with first-nonzero pivoting."""
    m = np.asarray(m, dtype=np.uint8)
    n = m.shape[0]
    if m.ndim != 2 or m.shape[1] != n:
        raise DimensionMismatch(f"only square matrices are invertible, got {m.shape}")
    aug = np.concatenate([m, identity(n)], axis=1)
    for col in range(n):
        nonzero = np.flatnonzero(aug[col:, col])
        if nonzero.size == 0:
            raise SingularMatrix(f"matrix is singular (no pivot in column {col})")
        pivot = col + nonzero[0]
        if pivot != col:
            aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] = MUL[INV[aug[col, col]]][aug[col]]
        for row in range(n):
            f = aug[row, col]
            if row != col and f:
                aug[row] ^= MUL[f][aug[col]]
    return aug[:, n:].copy()


def systematize(m: np.ndarray) -> GeneratorMatrix:
    """Right-multiply ``m`` by the inverse of its top square block."""
    m = np.asarray(m, dtype=np.uint8)
    rows, cols = m.shape
    if rows < cols:
        raise DimensionMismatch("systematize needs at least as many rows as columns")
    top_inv = invert(m[:cols])
    return GeneratorMatrix(k=cols, r=rows - cols, matrix=_frozen(mat_mul(m, top_inv)))


def minor_count(k: int, r: int) -> int:
    return sum(math.comb(r, s) * math.comb(k, s) for s in range(1, min(k, r) + 1))


def is_superregular(p: np.ndarray) -> bool:
    """True when every square submatrix of ``p`` is nonsingular.

    [I; p] is MDS exactly when this holds.
    """
    r, k = p.shape
    for s in range(1, min(k, r) + 1):
        for rows in itertools.combinations(range(r), s):
            sub_rows = p[list(rows)]
            for cols in itertools.combinations(range(k), s):
                try:
                    invert(sub_rows[:, list(cols)])
                except SingularMatrix:
                    return False
    return True


def parity_vandermonde(k: int, r: int) -> np.ndarray:
    """Parity block with entry (j, i) = g^(i*j).

    For k = r = 2 this is [[1, 1], [1, 2]], the textbook (a1+a2, a1+2a2) code.
    """
    return vandermonde([EXP[i] for i in range(k)], r).T.copy()


@lru_cache(maxsize=None)
def rs_generator(k: int, r: int) -> GeneratorMatrix:
    """Systematic MDS generator for a (k, r) code.

    Uses the direct parity Vandermonde when it can be certified MDS cheaply,
    otherwise systematizes the Vandermonde matrix on points 0..k+r-1.
    """
    if k < 1 or r < 0 or k + r > 256:
        raise ValueError(f"unsupported code parameters k={k}, r={r}")
    if k <= 255 and minor_count(k, r) <= MDS_CHECK_LIMIT:
        parity = parity_vandermonde(k, r)
        if is_superregular(parity):
            return GeneratorMatrix(k, r, _frozen(np.concatenate([identity(k), parity])))
    return systematize(vandermonde(list(range(k + r)), k))


def is_mds(gen: GeneratorMatrix) -> bool:
    """Exhaustive check that every k-row subset of the generator is invertible."""
    for rows in itertools.combinations(range(gen.k + gen.r), gen.k):
        try:
            invert(gen.matrix[list(rows)])
        except SingularMatrix:
            return False
    return True


def format_hex_matrix(m: np.ndarray) -> str:
    return "".join(" ".join(f"{c:02x}" for c in row) + "\n" for row in np.asarray(m))


def parse_hex_matrix(text: str) -> np.ndarray:
    rows = [line.split() for line in text.splitlines() if line.strip()]
    return as_matrix([[int(c, 16) for c in row] for row in rows])
