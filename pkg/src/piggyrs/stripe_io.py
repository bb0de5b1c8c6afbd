"""Block-level striping: encode block sets, persist them, verify and repair.

One byte-level stripe is the k+r bytes at a common offset across the
blocks of a set. For Piggybacked-RS, even offsets of every block form
substripe a and odd offsets substripe b, so a StripePair is one adjacent
byte pair and a substripe-half read is a stride-2 slice.
"""

from __future__ import annotations

import json
import os
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from .errors import CorruptSource, DimensionMismatch, Unrecoverable
from .linalg import mat_vec_mul
from .piggyback import GroupPartition, default_partition, execute_pb_plan, pb_encode, pb_repair_plan
from .repair import RepairPlan, Tag
from .rs_code import CodeParams, execute_rs_plan, rs_repair_plan

FORMAT_VERSION = 1
MiB = 1 << 20
DEFAULT_BLOCK_SIZE = 256 * MiB
DEFAULT_WINDOW = 4 * MiB
CODECS = ("rs", "pb")


@dataclass(frozen=True)
class BlockSetLayout:
    k: int = 10
    r: int = 4
    block_size: int = DEFAULT_BLOCK_SIZE
    codec: str = "rs"
    groups: Optional[tuple[tuple[int, ...], ...]] = None

    def __post_init__(self):
        if self.codec not in CODECS:
            raise ValueError(f"unknown codec {self.codec!r}, expected one of {CODECS}")
        CodeParams(self.k, self.r)
        if self.block_size < 1:
            raise ValueError("block_size must be positive")
        if self.codec == "pb":
            if self.block_size % 2:
                raise ValueError("piggybacked layouts need an even block_size")
            if self.groups is None:
                object.__setattr__(self, "groups", default_partition(self.params).groups)
            else:
                object.__setattr__(self, "groups", self.partition.groups)
        elif self.groups is not None:
            raise ValueError("a partition only applies to the piggybacked codec")

    @property
    def params(self) -> CodeParams:
        return CodeParams(self.k, self.r)

    @property
    def partition(self) -> Optional[GroupPartition]:
        if self.groups is None:
            return None
        return GroupPartition(self.params, tuple(tuple(g) for g in self.groups))

    def repair_bytes(self, index: int, block_len: int) -> int:
        """Bytes downloaded to repair block ``index`` when every other block is alive."""
        if self.codec == "rs":
            return self.k * block_len
        return pb_repair_plan(self.partition, index).cost * (block_len // 2)


@dataclass
class BlockEntry:
    index: int
    role: str
    crc32: int
    path: str


@dataclass
class StripeManifest:
    stripe_id: str
    layout: BlockSetLayout
    block_len: int
    pad_len: int
    blocks: list[BlockEntry] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "stripe_id": self.stripe_id,
            "codec": self.layout.codec,
            "k": self.layout.k,
            "r": self.layout.r,
            "block_size": self.layout.block_size,
            "block_len": self.block_len,
            "pad_len": self.pad_len,
            "partition": [list(g) for g in self.layout.groups] if self.layout.groups is not None else None,
            "blocks": [
                {"index": b.index, "role": b.role, "crc32": b.crc32, "path": b.path} for b in self.blocks
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "StripeManifest":
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported manifest format {doc.get('format_version')!r}")
        groups = doc.get("partition")
        layout = BlockSetLayout(
            k=doc["k"],
            r=doc["r"],
            block_size=doc["block_size"],
            codec=doc["codec"],
            groups=tuple(tuple(g) for g in groups) if groups is not None else None,
        )
        blocks = [BlockEntry(b["index"], b["role"], b["crc32"], b["path"]) for b in doc["blocks"]]
        manifest = cls(doc["stripe_id"], layout, doc["block_len"], doc["pad_len"], blocks)
        manifest.validate()
        return manifest

    def validate(self) -> None:
        k, n = self.layout.k, self.layout.k + self.layout.r
        indices = sorted(b.index for b in self.blocks)
        if indices != list(range(n)):
            raise ValueError(f"manifest must list block indices 0..{n - 1} exactly once")
        for b in self.blocks:
            if b.role != ("data" if b.index < k else "parity"):
                raise ValueError(f"block {b.index} has role {b.role!r}")

    def entry(self, index: int) -> BlockEntry:
        for b in self.blocks:
            if b.index == index:
                return b
        raise KeyError(index)


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(manifest: StripeManifest, directory: Path) -> Path:
    path = Path(directory) / f"{manifest.stripe_id}.manifest.json"
    atomic_write_text(path, json.dumps(manifest.to_json(), indent=2) + "\n")
    return path


def read_manifest(path: Path) -> StripeManifest:
    with open(path) as fh:
        return StripeManifest.from_json(json.load(fh))


# -- codec kernels over windows of a block set ------------------------------


def encode_window(layout: BlockSetLayout, data: np.ndarray) -> np.ndarray:
    """Parity bytes (r, w) for data bytes (k, w); w must be even for pb."""
    if layout.codec == "rs":
        return mat_vec_mul(layout.params.generator().parity, data)
    k = layout.k
    pair = pb_encode(data[:, 0::2], data[:, 1::2], layout.partition)
    parity = np.empty((layout.r, data.shape[1]), dtype=np.uint8)
    parity[:, 0::2] = pair.a[k:]
    parity[:, 1::2] = pair.b[k:]
    return parity


def _block_len_for(layout: BlockSetLayout, longest: int) -> int:
    if layout.codec == "pb" and longest % 2:
        return longest + 1
    return longest


def encode_blockset(
    data_blocks: Sequence[bytes],
    layout: BlockSetLayout,
    stripe_id: str = "stripe",
    pad: bool = True,
) -> tuple[list[np.ndarray], StripeManifest]:
    """Encode up to k data blocks in memory; short blocks are zero-padded."""
    k = layout.k
    if len(data_blocks) > k or (not pad and len(data_blocks) != k):
        raise DimensionMismatch(f"expected {k} data blocks, got {len(data_blocks)}")
    lengths = [len(b) for b in data_blocks]
    if not pad and len(set(lengths)) > 1:
        raise DimensionMismatch(f"data blocks have unequal lengths {sorted(set(lengths))}")
    longest = max(lengths, default=0)
    if longest > layout.block_size:
        raise DimensionMismatch(f"block of {longest} bytes exceeds block_size {layout.block_size}")
    block_len = _block_len_for(layout, longest)
    data = np.zeros((k, block_len), dtype=np.uint8)
    for i, block in enumerate(data_blocks):
        data[i, : len(block)] = np.frombuffer(bytes(block), dtype=np.uint8)
    parity = encode_window(layout, data) if block_len else np.zeros((layout.r, 0), dtype=np.uint8)
    blocks = list(data) + list(parity)
    manifest = StripeManifest(
        stripe_id,
        layout,
        block_len,
        k * block_len - sum(lengths),
        [
            BlockEntry(i, "data" if i < k else "parity", zlib.crc32(blk.tobytes()), f"{stripe_id}.{i}.blk")
            for i, blk in enumerate(blocks)
        ],
    )
    return list(parity), manifest


# -- readers ----------------------------------------------------------------


class BlockReader(Protocol):
    def available(self) -> set[int]: ...

    def read(self, index: int, tag: Tag, start: int, stop: int) -> np.ndarray:
        """Bytes [start, stop) of a block; tag "a"/"b" selects the even/odd half."""
        ...


def _select(buf: np.ndarray, tag: Tag) -> np.ndarray:
    if tag is None:
        return buf
    return buf[0::2] if tag == "a" else buf[1::2]


class MemoryBlockReader:
    def __init__(self, blocks: dict[int, np.ndarray]):
        self.blocks = {i: np.frombuffer(bytes(b), dtype=np.uint8) if not isinstance(b, np.ndarray) else b
                       for i, b in blocks.items()}

    def available(self) -> set[int]:
        return set(self.blocks)

    def read(self, index: int, tag: Tag, start: int, stop: int) -> np.ndarray:
        return _select(self.blocks[index][start:stop], tag)


class DirectoryBlockReader:
    """Reads block files named in a manifest from ``directory``.

    A block counts as available when its file exists with the expected length.
    Half reads are sliced after a contiguous read; the ledger tracks the
    logical transfer, which is what crosses the network.
    """

    def __init__(self, manifest: StripeManifest, directory: Path):
        self.manifest = manifest
        self.directory = Path(directory)

    def path(self, index: int) -> Path:
        return self.directory / self.manifest.entry(index).path

    def available(self) -> set[int]:
        out = set()
        for b in self.manifest.blocks:
            p = self.directory / b.path
            if p.is_file() and p.stat().st_size == self.manifest.block_len:
                out.add(b.index)
        return out

    def read(self, index: int, tag: Tag, start: int, stop: int) -> np.ndarray:
        with open(self.path(index), "rb") as fh:
            fh.seek(start)
            buf = np.frombuffer(fh.read(stop - start), dtype=np.uint8)
        return _select(buf, tag)


# -- repair -------------------------------------------------------------------


@dataclass
class TransferLedger:
    k: int
    block_len: int
    reads: dict[tuple[int, Tag], int] = field(default_factory=dict)

    def record(self, index: int, tag: Tag, nbytes: int) -> None:
        self.reads[(index, tag)] = self.reads.get((index, tag), 0) + nbytes

    @property
    def total(self) -> int:
        return sum(self.reads.values())

    @property
    def rs_baseline(self) -> int:
        return self.k * self.block_len

    @property
    def ratio(self) -> float:
        return self.total / self.rs_baseline if self.rs_baseline else 0.0

    def per_source(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for (index, _), nbytes in self.reads.items():
            out[index] = out.get(index, 0) + nbytes
        return dict(sorted(out.items()))

    def to_json(self) -> dict:
        return {
            "sources": [
                {"index": i, "substripe": t or "full", "bytes": n}
                for (i, t), n in sorted(self.reads.items(), key=lambda kv: (kv[0][0], kv[0][1] or ""))
            ],
            "total_bytes": self.total,
            "rs_baseline_bytes": self.rs_baseline,
            "ratio": round(self.ratio, 6),
        }


def plan_block_repair(manifest: StripeManifest, missing: int, alive: Iterable[int]) -> RepairPlan:
    layout = manifest.layout
    alive = set(alive) - {missing}
    if layout.codec == "rs":
        return rs_repair_plan(layout.params, missing, alive)
    return pb_repair_plan(layout.partition, missing, alive)


def _windows(length: int, window: int):
    window = max(2, window - window % 2)
    for start in range(0, length, window):
        yield start, min(length, start + window)


def repair_block(
    manifest: StripeManifest,
    missing: int,
    reader: BlockReader,
    window: int = DEFAULT_WINDOW,
) -> tuple[bytes, TransferLedger]:
    """Rebuild block ``missing`` from the alive blocks behind ``reader``."""
    layout = manifest.layout
    alive = reader.available() - {missing}
    if len(alive) < layout.k:
        raise Unrecoverable(f"only {len(alive)} blocks alive, {layout.k} needed")
    plan = plan_block_repair(manifest, missing, alive)
    ledger = TransferLedger(layout.k, manifest.block_len)
    out = np.empty(manifest.block_len, dtype=np.uint8)
    for start, stop in _windows(manifest.block_len, window):

        def fetch(node: int, tag: Tag, start=start, stop=stop) -> np.ndarray:
            buf = reader.read(node, tag, start, stop)
            ledger.record(node, tag, buf.size)
            return buf

        if layout.codec == "rs":
            out[start:stop] = execute_rs_plan(layout.params, plan, fetch)
        else:
            a, b = execute_pb_plan(layout.partition, plan, fetch)
            out[start:stop:2] = a
            out[start + 1 : stop : 2] = b
    block = out.tobytes()
    if zlib.crc32(block) != manifest.entry(missing).crc32:
        raise CorruptSource(f"rebuilt block {missing} fails its CRC; a source block is corrupt")
    return block, ledger


# -- verification ---------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    offset: int  # byte offset of the parity byte whose equation fails
    substripe: Tag
    parity: int


def verify_stripe(
    manifest: StripeManifest,
    reader: BlockReader,
    sample: Optional[int] = None,
    seed: int = 0,
    window: int = DEFAULT_WINDOW,
) -> list[Violation]:
    """Check every parity equation (or a random sample of byte-level stripes)."""
    layout = manifest.layout
    k, n = layout.k, layout.k + layout.r
    missing = set(range(n)) - reader.available()
    if missing:
        raise Unrecoverable(f"verify needs every block; missing {sorted(missing)}")
    keep = None
    if sample is not None and manifest.block_len:
        units = manifest.block_len if layout.codec == "rs" else manifest.block_len // 2
        rng = np.random.default_rng(seed)
        picks = rng.choice(units, size=min(sample, units), replace=False)
        keep = np.zeros(manifest.block_len, dtype=bool)
        if layout.codec == "rs":
            keep[picks] = True
        else:
            keep[2 * picks] = keep[2 * picks + 1] = True
    violations = []
    for start, stop in _windows(manifest.block_len, window):
        blocks = np.stack([reader.read(i, None, start, stop) for i in range(n)])
        bad = encode_window(layout, blocks[:k]) != blocks[k:]
        if keep is not None:
            bad &= keep[start:stop]
        for j, off in zip(*np.nonzero(bad)):
            off = start + int(off)
            tag = None if layout.codec == "rs" else ("a" if off % 2 == 0 else "b")
            violations.append(Violation(off, tag, int(j)))
    violations.sort(key=lambda v: (v.offset, v.parity))
    return violations


# -- files ----------------------------------------------------------------------


@dataclass
class FileManifest:
    name: str
    size: int
    layout: BlockSetLayout
    stripes: list[str]

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "file",
            "name": self.name,
            "size": self.size,
            "codec": self.layout.codec,
            "k": self.layout.k,
            "r": self.layout.r,
            "block_size": self.layout.block_size,
            "partition": [list(g) for g in self.layout.groups] if self.layout.groups is not None else None,
            "stripes": self.stripes,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FileManifest":
        if doc.get("format_version") != FORMAT_VERSION or doc.get("kind") != "file":
            raise ValueError("not a file manifest")
        groups = doc.get("partition")
        layout = BlockSetLayout(
            doc["k"], doc["r"], doc["block_size"], doc["codec"],
            tuple(tuple(g) for g in groups) if groups is not None else None,
        )
        return cls(doc["name"], doc["size"], layout, list(doc["stripes"]))


def stripe_count(size: int, layout: BlockSetLayout) -> int:
    per_stripe = layout.k * layout.block_size
    return -(-size // per_stripe)


def encode_file(
    source: Path,
    out_dir: Path,
    layout: BlockSetLayout,
    name: Optional[str] = None,
    window: int = DEFAULT_WINDOW,
) -> tuple[FileManifest, Path]:
    """Split a file into blocks and block sets, writing blocks and manifests."""
    source, out_dir = Path(source), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = name or source.name
    size = source.stat().st_size
    k, n, bs = layout.k, layout.k + layout.r, layout.block_size
    stripe_ids = []
    with open(source, "rb") as src:
        for s in range(stripe_count(size, layout)):
            stripe_id = f"{name}.s{s:05d}"
            base = s * k * bs
            lengths = [max(0, min(bs, size - base - i * bs)) for i in range(k)]
            block_len = _block_len_for(layout, lengths[0])
            crcs = [0] * n
            paths = [out_dir / f"{stripe_id}.{i}.blk" for i in range(n)]
            handles = [open(p, "wb") for p in paths]
            try:
                for start, stop in _windows(block_len, window):
                    data = np.zeros((k, stop - start), dtype=np.uint8)
                    for i in range(k):
                        take = max(0, min(stop, lengths[i]) - start)
                        if take:
                            src.seek(base + i * bs + start)
                            data[i, :take] = np.frombuffer(src.read(take), dtype=np.uint8)
                    blocks = np.concatenate([data, encode_window(layout, data)])
                    for i in range(n):
                        chunk = blocks[i].tobytes()
                        handles[i].write(chunk)
                        crcs[i] = zlib.crc32(chunk, crcs[i])
            finally:
                for h in handles:
                    h.close()
            manifest = StripeManifest(
                stripe_id,
                layout,
                block_len,
                k * block_len - sum(lengths),
                [BlockEntry(i, "data" if i < k else "parity", crcs[i], paths[i].name) for i in range(n)],
            )
            write_manifest(manifest, out_dir)
            stripe_ids.append(stripe_id)
    fm = FileManifest(name, size, layout, stripe_ids)
    path = out_dir / f"{name}.file.json"
    atomic_write_text(path, json.dumps(fm.to_json(), indent=2) + "\n")
    return fm, path


def read_file_manifest(path: Path) -> FileManifest:
    with open(path) as fh:
        return FileManifest.from_json(json.load(fh))


def decode_file(file_manifest_path: Path, out_path: Path) -> int:
    """Reassemble the original file, rebuilding lost data blocks in memory."""
    file_manifest_path = Path(file_manifest_path)
    directory = file_manifest_path.parent
    fm = read_file_manifest(file_manifest_path)
    remaining = fm.size
    with open(out_path, "wb") as out:
        for stripe_id in fm.stripes:
            manifest = read_manifest(directory / f"{stripe_id}.manifest.json")
            reader = DirectoryBlockReader(manifest, directory)
            alive = reader.available()
            for i in range(manifest.layout.k):
                if remaining <= 0:
                    break
                if i in alive:
                    block = reader.read(i, None, 0, manifest.block_len).tobytes()
                else:
                    block, _ = repair_block(manifest, i, reader)
                take = min(remaining, manifest.layout.block_size, len(block))
                out.write(block[:take])
                remaining -= take
    return fm.size

