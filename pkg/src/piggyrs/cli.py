"""Command-line driver: encode, decode, repair, verify, simulate, gen-trace, report.

Exit codes: 0 ok, 1 I/O failure, 2 usage or configuration error,
3 unrecoverable (too few blocks alive), 4 trace parse error,
5 corruption detected (parity violations or a rebuilt block failing its CRC).
"""

from __future__ import annotations

import argparse
import json
import sys
import zlib
from dataclasses import replace
from pathlib import Path

from .cluster_sim import ClusterTopology, TraceSpec, TrafficReport, generate_trace, ingest_trace, load_calibration, place_stripes, simulate, write_trace
from .errors import CorruptSource, InvalidPartition, NoPiggybackParity, ParseError, TraceInconsistent, Unrecoverable
from .stripe_io import (
    DEFAULT_BLOCK_SIZE,
    BlockSetLayout,
    DirectoryBlockReader,
    decode_file,
    encode_file,
    read_manifest,
    repair_block,
    verify_stripe,
)

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_UNRECOVERABLE, EXIT_TRACE, EXIT_CORRUPT = range(6)


class UsageError(Exception):
    pass


def parse_partition(text: str | None):
    """"0,1,2,3;4,5,6;7,8,9" -> ((0, 1, 2, 3), (4, 5, 6), (7, 8, 9))."""
    if text is None:
        return None
    try:
        return tuple(tuple(int(x) for x in grp.split(",") if x.strip()) for grp in text.split(";"))
    except ValueError:
        raise UsageError(f"bad partition {text!r}; expected e.g. '0,1,2,3;4,5,6;7,8,9'") from None


def layout_from_args(args) -> BlockSetLayout:
    try:
        return BlockSetLayout(args.k, args.r, args.block_size, args.codec, parse_partition(args.partition))
    except (ValueError, InvalidPartition, NoPiggybackParity) as exc:
        raise UsageError(str(exc)) from None


def emit(args, payload: dict, human: str) -> None:
    if args.format == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
        print(human, file=sys.stderr)
    else:
        print(human)


def add_code_flags(p: argparse.ArgumentParser, codec_default: str = "rs") -> None:
    p.add_argument("--codec", choices=["rs", "pb"], default=codec_default)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--r", type=int, default=4)
    p.add_argument("--block-size", type=int, default=DEFAULT_BLOCK_SIZE)
    p.add_argument("--partition", help="piggyback groups, e.g. '0,1,2,3;4,5,6;7,8,9'")


def cmd_encode(args) -> int:
    layout = layout_from_args(args)
    out_dir = Path(args.out) if args.out else Path(args.input).parent / f"{Path(args.input).name}.blocks"
    fm, path = encode_file(Path(args.input), out_dir, layout)
    payload = {
        "stripes": len(fm.stripes),
        "size": fm.size,
        "overhead": round(layout.params.overhead, 6),
        "file_manifest": str(path),
        "codec": layout.codec,
    }
    emit(args, payload, f"encoded {fm.size} bytes into {len(fm.stripes)} stripe(s) in {out_dir}; "
                        f"storage overhead {layout.params.overhead:g}x")
    return EXIT_OK


def cmd_decode(args) -> int:
    size = decode_file(Path(args.manifest), Path(args.out))
    emit(args, {"size": size, "out": args.out}, f"wrote {size} bytes to {args.out}")
    return EXIT_OK


def cmd_repair(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = read_manifest(manifest_path)
    reader = DirectoryBlockReader(manifest, manifest_path.parent)
    block, ledger = repair_block(manifest, args.index, reader)
    dest = Path(args.out) if args.out else reader.path(args.index)
    tmp = dest.with_name(dest.name + ".tmp")
    tmp.write_bytes(block)
    tmp.replace(dest)
    payload = {"index": args.index, "path": str(dest), "ledger": ledger.to_json()}
    if args.format == "human":
        print(f"repaired block {args.index} -> {dest}", file=sys.stderr)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_verify(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = read_manifest(manifest_path)
    reader = DirectoryBlockReader(manifest, manifest_path.parent)
    violations = verify_stripe(manifest, reader, sample=args.sample, seed=args.seed)
    crc_bad = [
        b.index for b in manifest.blocks
        if zlib.crc32(reader.read(b.index, None, 0, manifest.block_len).tobytes()) != b.crc32
    ]
    ok = not violations and not crc_bad
    payload = {
        "ok": ok,
        "violation_count": len(violations),
        "violations": [
            {"offset": v.offset, "substripe": v.substripe or "full", "parity": v.parity}
            for v in violations[: args.max_report]
        ],
        "crc_mismatch": crc_bad,
    }
    emit(args, payload, "ok" if ok else f"{len(violations)} parity violation(s), CRC mismatch in {crc_bad}")
    return EXIT_OK if ok else EXIT_CORRUPT


def _summary_text(summary: dict) -> str:
    m = summary["missing_pct"]
    return "\n".join([
        f"days simulated             {summary['days']}",
        f"median machines flagged    {summary['median_unavailable_machines']:.0f}/day",
        f"median blocks repaired     {summary['median_blocks_repaired']:.0f}/day",
        f"median cross-rack, RS      {summary['median_rs_tb']:.2f} TB/day",
        f"median cross-rack, PB      {summary['median_pb_tb']:.2f} TB/day (implemented code)",
        f"median savings, PB         {summary['median_savings_tb']:.2f} TB/day ({summary['savings_pct']:.2f}%)",
        f"median savings, 30% model  {summary['median_savings_flat30_tb']:.2f} TB/day ({summary['savings_flat30_pct']:.2f}%)",
        f"stripes missing 1/2/3+     {m['1']:.2f}% / {m['2']:.2f}% / {m['3+']:.2f}%",
    ])


def _write_report(args, report: TrafficReport) -> None:
    if args.out:
        Path(args.out).write_text(report.dumps())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    summary = report.summary()
    if args.format == "csv":
        sys.stdout.write(report.to_csv())
    else:
        emit(args, summary, _summary_text(summary))


def cmd_simulate(args) -> int:
    if args.calibration or args.config:
        cal = load_calibration(Path(args.config) if args.config else None)
        if args.seed is not None:
            cal = replace(cal, trace=replace(cal.trace, seed=args.seed))
        if args.days is not None:
            cal = replace(cal, trace=replace(cal.trace, days=args.days))
        if args.desk:
            cal = cal.desk()
        _write_report(args, cal.run())
        return EXIT_OK
    layout = layout_from_args(args)
    width = layout.k + layout.r
    topology = ClusterTopology(args.racks, args.nodes_per_rack)
    if topology.racks < width:
        raise UsageError(f"{topology.racks} racks cannot place {width}-block stripes on distinct racks")
    seed = args.seed if args.seed is not None else 0
    if args.trace:
        events = ingest_trace(args.trace)
    else:
        spec = TraceSpec(
            days=args.days if args.days is not None else 7,
            median_daily_failures=args.median_daily_failures,
            seed=seed,
        )
        events = generate_trace(spec, topology, width)
    stripes = int(round(topology.nodes * args.blocks_per_node / width))
    block_len = layout.block_size + (layout.block_size % 2)
    placement = place_stripes(topology, stripes, width, seed + 1, block_len=block_len)
    _write_report(args, simulate(topology, placement, events, layout))
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    topology = ClusterTopology(args.racks, args.nodes_per_rack)
    spec = TraceSpec(days=args.days, median_daily_failures=args.median_daily_failures, seed=args.seed)
    events = generate_trace(spec, topology, args.k + args.r)
    write_trace(events, args.out)
    flagged = sum(ev.flagged for ev in events)
    emit(args, {"events": len(events), "flagged": flagged, "out": args.out},
         f"wrote {len(events)} events ({flagged} flagged outages) to {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    report = TrafficReport.from_json(json.loads(Path(args.report).read_text()))
    if args.format == "csv":
        sys.stdout.write(report.to_csv())
    else:
        summary = report.summary()
        emit(args, summary, _summary_text(summary))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="piggyrs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--format", choices=["json", "csv", "human"], default="human")
        p.set_defaults(func=func)
        return p

    p = command("encode", cmd_encode, "split a file into coded block sets")
    p.add_argument("input")
    p.add_argument("--out", help="output directory (default: <input>.blocks)")
    add_code_flags(p)

    p = command("decode", cmd_decode, "reassemble a file from its blocks")
    p.add_argument("manifest", help="<name>.file.json written by encode")
    p.add_argument("--out", required=True)

    p = command("repair", cmd_repair, "rebuild one block of a stripe")
    p.add_argument("manifest", help="<stripe-id>.manifest.json")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--out", help="where to write the block (default: its manifest path)")

    p = command("verify", cmd_verify, "check every parity equation of a stripe")
    p.add_argument("manifest")
    p.add_argument("--sample", type=int, help="check only this many random byte-level stripes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-report", type=int, default=100)

    p = command("simulate", cmd_simulate, "cross-rack repair traffic under a failure trace")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--trace", help="trace CSV (timestamp,node_id,event)")
    src.add_argument("--calibration", action="store_true", help="run the bundled calibration")
    src.add_argument("--config", help="calibration file in the bundled JSON format")
    p.add_argument("--desk", action="store_true", help="with a calibration: run on 1/desk_scale of the machines")
    p.add_argument("--days", type=int)
    p.add_argument("--median-daily-failures", type=float, default=52)
    p.add_argument("--blocks-per-node", type=float, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--racks", type=int, default=100)
    p.add_argument("--nodes-per-rack", type=int, default=30)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--csv", help="also write the per-day CSV here")
    add_code_flags(p, codec_default="pb")

    p = command("gen-trace", cmd_gen_trace, "write a synthetic failure trace")
    p.add_argument("--days", type=int, default=7)
    p.add_argument("--median-daily-failures", type=float, default=52)
    p.add_argument("--blocks-per-node", type=float, default=1000, help="accepted for symmetry with simulate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--racks", type=int, default=100)
    p.add_argument("--nodes-per-rack", type=int, default=30)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--r", type=int, default=4)
    p.add_argument("--out", required=True)

    p = command("report", cmd_report, "summarize a saved report")
    p.add_argument("report")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Unrecoverable as exc:
        print(f"unrecoverable: {exc}", file=sys.stderr)
        return EXIT_UNRECOVERABLE
    except (ParseError, TraceInconsistent) as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_TRACE
    except CorruptSource as exc:
        print(f"corrupt: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
