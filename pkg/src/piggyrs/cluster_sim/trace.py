"""Machine-unavailability traces: CSV ingestion, validation and flagging.

CSV layout: header ``timestamp,node_id,event``; timestamps are ISO-8601
UTC, ``event`` is ``down`` or ``up``. A machine counts as failed (and its
blocks get repaired) once it has been down for ``threshold`` seconds.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, TextIO, Union

from ..errors import ParseError, TraceInconsistent

FLAG_THRESHOLD_S = 15 * 60
HEADER = ["timestamp", "node_id", "event"]


@dataclass(frozen=True)
class FailureEvent:
    timestamp: float  # UTC seconds since the epoch
    node: int
    kind: str  # "down" | "up"
    flagged: bool = False  # down events lasting >= threshold

    @property
    def flag_time(self) -> float:
        return self.timestamp + FLAG_THRESHOLD_S


def parse_timestamp(text: str) -> float:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.timestamp()


def format_timestamp(seconds: float) -> str:
    ts = datetime.fromtimestamp(seconds, tz=timezone.utc)
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def flag_events(events: list[FailureEvent], threshold: float = FLAG_THRESHOLD_S) -> list[FailureEvent]:
    """Validate alternation per node and mark downs that reach ``threshold``.

    A down with no matching up stays unavailable for good and is flagged.
    """
    events = sorted(events, key=lambda e: e.timestamp)
    open_downs: dict[int, int] = {}
    flagged: set[int] = set()
    for pos, ev in enumerate(events):
        if ev.kind == "down":
            if ev.node in open_downs:
                raise TraceInconsistent(f"node {ev.node} goes down twice without coming up")
            open_downs[ev.node] = pos
        elif ev.kind == "up":
            start = open_downs.pop(ev.node, None)
            if start is None:
                raise TraceInconsistent(f"node {ev.node} comes up without having gone down")
            if ev.timestamp - events[start].timestamp >= threshold:
                flagged.add(start)
        else:
            raise TraceInconsistent(f"unknown event kind {ev.kind!r}")
    flagged.update(open_downs.values())
    return [
        FailureEvent(ev.timestamp, ev.node, ev.kind, ev.kind == "down" and pos in flagged)
        for pos, ev in enumerate(events)
    ]


def _lines(source) -> Iterable[str]:
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            yield from fh
    else:
        yield from source


def ingest_trace(source: Union[str, Path, TextIO, Iterable[str]], threshold: float = FLAG_THRESHOLD_S) -> list[FailureEvent]:
    events = []
    reader = csv.reader(_lines(source))
    header_seen = False
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if not header_seen:
            if [c.strip() for c in row] != HEADER:
                raise ParseError(lineno, f"expected header {','.join(HEADER)}")
            header_seen = True
            continue
        if len(row) != 3:
            raise ParseError(lineno, f"expected 3 fields, got {len(row)}")
        stamp, node, kind = (c.strip() for c in row)
        try:
            ts = parse_timestamp(stamp)
        except ValueError:
            raise ParseError(lineno, f"bad timestamp {stamp!r}") from None
        try:
            node_id = int(node)
        except ValueError:
            raise ParseError(lineno, f"bad node id {node!r}") from None
        if node_id < 0:
            raise ParseError(lineno, f"bad node id {node!r}")
        if kind not in ("down", "up"):
            raise ParseError(lineno, f"event must be 'down' or 'up', got {kind!r}")
        events.append(FailureEvent(ts, node_id, kind))
    return flag_events(events, threshold)


def write_trace(events: Iterable[FailureEvent], dest: Union[str, Path, TextIO]) -> None:
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for ev in events:
            w.writerow([format_timestamp(ev.timestamp), ev.node, ev.kind])

    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            _write(fh)
    else:
        _write(dest)


def trace_text(events: Iterable[FailureEvent]) -> str:
    buf = io.StringIO()
    write_trace(events, buf)
    return buf.getvalue()
