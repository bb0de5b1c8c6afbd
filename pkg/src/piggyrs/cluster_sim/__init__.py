"""Trace-driven model of cross-rack repair traffic in an erasure-coded cluster."""

from .calibration import Calibration, TraceSpec, generate_trace, load_calibration
from .engine import TrafficReport, simulate, summarize_missing_distribution
from .topology import ClusterTopology, Placement, place_stripes
from .trace import FailureEvent, ingest_trace, write_trace

__all__ = [
    "Calibration",
    "ClusterTopology",
    "FailureEvent",
    "Placement",
    "TraceSpec",
    "TrafficReport",
    "generate_trace",
    "ingest_trace",
    "load_calibration",
    "place_stripes",
    "simulate",
    "summarize_missing_distribution",
    "write_trace",
]
