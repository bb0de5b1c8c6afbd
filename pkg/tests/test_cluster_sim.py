import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from piggyrs.cluster_sim import (
    ClusterTopology,
    FailureEvent,
    Placement,
    TraceSpec,
    TrafficReport,
    generate_trace,
    ingest_trace,
    load_calibration,
    place_stripes,
    simulate,
    summarize_missing_distribution,
)
from piggyrs.cluster_sim.calibration import batch_loss_probs, block_fill_for, sample_block_lens, split_even
from piggyrs.cluster_sim.trace import flag_events, parse_timestamp, trace_text
from piggyrs.errors import ParseError, PlacementInfeasible, TraceInconsistent, UnknownNode
from piggyrs.stripe_io import BlockSetLayout

T0 = parse_timestamp("2013-02-01T00:00:00Z")
PB = BlockSetLayout(codec="pb", block_size=2)
RS = BlockSetLayout(codec="rs", block_size=2)


def trace_csv(rows):
    return io.StringIO("timestamp,node_id,event\n" + "".join(f"{t},{n},{e}\n" for t, n, e in rows))


# -- topology -------------------------------------------------------------


def test_placement_one_block_per_rack():
    topo = ClusterTopology(20, 5)
    pl = place_stripes(topo, 5000, 14, seed=1, chunk=777)
    racks = pl.nodes // 5
    assert all(len(set(row)) == 14 for row in racks.tolist())
    assert pl.nodes.min() >= 0 and pl.nodes.max() < topo.nodes


def test_placement_is_uniform():
    topo = ClusterTopology(20, 5)
    pl = place_stripes(topo, 20_000, 14, seed=2)
    counts = pl.blocks_per_node(topo.nodes)
    expected = 20_000 * 14 / topo.nodes
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # 99 degrees of freedom; the 0.999 quantile is about 149
    assert chi2 < 149


def test_blocks_on_index():
    topo = ClusterTopology(15, 2)
    pl = place_stripes(topo, 300, 14, seed=3)
    for node in range(topo.nodes):
        ids = pl.blocks_on(node)
        assert (pl.nodes.ravel()[ids] == node).all()
    assert sum(pl.blocks_on(n).size for n in range(topo.nodes)) == 300 * 14


def test_placement_infeasible():
    with pytest.raises(PlacementInfeasible):
        place_stripes(ClusterTopology(10, 3), 5, 14, seed=0)


def test_scaled_topology():
    desk = ClusterTopology(100, 30).scaled(100, min_racks=15)
    assert (desk.racks, desk.nodes_per_rack) == (15, 2)


# -- traces ---------------------------------------------------------------


def test_ingest_and_flag():
    events = ingest_trace(trace_csv([
        ("2013-02-01T00:00:00Z", 3, "down"),
        ("2013-02-01T00:10:00Z", 3, "up"),
        ("2013-02-01T01:00:00Z", 4, "down"),
        ("2013-02-01T01:15:00Z", 4, "up"),
        ("2013-02-01T02:00:00Z", 5, "down"),
    ]))
    flagged = [(e.node, e.flagged) for e in events if e.kind == "down"]
    assert flagged == [(3, False), (4, True), (5, True)]


@pytest.mark.parametrize("body,line", [
    ("timestamp,node,event\n", 1),
    ("timestamp,node_id,event\n2013-02-01T00:00:00Z,1,down\nnot-a-time,1,up\n", 3),
    ("timestamp,node_id,event\n2013-02-01T00:00:00Z,x,down\n", 2),
    ("timestamp,node_id,event\n2013-02-01T00:00:00Z,1,sideways\n", 2),
    ("timestamp,node_id,event\n2013-02-01T00:00:00Z,1\n", 2),
])
def test_parse_errors_carry_line(body, line):
    with pytest.raises(ParseError) as info:
        ingest_trace(io.StringIO(body))
    assert info.value.line == line


def test_inconsistent_traces():
    with pytest.raises(TraceInconsistent):
        flag_events([FailureEvent(T0, 1, "down"), FailureEvent(T0 + 5, 1, "down")])
    with pytest.raises(TraceInconsistent):
        flag_events([FailureEvent(T0, 1, "up")])


def test_trace_round_trip():
    topo = ClusterTopology(20, 3)
    events = generate_trace(TraceSpec(days=2, median_daily_failures=6, seed=4), topo, 14)
    again = ingest_trace(io.StringIO(trace_text(events)))
    assert again == events


@given(st.integers(0, 10_000), st.integers(1, 20))
def test_generated_traces_alternate(seed, failures):
    topo = ClusterTopology(20, 3)
    events = generate_trace(TraceSpec(days=2, median_daily_failures=failures, seed=seed), topo, 14)
    flag_events(events)
    per_day = [sum(e.flagged and int((e.timestamp - T0) // 86400) == d for e in events) for d in range(2)]
    lo, hi = math.floor(failures * 0.75), math.ceil(failures * 1.25)
    assert all(lo <= c <= hi for c in per_day)


def test_generation_deterministic():
    topo = ClusterTopology(20, 3)
    spec = TraceSpec(days=3, median_daily_failures=10, seed=9)
    assert generate_trace(spec, topo, 14) == generate_trace(spec, topo, 14)


# -- calibration helpers --------------------------------------------------


def test_batch_loss_probs_against_monte_carlo():
    rng = np.random.default_rng(0)
    racks, npr, width, f = 20, 3, 14, 4
    p1, p2, p3 = batch_loss_probs(racks, npr, width, f)
    trials = 200_000
    stripe_racks = np.argsort(rng.random((trials, racks)), axis=1)[:, :width]
    hit = (stripe_racks < f) & (rng.integers(0, npr, (trials, width)) == 0)
    lost = hit.sum(axis=1)
    for p, observed in ((p1, (lost == 1).mean()), (p2, (lost == 2).mean()), (p3, (lost >= 3).mean())):
        assert abs(p - observed) < 4 * math.sqrt(p * (1 - p) / trials) + 1e-4


def test_split_even():
    assert split_even(7, 3) == [3, 2, 2]
    assert sum(split_even(52, 9)) == 52


def test_block_fill_from_targets():
    targets = {"missing_distribution": [98.08, 1.87, 0.05], "repairs_per_day": 95_500, "rs_tb_per_day": 180}
    assert block_fill_for(targets, 10, 256 << 20) == pytest.approx(0.716, abs=1e-3)


def test_sample_block_lens_mean():
    lens = sample_block_lens(200_000, 1000, 0.7, np.random.default_rng(1))
    assert (lens % 2 == 0).all() and lens.min() >= 2 and lens.max() == 1000
    assert lens.mean() == pytest.approx(700, rel=0.01)


# -- engine ---------------------------------------------------------------


def fixed_placement(rows, block_len=100):
    return Placement(np.array(rows, dtype=np.int32), np.full(len(rows), block_len, dtype=np.int64))


def test_single_failure_costs():
    topo = ClusterTopology(14, 2)
    rows = [[2 * i for i in range(14)], [2 * i + 1 for i in range(14)]]
    pl = fixed_placement(rows)
    events = flag_events([FailureEvent(T0, 0, "down"), FailureEvent(T0 + 3600, 0, "up")])
    report = simulate(topo, pl, events, PB)
    day = report.days[0]
    assert (day.blocks_repaired, day.rs_bytes, day.pb_bytes) == (1, 1000, 700)
    assert day.pb_flat30_bytes == 700
    assert day.unavailable_machines == 1
    events = flag_events([FailureEvent(T0, 26, "down"), FailureEvent(T0 + 3600, 26, "up")])
    day = simulate(topo, pl, events, PB).days[0]
    assert (day.rs_bytes, day.pb_bytes, day.pb_flat30_bytes) == (1000, 1000, 700)


def test_short_outage_not_repaired():
    topo = ClusterTopology(14, 2)
    pl = fixed_placement([[2 * i for i in range(14)]])
    events = flag_events([FailureEvent(T0, 0, "down"), FailureEvent(T0 + 899, 0, "up")])
    report = simulate(topo, pl, events, PB)
    assert report.totals()["blocks_repaired"] == 0


def test_batch_multi_failure_costs_k_blocks_once():
    topo = ClusterTopology(14, 2)
    pl = fixed_placement([[2 * i for i in range(14)]])
    events = flag_events([FailureEvent(T0, n, "down") for n in (0, 2, 4)])
    day = simulate(topo, pl, events, PB).days[0]
    assert day.blocks_repaired == 3
    assert day.rs_bytes == day.pb_bytes == day.pb_flat30_bytes == 1000
    assert day.missing == {"1": 0, "2": 0, "3+": 1}


def test_rs_and_pb_models_agree_on_rs_bytes():
    topo = ClusterTopology(20, 3)
    pl = place_stripes(topo, 2000, 14, seed=5, block_len=64)
    events = generate_trace(TraceSpec(days=3, median_daily_failures=4, seed=5), topo, 14)
    a = simulate(topo, pl, events, PB)
    b = simulate(topo, pl, events, RS)
    assert [d.rs_bytes for d in a.days] == [d.rs_bytes for d in b.days]
    assert a.totals()["pb_bytes"] == b.totals()["pb_bytes"]


def test_unknown_node():
    topo = ClusterTopology(14, 1)
    pl = fixed_placement([list(range(14))])
    with pytest.raises(UnknownNode):
        simulate(topo, pl, flag_events([FailureEvent(T0, 99, "down")]), PB)


def test_empty_trace_report():
    topo = ClusterTopology(14, 1)
    report = simulate(topo, fixed_placement([list(range(14))]), [], PB)
    assert report.days == [] and report.summary()["median_rs_tb"] == 0.0
    assert summarize_missing_distribution(report) == (0.0, 0.0, 0.0)


def test_report_round_trip_and_csv():
    topo = ClusterTopology(20, 3)
    pl = place_stripes(topo, 500, 14, seed=6, block_len=64)
    events = generate_trace(TraceSpec(days=2, median_daily_failures=5, seed=6), topo, 14)
    report = simulate(topo, pl, events, PB)
    again = TrafficReport.from_json(report.to_json())
    assert again.dumps() == report.dumps()
    header = report.to_csv().splitlines()[0].split(",")
    assert header[:6] == ["day", "unavailable_machines", "blocks_repaired", "rs_bytes", "pb_bytes", "savings_bytes"]
    assert report.days[0].day == "2013-02-01"


def test_bundled_calibration_loads():
    cal = load_calibration()
    assert cal.layout.groups == ((0, 1, 2, 3), (4, 5, 6), (7, 8, 9))
    assert cal.topology.nodes == 3000
    desk = cal.desk()
    assert desk.topology.nodes == 30 and desk.blocks_per_node == cal.blocks_per_node


def test_desk_run_is_deterministic():
    cal = load_calibration().desk()
    assert cal.run().dumps() == cal.run().dumps()
