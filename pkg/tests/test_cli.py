import json
import os
import subprocess
import sys

import pytest

from piggyrs.cli import main

KB64 = str(64 * 1024)


@pytest.fixture
def encoded(tmp_path):
    src = tmp_path / "f.bin"
    src.write_bytes(os.urandom(700_000))
    assert main(["encode", str(src), "--out", str(tmp_path / "o"), "--codec", "pb", "--block-size", KB64]) == 0
    return tmp_path, src


def stripe_manifest(tmp, n=0):
    return str(tmp / "o" / f"f.bin.s{n:05d}.manifest.json")


def test_encode_reports_overhead(tmp_path, capsys):
    src = tmp_path / "f"
    src.write_bytes(os.urandom(1 << 20))
    assert main(["encode", str(src), "--out", str(tmp_path / "o"), "--block-size", KB64, "--format", "json"]) == 0
    out = capsys.readouterr()
    doc = json.loads(out.out)
    assert doc["overhead"] == 1.4 and doc["stripes"] == 2
    assert "1.4x" in out.err


def test_encode_empty(tmp_path, capsys):
    src = tmp_path / "e"
    src.write_bytes(b"")
    assert main(["encode", str(src), "--out", str(tmp_path / "o"), "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["stripes"] == 0


def test_repair_ratio_and_decode(encoded, capsys):
    tmp, src = encoded
    block = tmp / "o" / "f.bin.s00000.0.blk"
    original = block.read_bytes()
    block.unlink()
    capsys.readouterr()
    assert main(["repair", stripe_manifest(tmp), "--index", "0", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["ledger"]["ratio"] == 0.7
    assert block.read_bytes() == original
    (tmp / "o" / "f.bin.s00001.3.blk").unlink()
    assert main(["decode", str(tmp / "o" / "f.bin.file.json"), "--out", str(tmp / "back")]) == 0
    assert (tmp / "back").read_bytes() == src.read_bytes()


def test_rs_ratio_one(tmp_path, capsys):
    src = tmp_path / "f"
    src.write_bytes(os.urandom(200_000))
    main(["encode", str(src), "--out", str(tmp_path / "o"), "--block-size", KB64])
    (tmp_path / "o" / "f.s00000.2.blk").unlink()
    capsys.readouterr()
    assert main(["repair", str(tmp_path / "o" / "f.s00000.manifest.json"), "--index", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["ledger"]["ratio"] == 1.0


def test_repair_unrecoverable(encoded):
    tmp, _ = encoded
    for i in range(5):
        (tmp / "o" / f"f.bin.s00000.{i}.blk").unlink()
    assert main(["repair", stripe_manifest(tmp), "--index", "0"]) == 3


def test_verify(encoded, capsys):
    tmp, _ = encoded
    assert main(["verify", stripe_manifest(tmp)]) == 0
    path = tmp / "o" / "f.bin.s00000.12.blk"
    data = bytearray(path.read_bytes())
    data[7] ^= 0x40
    path.write_bytes(bytes(data))
    capsys.readouterr()
    assert main(["verify", stripe_manifest(tmp), "--format", "json"]) == 5
    doc = json.loads(capsys.readouterr().out)
    assert doc["crc_mismatch"] == [12]
    assert doc["violations"] == [{"offset": 7, "parity": 2, "substripe": "b"}]


def test_usage_errors(tmp_path):
    src = tmp_path / "f"
    src.write_bytes(b"x")
    assert main(["encode", str(src), "--k", "0"]) == 2
    assert main(["encode", str(src), "--codec", "pb", "--partition", "0,1;1,2"]) == 2
    assert main(["encode", str(src), "--codec", "pb", "--partition", "a;b"]) == 2
    with pytest.raises(SystemExit) as info:
        main(["encode"])
    assert info.value.code == 2


def test_io_error(tmp_path):
    assert main(["encode", str(tmp_path / "missing")]) == 1
    assert main(["repair", str(tmp_path / "missing.json"), "--index", "0"]) == 1


def test_gen_trace_then_simulate(tmp_path, capsys):
    trace = tmp_path / "t.csv"
    assert main(["gen-trace", "--days", "2", "--seed", "3", "--racks", "20", "--nodes-per-rack", "3",
                 "--median-daily-failures", "5", "--out", str(trace)]) == 0
    args = ["simulate", "--trace", str(trace), "--racks", "20", "--nodes-per-rack", "3",
            "--blocks-per-node", "50", "--seed", "1"]
    assert main(args + ["--out", str(tmp_path / "a.json"), "--csv", str(tmp_path / "a.csv")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()
    assert (tmp_path / "a.csv").read_text().startswith("day,unavailable_machines,blocks_repaired")
    capsys.readouterr()
    assert main(["report", str(tmp_path / "a.json"), "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["days"] == 2


def test_simulate_zero_days(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["simulate", "--days", "0", "--out", str(out), "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["days"] == 0
    assert json.loads(out.read_text())["days"] == []


def test_simulate_trace_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,node_id,event\n2013-02-01T00:00:00Z,1,down\n2013-02-01T00:00:00Z,oops,up\n")
    assert main(["simulate", "--trace", str(bad)]) == 4
    assert "line 3" in capsys.readouterr().err


def test_simulate_config_error():
    assert main(["simulate", "--racks", "5", "--days", "1"]) == 2


def test_simulate_calibration_desk(capsys):
    assert main(["simulate", "--calibration", "--desk", "--format", "json"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["median_savings_flat30_tb"] > 50


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "piggyrs", "simulate", "--days", "0", "--format", "json"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    json.loads(proc.stdout)
