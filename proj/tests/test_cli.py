import csv
import json
import os
import subprocess
from collections import defaultdict
from pathlib import Path

import pytest

CLI = os.environ.get("TILERT_CLI", "build/tools/tilert")
SOURCE = Path(os.environ.get("TILERT_SOURCE_DIR", Path(__file__).resolve().parents[1]))

PAIR = """\
host_device_bandwidth: 6.0e9
peer_bandwidth: 8.0e9
devices:
  - id: 0
    kind: accelerator
    speed: 1.0e12
    arena_capacity: {arena}
    peer_group: 0
  - id: 1
    kind: accelerator
    speed: 1.0e12
    arena_capacity: {arena}
    peer_group: 0
"""

DEVICE_FIELDS = {
    "device_id", "compt_seconds", "comm_unoverlapped_seconds", "other_seconds", "elapsed_seconds",
    "h2d_bytes", "d2h_bytes", "d2d_in_bytes", "d2d_out_bytes", "tasks_completed", "flops",
    "l1_hits", "l2_hits", "host_fetches", "evictions", "arena_reservations",
}


def run(*args):
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, timeout=600)


@pytest.fixture
def pair(tmp_path):
    path = tmp_path / "pair.yaml"
    path.write_text(PAIR.format(arena=64 * 64 * 8 * 48))
    return path


def test_verify_gemm_on_two_devices(pair):
    r = run("--routine", "gemm", "--n", 512, "--tile-size", 64, "--topology", pair, "--mode", "verify")
    assert r.returncode == 0, r.stderr
    assert "relative error" in r.stdout


@pytest.mark.parametrize("routine", ["syrk", "syr2k", "symm", "trmm", "trsm"])
def test_verify_other_routines(pair, routine):
    r = run("--routine", routine, "--n", 200, "--m", 136, "--k", 90, "--tile-size", 64,
            "--topology", pair, "--uplo", "lower", "--side", "right")
    assert r.returncode == 0, r.stderr


def test_bench_is_reproducible(pair):
    args = ("--routine", "gemm", "--n", 384, "--tile-size", 64, "--topology", pair, "--mode", "bench")
    first, second = run(*args), run(*args)
    assert first.returncode == 0 and second.returncode == 0
    assert first.stdout == second.stdout
    json.loads(first.stdout)


def test_concurrent_mode_verifies(pair):
    r = run("--n", 256, "--tile-size", 64, "--topology", pair, "--exec", "conc")
    assert r.returncode == 0, r.stderr


def test_shipped_configs_load():
    for name in ("single.yaml", "three_gpu.yaml"):
        r = run("--n", 256, "--tile-size", 64, "--topology", SOURCE / "configs" / name)
        assert r.returncode == 0, (name, r.stderr)


def test_missing_topology_file(tmp_path):
    r = run("--n", 64, "--topology", tmp_path / "nope.yaml")
    assert r.returncode == 2


def test_malformed_topology(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("devices:\n  - id: 0\n    kind: quantum\n")
    r = run("--n", 64, "--topology", path)
    assert r.returncode == 2
    assert "line" in r.stderr


def test_bad_arguments():
    assert run("--n", 0).returncode == 3
    assert run("--n", 64, "--routine", "gemv").returncode == 3
    assert run("--tile-size", 8).returncode == 3


def test_arena_too_small_for_streams(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(PAIR.format(arena=64 * 64 * 8 * 2))
    r = run("--n", 256, "--tile-size", 64, "--topology", path)
    assert r.returncode == 2
    assert "cannot hold" in r.stderr


def test_trace_reconstructs_metrics(tmp_path):
    path = tmp_path / "pair.yaml"
    path.write_text(PAIR.format(arena=32 * 32 * 8 * 40))
    metrics_path, trace_path = tmp_path / "m.json", tmp_path / "t.csv"
    r = run("--n", 320, "--k", 192, "--tile-size", 32, "--topology", path, "--mode", "bench",
            "--metrics-out", metrics_path, "--trace-out", trace_path)
    assert r.returncode == 0, r.stderr
    metrics = json.loads(metrics_path.read_text())

    sums = defaultdict(int)
    end = 0.0
    with trace_path.open() as f:
        reader = csv.DictReader(f)
        assert reader.fieldnames == ["time_start", "time_end", "device", "stream", "event",
                                     "bytes_or_flops", "task_id", "k"]
        for row in reader:
            sums[(int(row["device"]), row["event"])] += int(row["bytes_or_flops"])
            if row["event"] != "SYNC":
                end = max(end, float(row["time_end"]))

    assert end == metrics["makespan"]
    assert metrics["l2_hits"] > 0
    for d in metrics["devices"]:
        assert set(d) == DEVICE_FIELDS
        dev = d["device_id"]
        assert sums[(dev, "H2D")] == d["h2d_bytes"]
        assert sums[(dev, "D2H")] == d["d2h_bytes"]
        assert sums[(dev, "D2D")] == d["d2d_in_bytes"]
        assert sums[(dev, "KERNEL")] == d["flops"]
        assert d["other_seconds"] >= 0.0
        total = d["compt_seconds"] + d["comm_unoverlapped_seconds"] + d["other_seconds"]
        assert total == pytest.approx(d["elapsed_seconds"], rel=1e-9)
    assert sum(d["d2d_in_bytes"] for d in metrics["devices"]) == sum(d["d2d_out_bytes"] for d in metrics["devices"])
