import json

import numpy as np
import pytest

from motionpi import flash
from motionpi.cli import main
from motionpi.flash import FtlGeometry, KiB, MiB
from motionpi.signal import write_trace

from .conftest import make_trace

SCENARIO = """\
name: cli
seed: 5
days: 1
participants:
  - {participant_id: motionpi001, phone_id: phone-001, rng_seed: 1}
sim: {sample_rate_hz: 8, tick_s: 300}
"""


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "s.yaml").write_text(SCENARIO)
    assert main(["run", "--scenario", str(root / "s.yaml"), "--out", str(root / "run")]) == 0
    return root / "run"


def test_run_writes_artifacts(run_dir):
    report = json.loads((run_dir / "report.json").read_text())
    assert report["consistent"]
    assert (run_dir / "participants" / "motionpi001" / "outbox").is_dir()


def test_report_table_and_summary(run_dir, capsys):
    assert main(["report", "--run", str(run_dir)]) == 0
    out = capsys.readouterr().out
    assert "motionpi001" in out and "consistent=True" in out
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["participants"][0]["inconsistent"] == 0
    assert (run_dir / "summary.txt").read_text() == out


def test_verify_against_store_dump(run_dir, tmp_path, capsys):
    store = run_dir / "server" / "store.jsonl"
    assert main(["verify", "--local", str(run_dir), "--server", str(store), "--json", str(tmp_path / "v.json")]) == 0
    assert "motionpi001: ok" in capsys.readouterr().out
    lines = store.read_text().splitlines()
    doc = json.loads(lines[0])
    doc["payload"] = {"tampered": True}
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join([json.dumps(doc)] + lines[2:]) + "\n")
    assert main(["verify", "--local", str(run_dir / "participants" / "motionpi001"), "--server", str(bad)]) == 1
    out = capsys.readouterr().out
    assert "MISMATCH" in out and "missing_on_server=1" in out and "mismatched=1" in out


def test_verify_without_agent_dir(tmp_path):
    assert main(["verify", "--local", str(tmp_path), "--server", str(tmp_path / "x")]) == 2


def test_bad_scenario_reports_field_path(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("days: 1\nparticipants:\n  - {participant_id: a, phone_id: b, rng_seed: x}\n")
    assert main(["run", "--scenario", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "participants[0].rng_seed" in capsys.readouterr().err


def test_triggers_command(tmp_path, capsys):
    trace = make_trace([(120, "rest"), (600, "vigorous"), (60, "rest")], t0=1_700_000_000.0)
    write_trace(tmp_path / "t.csv", trace)
    assert main(["triggers", "--trace", str(tmp_path / "t.csv"), "--out", str(tmp_path / "trig.txt")]) == 0
    printed = [float(x) for x in capsys.readouterr().out.split()]
    assert len(printed) == 1
    # the first epoch with 20 MVPA bouts closes 20 bouts into the vigorous stretch
    assert printed[0] == pytest.approx(1_700_000_000.0 + 120 + 20 * 15)
    assert (tmp_path / "trig.txt").read_text().split() == [repr(printed[0])]


def test_extract_command(tmp_path, capsys):
    g = FtlGeometry(nor_capacity=256 * KiB, nand_capacity=2 * MiB, fat_offset=64 * KiB)
    img = flash.format(g)
    e = img.create_file("IMU00001.BIN", 18 * 100, 1_700_000_000.0)
    data = np.arange(900, dtype="<i2").tobytes()
    img.append(e, data)
    img.close_file(e)
    nor, nand = img.save(tmp_path / "band")
    assert main(["extract", "--nor", nor, "--nand", nand, "--out", str(tmp_path / "x")]) == 0
    assert "IMU00001.BIN" in capsys.readouterr().out
    assert (tmp_path / "x" / "IMU00001_BIN.bin").read_bytes() == data
    assert (tmp_path / "x" / "IMU00001_BIN.csv").read_text().count("\n") == 101
    open(nor, "r+b").write(b"\0" * 70 * KiB)
    assert main(["extract", "--nor", nor, "--nand", nand, "--out", str(tmp_path / "y")]) == 2
