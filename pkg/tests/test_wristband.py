import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from motionpi.flash import FtlGeometry, KiB, MiB, mount_and_extract
from motionpi.flash import records
from motionpi.signal import TriggerConfig, batch_triggers
from motionpi.wristband import (
    BandCommand, BandConfig, BandError, BandNotification, BleChannel, EnmoValue,
    NotificationKind, ProtocolError, Wristband,
)
from tests import oracles
from tests.conftest import make_trace

T0 = 1_700_000_000.0
MAC = "C0:FF:EE:00:00:01"


def started(band=None, t0=T0):
    band = band or Wristband(MAC, "left")
    band.handle_command(BandCommand.set_participant_id("motionpi088"))
    band.handle_command(BandCommand.set_time(t0))
    band.handle_command(BandCommand.start_collection())
    return band


def mvpa_notes(notes):
    return [n for n in notes if n.kind == NotificationKind.MVPA_EPOCH]


def test_start_opens_two_session_files():
    band = started()
    assert band.collecting
    assert [f.name for f in band.files] == ["IMU00001.BIN", "PPG00001.BIN"]
    assert band.files[0].size == 3600 * 32 * 18


def test_start_without_id_is_error():
    band = Wristband(MAC)
    band.handle_command(BandCommand.set_time(T0))
    with pytest.raises(BandError):
        band.handle_command(BandCommand.start_collection())


def test_erase_storage_idle_and_refused_while_collecting():
    band = started()
    with pytest.raises(BandError):
        band.handle_command(BandCommand.erase_storage())
    band.handle_command(BandCommand.stop_collection())
    erases = band.image.nand.total_erases
    band.handle_command(BandCommand.erase_storage())
    assert band.files == []
    assert band.image.nand.total_erases - erases == band.image.nand.num_blocks


def test_seven_minutes_vigorous_one_notification_at_28th_bout():
    band = started()
    trace = make_trace([(420, 1.15)], t0=T0)
    notes = band.ingest_samples(trace)
    assert [n.t for n in mvpa_notes(notes)] == [T0 + 420.0]
    assert oracles.triggers(trace.t.tolist(), trace.ax.tolist(), trace.ay.tolist(), trace.az.tolist(),
                            T0, T0 + 420.0) == [T0 + 420.0]
    enmo = [n for n in notes if n.kind == NotificationKind.ENMO_SUMMARY]
    assert len(enmo) == 28 and all(n.value.is_mvpa for n in enmo)


def test_stationary_no_notifications():
    band = started()
    notes = band.ingest_samples(make_trace([(420, 1.0)], t0=T0))
    assert mvpa_notes(notes) == []


def test_fourteen_minutes_vigorous_is_edge_triggered():
    band = started()
    notes = []
    trace = make_trace([(840, "vigorous")], t0=T0, seed=4)
    for i in range(0, len(trace), 1000):
        notes += band.ingest_samples(trace.slice(i, i + 1000))
    assert len(mvpa_notes(notes)) == 1
    expected = oracles.triggers(trace.t.tolist(), trace.ax.tolist(), trace.ay.tolist(), trace.az.tolist(),
                                T0, float(trace.t[-1]) + 1 / 32)
    assert [n.t for n in mvpa_notes(notes)] == expected


def test_ingest_requires_collection():
    band = Wristband(MAC)
    with pytest.raises(BandError):
        band.ingest_samples(make_trace([(1, 1.0)]))


def test_bytes_written_and_extracted_sample_count():
    band = started()
    trace = make_trace([(75, "walk")], t0=T0, seed=1)
    band.ingest_samples(trace)
    imu = band.files[0]
    assert imu.write_cursor == 18 * len(trace)
    band.handle_command(BandCommand.stop_collection())
    files = {f.entry.name: f for f in mount_and_extract(band.image.dump_nor(), band.image.dump_nand())}
    assert len(files["IMU00001.BIN"].data) // records.IMU_RECORD_BYTES == len(trace)
    assert len(files["PPG00001.BIN"].data) // records.PPG_RECORD_BYTES == 2 * len(trace)
    decoded = records.decode_imu(files["IMU00001.BIN"].data)
    np.testing.assert_allclose(decoded[:, 2], trace.az, atol=records.ACCEL_LSB_G)


def test_session_files_chain_hourly():
    cfg = BandConfig(session_file_seconds=60.0)
    band = started(Wristband(MAC, config=cfg))
    band.ingest_samples(make_trace([(150, 1.0)], t0=T0))
    names = [f.name for f in band.files]
    assert names == ["IMU00001.BIN", "PPG00001.BIN", "IMU00002.BIN", "PPG00002.BIN",
                     "IMU00003.BIN", "PPG00003.BIN"]
    band.handle_command(BandCommand.stop_collection())
    got = mount_and_extract(band.image.dump_nor(), band.image.dump_nand())
    imu_bytes = sum(len(f.data) for f in got if f.entry.name.startswith("IMU"))
    assert imu_bytes == 150 * 32 * 18


def test_storage_full_stops_collection():
    geo = FtlGeometry(nor_capacity=256 * KiB, nand_capacity=1 * MiB, fat_offset=64 * KiB)
    band = started(Wristband(MAC, config=BandConfig(geometry=geo, session_file_seconds=60.0)))
    notes = []
    trace = make_trace([(1200, 1.0)], t0=T0)
    for i in range(0, len(trace), 32 * 30):
        if not band.collecting:
            break
        notes += band.ingest_samples(trace.slice(i, i + 32 * 30))
    storage = [n for n in notes if n.kind == NotificationKind.STORAGE_LEVEL]
    assert storage[-1].value == 100.0
    assert not band.collecting
    assert [n.value for n in storage[:-1]] == sorted(n.value for n in storage[:-1])


def test_battery_drain_ten_hours():
    band = Wristband(MAC)
    for _ in range(10):
        band.tick_battery(3600.0)
    assert band.battery_pct == pytest.approx(70.0, abs=1e-12)


def test_battery_crossing_emits_once():
    band = Wristband(MAC, battery_pct=21.0)
    notes = band.tick_battery(1800.0)   # 19.5
    assert [n.kind for n in notes] == [NotificationKind.BATTERY_LEVEL]
    assert band.tick_battery(1800.0) == []
    assert band.tick_battery(3600.0) == []
    band.set_charging(True, level_pct=90.0)
    band.set_charging(False)
    assert band.tick_battery(3600.0 * 24) != []


def test_battery_crossing_exactly_twenty():
    band = Wristband(MAC, battery_pct=23.0)
    assert band.tick_battery(3600.0) == []  # exactly 20.0 is not below
    assert len(band.tick_battery(1.0)) == 1


def test_advance_closes_silent_bouts():
    band = started()
    notes = band.advance(T0 + 60.0)
    assert len(notes) == 4 and all(n.value.dropout for n in notes)


@pytest.mark.parametrize("cmd", [
    BandCommand.start_collection(), BandCommand.stop_collection(), BandCommand.erase_storage(),
    BandCommand.set_participant_id("motionpi088"), BandCommand.set_time(T0 + 0.25),
])
def test_command_wire_round_trip(cmd):
    raw = cmd.encode()
    assert raw[0] == cmd.kind
    assert BandCommand.decode(raw) == cmd


@pytest.mark.parametrize("note", [
    BandNotification(NotificationKind.MVPA_EPOCH, T0, True),
    BandNotification(NotificationKind.BATTERY_LEVEL, T0, 19.5),
    BandNotification(NotificationKind.STORAGE_LEVEL, T0, 42.0),
    BandNotification(NotificationKind.CHARGING_STATUS, T0, False),
    BandNotification(NotificationKind.ENMO_SUMMARY, T0, EnmoValue(T0 - 15, 0.123, True, 480, False)),
])
def test_notification_wire_round_trip(note):
    assert BandNotification.decode(note.encode()) == note


def test_wire_errors():
    with pytest.raises(ProtocolError):
        BandCommand.decode(b"\x7f")
    with pytest.raises(ProtocolError):
        BandCommand.decode(b"\x01\x00")
    with pytest.raises(ProtocolError):
        BandCommand.set_participant_id("x" * 40).encode()
    with pytest.raises(ProtocolError):
        BandNotification.decode(b"\x81\x00")


def test_channel_carries_bytes():
    ch = BleChannel()
    band = Wristband(MAC)
    ch.send_command(BandCommand.set_participant_id("motionpi088"))
    ch.send_command(BandCommand.set_time(T0))
    ch.send_command(BandCommand.start_collection())
    for raw in list(ch.to_band):
        band.handle_command(raw)
    ch.to_band.clear()
    ch.notify(band.ingest_samples(make_trace([(420, 1.15)], t0=T0)))
    notes = ch.take_notifications()
    assert sum(n.kind == NotificationKind.MVPA_EPOCH for n in notes) == 1


def test_streaming_equals_batch_notifications():
    trace = make_trace([(200, "rest"), (500, "vigorous"), (300, "walk"), (450, "vigorous")], t0=T0, seed=8)
    a = started()
    whole = a.ingest_samples(trace)
    b = started(Wristband("C0:FF:EE:00:00:02", "right"))
    parts = []
    for i in range(0, len(trace), 777):
        parts += b.ingest_samples(trace.slice(i, i + 777))
    def signal_notes(notes):
        return [(n.kind, n.t, n.value) for n in notes if n.kind != NotificationKind.STORAGE_LEVEL]
    assert signal_notes(whole) == signal_notes(parts)
    assert [n.t for n in mvpa_notes(whole)] == batch_triggers(trace, TriggerConfig(), start_t=T0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from(["start", "stop", "data", "tick"]), max_size=15), st.integers(0, 1000))
def test_no_mvpa_notification_while_idle(ops, seed):
    band = Wristband(MAC)
    band.handle_command(BandCommand.set_participant_id("motionpi088"))
    band.handle_command(BandCommand.set_time(T0))
    t = T0
    for op in ops:
        if op == "start":
            if not band.collecting:
                band.handle_command(BandCommand.set_time(t))
            band.handle_command(BandCommand.start_collection())
        elif op == "stop":
            notes = band.handle_command(BandCommand.stop_collection())
        elif op == "data":
            if band.collecting:
                tr = make_trace([(450, "vigorous")], t0=t, seed=seed)
                notes = band.ingest_samples(tr)
                assert all(band.collecting or n.kind != NotificationKind.MVPA_EPOCH for n in notes)
            else:
                with pytest.raises(BandError):
                    band.ingest_samples(make_trace([(1, 1.0)], t0=t))
            t += 451
        else:
            band.tick_battery(60.0)
        if not band.collecting:
            assert band.advance(t + 1000) == []
            t += 1000
