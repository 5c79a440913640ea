import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from motionpi.agent import AgentConfig, PhoneAgent
from motionpi.agent.agent import Backoff, compare_records
from motionpi.agent.crypto import GpsCipher, GpsDecryptError
from motionpi.agent.outbox import Outbox, OutboxError
from motionpi.agent.records import DataRecord, RecordError
from motionpi.agent.transport import ConnectionRefused, ConnectionReset, HttpResult, RequestTimeout
from motionpi.ema import EventKind
from motionpi.wristband.protocol import BandNotification, EnmoValue, NotificationKind

from .helpers import FakeClock, new_service

KEY = "11" * 32


class FlakyTransport:
    """Forwards to an in-process service; ``mode`` injects one failure kind."""

    def __init__(self, service):
        self.service = service
        self.mode = None
        self.calls = []

    def request(self, method, path, headers, body=b""):
        self.calls.append((method, path))
        if self.mode == "refuse":
            raise ConnectionRefused("refused")
        if self.mode == "timeout_after":
            self.service.handle(method, path, headers, body)
            raise RequestTimeout("response lost")
        if self.mode == "reset":
            raise ConnectionReset("reset")
        r = self.service.handle(method, path, headers, body)
        return HttpResult(r.status, r.body)


def make_agent(tmp_path, transport=None, clock=None, **cfg):
    clock = clock or FakeClock()
    counter = iter(range(10**9))
    conf = AgentConfig(participant_id="motionpi001", phone_id="phone-1", aes_key_hex=KEY, **cfg)
    agent = PhoneAgent(conf, tmp_path / "outbox", transport, clock=clock, rng=random.Random(1),
                       iv_source=lambda n: bytes([next(counter) % 256]) * n)
    return agent, clock


@pytest.fixture
def online(tmp_path):
    svc, clock = new_service()
    tr = FlakyTransport(svc)
    agent, _ = make_agent(tmp_path, tr, clock)
    return agent, svc, tr, clock


@settings(max_examples=200, deadline=None)
@given(lat=st.floats(-90, 90), lon=st.floats(-180, 180))
def test_gps_round_trip_exact(lat, lon):
    c = GpsCipher.from_hex(KEY, "k1")
    assert c.decrypt(c.encrypt(lat, lon)) == (lat, lon)


def test_gps_fresh_iv_and_key_checks():
    c = GpsCipher.from_hex(KEY, "k1")
    a, b = c.encrypt(47.5, 8.25), c.encrypt(47.5, 8.25)
    assert a["iv"] != b["iv"] and a["ciphertext"] != b["ciphertext"]
    with pytest.raises(GpsDecryptError):
        GpsCipher.from_hex("22" * 32, "k1").decrypt(a)
    with pytest.raises(GpsDecryptError):
        GpsCipher.from_hex(KEY, "k2").decrypt(a)
    with pytest.raises(ValueError):
        c.encrypt(91.0, 0.0)
    with pytest.raises(ValueError):
        GpsCipher(b"short", "k1")


def test_gps_record_has_no_plaintext(tmp_path):
    agent, _ = make_agent(tmp_path)
    rec = agent.record_gps(47.376887, 8.541694, t=1_700_000_100.0)
    agent.close()
    raw = "".join(p.read_text() for p in (tmp_path / "outbox").glob("gps-*.log"))
    assert rec.record_id in raw
    assert "47.376887" not in raw and "8.541694" not in raw
    assert agent.cipher.decrypt(rec.payload) == (47.376887, 8.541694)


def test_record_build_rejects_bad_values(tmp_path):
    agent, _ = make_agent(tmp_path)
    with pytest.raises(RecordError):
        agent.record("battery", {"phone_pct": 50.0, "bands": []}, t="2024-01-01")
    with pytest.raises(RecordError):
        agent.record("battery", {"phone_pct": 150.0, "bands": []}, t=1_700_000_100.0)
    with pytest.raises(RecordError):
        agent.record("weather", {}, t=1_700_000_100.0)
    assert agent.outbox.pending_count() == 0


def test_outbox_layout_and_restart(tmp_path):
    agent, clock = make_agent(tmp_path, utc_offset_s=3600.0)
    day = 1_700_000_000.0
    ids = [agent.record_battery(t=day + i * 3600).record_id for i in range(30)]
    agent.record_gps(1.0, 2.0, t=day + 5)
    agent.outbox.mark_uploaded(ids[:10])
    agent.close()
    names = sorted(p.name for p in (tmp_path / "outbox").iterdir())
    assert "uploaded.idx" in names
    logs = [n for n in names if n.endswith(".log")]
    # first record is 23:13 local, so 30 hourly records touch three local days
    assert sum(n.startswith("battery-") for n in logs) == 3
    assert sum(n.startswith("gps-") for n in logs) == 1
    again = Outbox(tmp_path / "outbox", 3600.0)
    assert list(again.pending["battery"]) == ids[10:]
    assert again.counts["battery"] == 30 and again.counts["gps"] == 1
    first = json.loads(open(again.data_files()[0]).readline())
    assert list(first) == ["record_id", "record_type", "participant_id", "phone_id", "username", "timestamp",
                           "payload"]


def test_outbox_unwritable_raises(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutboxError):
        Outbox(blocker / "outbox")


def test_upload_acks_and_token_reuse(online):
    agent, svc, tr, clock = online
    for i in range(7):
        agent.record_battery(t=clock() + i)
    assert agent.upload_pending() == 7
    assert agent.outbox.pending_count() == 0
    assert svc.store.count() == 7
    agent.record_battery(t=clock() + 100)
    agent.upload_pending()
    assert [c for c in tr.calls if c[1] == "/signup"] == [("POST", "/signup")]
    assert agent.stats["signups"] == 1


def test_token_survives_restart(online, tmp_path):
    agent, svc, tr, clock = online
    agent.record_battery(t=clock())
    agent.upload_pending()
    agent.close()
    again, _ = make_agent(tmp_path, tr, clock)
    assert again.token == agent.token
    again.record_battery(t=clock() + 1)
    again.upload_pending()
    assert sum(1 for c in tr.calls if c[1] == "/signup") == 1


def test_expired_token_triggers_single_reauth(online):
    agent, svc, tr, clock = online
    agent.record_battery(t=clock())
    agent.upload_pending()
    # server secret rotated: the cached token is refused once
    svc.tokens._secret = "f" * 64
    agent.record_battery(t=clock() + 1)
    assert agent.upload_pending() == 1
    assert agent.stats["reauths"] == 1
    assert sum(1 for c in tr.calls if c[1] == "/signup") == 2


def test_persistent_401_backs_off(online):
    agent, svc, tr, clock = online
    agent.record_battery(t=clock())
    agent.upload_pending()
    agent.record_battery(t=clock() + 1)
    orig = svc.tokens.verify
    svc.tokens.verify = lambda tok: (_ for _ in ()).throw(__import__("motionpi").backend.TokenError("no"))
    assert agent.upload_pending() == 0
    assert agent.backoff.failures == 1
    assert agent.outbox.pending_count() == 1
    svc.tokens.verify = orig


@pytest.mark.parametrize("mode", ["refuse", "timeout_after", "reset"])
def test_transport_failures_keep_records_pending(online, mode):
    agent, svc, tr, clock = online
    agent.record_battery(t=clock())
    agent.authenticate()
    tr.mode = mode
    assert agent.upload_pending() == 0
    assert agent.outbox.pending_count() == 1
    assert not agent.backoff.ready(clock())
    tr.mode = None
    clock.advance(1000)
    assert agent.upload_pending() == 1
    assert svc.store.count() == 1


def test_offline_agent_only_records(tmp_path):
    agent, clock = make_agent(tmp_path)
    agent.record_battery(t=clock())
    assert agent.upload_pending() == 0
    assert agent.authenticate() is None
    assert agent.outbox.pending_count() == 1


def test_rejected_records_are_dead_lettered(online):
    agent, svc, tr, clock = online
    good = agent.record_battery(t=clock())
    bad = DataRecord(agent.new_id(), "battery", "motionpi001", "phone-1", 1_700_000_000, {"phone_pct": 5.0, "bands": []})
    agent.outbox.append(bad)
    agent.upload_pending()
    assert agent.outbox.pending_count() == 0
    assert bad.record_id in agent.outbox.dead and good.record_id in agent.outbox.uploaded
    [dl] = agent.outbox.dead_letters()
    assert dl["record"]["record_id"] == bad.record_id and "timestamp" in dl["reason"]
    report = agent.verify_consistency()
    assert report.ok and report.dead_lettered == [bad.record_id]


def test_backoff_schedule_is_capped_with_jitter():
    b = Backoff(1.0, 2.0, 10.0, random.Random(0))
    delays = [b.fail(0.0) for _ in range(8)]
    for k, d in enumerate(delays):
        nominal = min(10.0, 2.0 ** k)
        assert nominal / 2 <= d <= nominal
    b.reset()
    assert b.ready(-1e18)


def test_consistency_detects_each_fault(online):
    agent, svc, tr, clock = online
    for i in range(5):
        agent.record_gps(10.0 + i, 20.0, t=clock() + i)
    agent.upload_pending()
    assert agent.verify_consistency().ok
    docs = svc.store.query()
    local = [r.to_doc() for r in agent.outbox.read_all()]
    # drop one, corrupt one, invent one
    server = [dict(d) for d in docs[1:]]
    server[0]["payload"] = agent.cipher.encrypt(0.0, 0.0)
    server.append({**server[1], "record_id": "00000000-0000-4000-8000-000000000000"})
    rep = compare_records(local, server, agent.cipher)
    assert rep.missing_on_server == [docs[0]["record_id"]]
    assert rep.mismatched == [docs[1]["record_id"]]
    assert rep.missing_locally == ["00000000-0000-4000-8000-000000000000"]
    assert not rep.ok


def test_reencrypted_gps_still_matches(online):
    agent, svc, tr, clock = online
    agent.record_gps(40.5, -111.25, t=clock())
    agent.upload_pending()
    (doc,) = svc.store.query("gps")
    local = [r.to_doc() for r in agent.outbox.read_all()]
    fresh = {**doc, "payload": agent.cipher.encrypt(40.5, -111.25)}
    assert fresh["payload"] != doc["payload"]
    assert compare_records(local, [fresh], agent.cipher).ok
    moved = {**doc, "payload": agent.cipher.encrypt(40.5, -111.2500001)}
    assert compare_records(local, [moved], agent.cipher).mismatched == [doc["record_id"]]


def test_enmo_pairs_both_bands(tmp_path):
    agent, clock = make_agent(tmp_path)
    agent.connect_band("02:4D:50:00:00:01", "left", clock())
    agent.connect_band("02:4D:50:00:00:02", "right", clock())
    t0 = clock()
    note = lambda m: BandNotification(NotificationKind.ENMO_SUMMARY, t0 + 15, EnmoValue(t0, m, m > 0.1006, 480, False))
    agent.handle_notifications("02:4D:50:00:00:01", [note(0.2)])
    assert agent.outbox.pending["enmo"] == {}
    agent.handle_notifications("02:4D:50:00:00:02", [note(0.05)])
    [rec] = agent.outbox.pending["enmo"].values()
    assert [b["side"] for b in rec.payload["bands"]] == ["left", "right"]
    assert rec.payload["duration"] == 15.0


def test_low_battery_notification_logs_event(tmp_path):
    agent, clock = make_agent(tmp_path)
    agent.handle_notifications("02:4D:50:00:00:01", [BandNotification(NotificationKind.BATTERY_LEVEL, clock(), 19.5)])
    kinds = [e.event_kind for e in agent.ema.events]
    assert kinds == [EventKind.BATTERY_BELOW_20]
    assert len(agent.outbox.pending["event"]) == 1


def test_config_yaml_round_trip(tmp_path):
    conf = AgentConfig(participant_id="p", phone_id="ph", aes_key_hex=KEY, batch_size=10)
    conf.dump(tmp_path / "a.yaml")
    assert AgentConfig.load(tmp_path / "a.yaml") == conf
    with pytest.raises(ValueError):
        AgentConfig(participant_id="p", phone_id="ph", aes_key_hex="00")
