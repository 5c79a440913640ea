import json
import os
import sys
import time

import pytest

from motionpi.agent.transport import ConnectionRefused, ConnectionReset, RequestTimeout
from motionpi.netsim import (
    DropMode, EventQueue, OutageSchedule, ScenarioError, SimulatedLink, VirtualClock, load_scenario,
    parse_scenario, random_scenario_doc, run_scenario,
)

from .helpers import battery_doc, bearer, new_service, signup

FAST = {"sample_rate_hz": 8, "tick_s": 300}


def small(**extra):
    doc = {"name": "t", "seed": 3, "days": 1,
           "participants": [{"participant_id": "motionpi001", "phone_id": "phone-001", "rng_seed": 5},
                            {"participant_id": "motionpi002", "phone_id": "phone-002", "rng_seed": 6}],
           "sim": FAST}
    doc.update(extra)
    return parse_scenario(doc)


def _link(mode):
    svc, clock = new_service()
    tok = signup(svc)
    vc = VirtualClock(clock())
    svc.clock = vc.now
    sched = OutageSchedule([(vc.now() + 10, vc.now() + 20, mode)])
    return svc, tok, vc, SimulatedLink(svc, vc, sched, latency_s=0.5, capture=True)


def _body():
    return json.dumps({"records": [battery_doc(t=1_700_000_100.0 + i) for i in range(4)]}).encode()


def test_link_passes_outside_outages():
    svc, tok, vc, link = _link(DropMode.REFUSE)
    resp = link.request("POST", "/data/battery", bearer(tok), _body())
    assert resp.status == 200 and svc.store.count() == 4
    assert link.frames[0].outcome == "ok"


def test_refuse_never_reaches_server():
    svc, tok, vc, link = _link(DropMode.REFUSE)
    vc.advance_to(vc.now() + 12)
    n = len(svc.request_log)
    with pytest.raises(ConnectionRefused):
        link.request("POST", "/data/battery", bearer(tok), _body())
    assert len(svc.request_log) == n and svc.store.count() == 0


def test_timeout_delivers_but_loses_response():
    svc, tok, vc, link = _link(DropMode.TIMEOUT)
    vc.advance_to(vc.now() + 12)
    with pytest.raises(RequestTimeout):
        link.request("POST", "/data/battery", bearer(tok), _body())
    assert svc.store.count() == 4


def test_mid_body_cut_persists_nothing():
    svc, tok, vc, link = _link(DropMode.MID_BODY_CUT)
    vc.advance_to(vc.now() + 12)
    with pytest.raises(ConnectionReset):
        link.request("POST", "/data/battery", bearer(tok), _body())
    assert svc.request_log[-1].status == 400
    assert svc.store.count() == 0


def test_latency_window_overlapping_outage_start_fails():
    svc, tok, vc, link = _link(DropMode.REFUSE)
    vc.advance_to(vc.now() + 9.8)
    with pytest.raises(ConnectionRefused):
        link.request("GET", "/health", {})


def test_outage_schedule_validation():
    with pytest.raises(ValueError):
        OutageSchedule([(0, 10), (5, 20)])
    with pytest.raises(ValueError):
        OutageSchedule([(10, 10)])
    s = OutageSchedule([(0, 10, "timeout"), (20, 30)])
    assert s.at(5).mode == DropMode.TIMEOUT and s.at(10) is None and s.at(25).mode == DropMode.REFUSE
    assert s.total_seconds == 20 and s.last_end == 30


def test_event_queue_total_order():
    q, seen = EventQueue(), []
    clock = VirtualClock(0.0)
    for owner in (2, 0, 1):
        q.push(5.0, owner, lambda t, o=owner: seen.append(("a", o)))
    q.push(1.0, 9, lambda t: seen.append(("first", 9)))
    q.push(5.0, 0, lambda t: seen.append(("b", 0)))
    q.run(clock)
    assert seen == [("first", 9), ("a", 0), ("b", 0), ("a", 1), ("a", 2)]
    with pytest.raises(ValueError):
        clock.advance_to(1.0)


@pytest.mark.parametrize("doc, path", [
    ({"participants": []}, "days"),
    ({"days": 0, "participants": [{"participant_id": "a", "phone_id": "b", "rng_seed": 1}]}, "days"),
    ({"days": 1, "participants": [{"participant_id": "a", "rng_seed": 1}]}, "participants[0].phone_id"),
    ({"days": 1, "participants": [{"participant_id": "a", "phone_id": "b", "profile": "dancing"}]},
     "participants[0].profile"),
    ({"days": 1, "participants": [{"participant_id": "a", "phone_id": "b", "rng_seed": 1}],
      "network": {"outages": [{"start": 5, "end": 1}]}}, "network.outages[0]"),
    ({"days": 1, "participants": [{"participant_id": "a", "phone_id": "b", "rng_seed": 1}],
      "network": {"outages": [{"start": 0, "end": 1, "mode": "pigeon"}]}}, "network.outages[0].mode"),
    ({"days": 1, "participants": [{"participant_id": "a", "phone_id": "b", "rng_seed": 1}], "behavior": {"p_complete": 1.5}},
     "behavior.p_complete"),
    ({"days": 1, "participants": [{"participant_id": "a", "phone_id": "b", "rng_seed": 1}, {"participant_id": "c", "phone_id": "b", "rng_seed": 2}]},
     "participants[1].phone_id"),
    ({"days": 1, "participants": [{"participant_id": "a", "phone_id": "b", "rng_seed": 1}], "surprise": 1}, ""),
])
def test_schema_errors_name_field_paths(doc, path):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(doc)
    assert any(p == path for p, _ in err.value.errors), err.value.errors


def test_yaml_scenario_loads(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("days: 1\nparticipants:\n  - {participant_id: a, phone_id: b, rng_seed: 1}\nnetwork:\n"
                 "  outages: [{start: 100, end: 200, mode: timeout}]\n")
    sc = load_scenario(p)
    assert sc.days == 1 and sc.outages.intervals[0].mode == DropMode.TIMEOUT


def test_two_participants_no_outages_consistent(tmp_path):
    report = run_scenario(small(), tmp_path, capture=True)
    assert report.consistent and report.exit_code == 0
    for p in report.doc["participants"]:
        assert p["local_total"] == p["server_total"] > 0
        assert p["pending_uploads"] == 0
    on_disk = json.loads((tmp_path / "report.json").read_text())
    assert on_disk == json.loads(report.to_json())
    assert (tmp_path / "server" / "store.jsonl").exists()
    assert (tmp_path / "participants" / "motionpi001" / "agent.yaml").exists()


def test_outages_totalling_six_hours_eventually_consistent():
    outs = [{"start": s, "end": s + 5400, "mode": m} for s, m in
            zip((28000, 40000, 52000, 64000), ("refuse_connection", "timeout", "mid_body_cut", "timeout"))]
    doc = {"seed": 9, "days": 1, "participants": [{"participant_id": "motionpi001", "phone_id": "p1", "rng_seed": 2}],
           "network": {"outages": outs}, "sim": FAST}
    report = run_scenario(parse_scenario(doc), replay_check=True)
    net = report.doc["network"]
    assert net["outage_seconds"] == 6 * 3600
    assert net["refused"] > 0 and net["timeout"] > 0 and net["mid_body_cut"] > 0
    assert report.consistent
    assert report.doc["replay_check"]["store_unchanged"]


def test_same_seed_same_report_bytes():
    sc = parse_scenario(random_scenario_doc(4, max_participants=2, max_days=1, sample_rate_hz=8, tick_s=300))
    assert run_scenario(sc).to_json() == run_scenario(sc).to_json()


def test_different_seed_differs():
    a = run_scenario(small()).to_json()
    b = run_scenario(parse_scenario({**json.loads(json.dumps(small_doc())), "seed": 4})).to_json()
    assert a != b


def small_doc():
    return {"name": "t", "seed": 3, "days": 1,
            "participants": [{"participant_id": "motionpi001", "phone_id": "phone-001", "rng_seed": 5}],
            "sim": FAST}


def test_no_real_time_reads(monkeypatch):
    """Every clock read inside the package during a run must come from the virtual clock."""
    offenders = []

    def guard(real, name):
        def wrapped():
            mod = sys._getframe(1).f_globals.get("__name__", "")
            if mod.startswith("motionpi"):
                offenders.append((name, mod))
            return real()
        return wrapped

    for name in ("time", "monotonic", "perf_counter"):
        monkeypatch.setattr(time, name, guard(getattr(time, name), name))
    report = run_scenario(parse_scenario(small_doc()))
    assert report.consistent
    assert offenders == []


def test_gps_plaintext_absent_from_artifacts(tmp_path):
    run_scenario(parse_scenario(small_doc()), tmp_path, capture=True)
    hits = []
    for root, _, files in os.walk(tmp_path):
        for f in files:
            text = open(os.path.join(root, f), encoding="utf-8", errors="replace").read()
            if '"lat"' in text or '"lon"' in text or "lat_lon" in text:
                hits.append(f)
    assert hits == []
