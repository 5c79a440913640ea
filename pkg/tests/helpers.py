"""Shared builders for backend / agent tests."""
import json
import random
import uuid

from motionpi.backend import BackendConfig, BackendService

SECRET = "0" * 64


class FakeClock:
    def __init__(self, t=1_700_000_000.0):
        self.t = float(t)

    def __call__(self):
        return self.t

    def advance(self, dt):
        self.t += dt


def battery_doc(phone="phone-1", pid="motionpi001", t=1_700_000_100.0, rid=None, pct=80.0):
    return {"record_id": rid or str(uuid.uuid4()), "record_type": "battery", "participant_id": pid,
            "phone_id": phone, "username": pid, "timestamp": float(t),
            "payload": {"phone_pct": pct, "bands": [{"band_mac": "02:4D:50:00:00:01", "pct": 90.0}]}}


def new_service(clock=None, **cfg):
    clock = clock or FakeClock()
    return BackendService(BackendConfig(token_secret=SECRET, **cfg), clock=clock), clock


def signup(service, phone="phone-1", pid="motionpi001"):
    resp = service.handle("POST", "/signup", {}, json.dumps({"device_id": phone, "username": pid}).encode())
    assert resp.status == 200, resp.body
    return resp.json()["token"]


def bearer(token):
    return {"Authorization": f"Bearer {token}"}


def post(service, token, docs, rtype="battery"):
    headers = bearer(token) if token is not None else {}
    return service.handle("POST", f"/data/{rtype}", headers, json.dumps({"records": docs}).encode())


# each mutation makes a record one the server must never persist
MUTATIONS = (
    ("timestamp_string", lambda d, r: d.__setitem__("timestamp", "2024-01-01")),
    ("timestamp_int", lambda d, r: d.__setitem__("timestamp", 1_700_000_000)),
    ("timestamp_null", lambda d, r: d.__setitem__("timestamp", None)),
    ("timestamp_bool", lambda d, r: d.__setitem__("timestamp", True)),
    ("timestamp_missing", lambda d, r: d.pop("timestamp", None)),
    ("timestamp_list", lambda d, r: d.__setitem__("timestamp", [1_700_000_000.0])),
    ("phone_id_missing", lambda d, r: d.pop("phone_id", None)),
    ("phone_id_empty", lambda d, r: d.__setitem__("phone_id", "")),
    ("phone_id_number", lambda d, r: d.__setitem__("phone_id", r.randint(0, 99))),
    ("username_missing", lambda d, r: d.pop("username", None)),
    ("username_empty", lambda d, r: d.__setitem__("username", "  ")),
    ("username_null", lambda d, r: d.__setitem__("username", None)),
)


def malformed(doc, rng: random.Random):
    """A copy of ``doc`` with one or more random offending mutations."""
    out = json.loads(json.dumps(doc))
    for name, fn in rng.sample(MUTATIONS, rng.randint(1, 3)):
        fn(out, rng)
    return out
