"""Ingestion service core: routing, auth, validation and persistence.

The service is transport-agnostic. :meth:`BackendService.handle` takes a
method, a path with optional query string, a header mapping and the raw
body, and returns a :class:`Response`. The HTTP adapter and the simulated
network both call it.

Routes (bodies are UTF-8 JSON)::

    POST /signup          {"device_id": str, "username": str}
                          -> 200 {"token", "issued_t", "expires_t", "device_id"}
    POST /data/<type>     Authorization: Bearer <token>
                          {"records": [DataRecord, ...]}
                          -> 200 {"acks": [{"record_id", "status", "reason"?}, ...]}
    GET  /records?record_type=&participant_id=&since=&until=
                          Authorization: Bearer <token>
                          -> 200 {"records": [StoredRecord, ...]}
    GET  /health          -> 200 {"status": "ok", "records": n}

Auth failures return 401 with an empty body. A body that is not a JSON
object with a ``records`` list is a 400 and nothing from it is stored.
Per-record problems are reported as ``status: "rejected"`` acks while the
rest of the batch is accepted. Device tokens only see their own phone's
records on ``GET /records``; analyst tokens see everything.
"""
from __future__ import annotations

import json
import secrets
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping
from urllib.parse import parse_qs, urlsplit

import yaml

from .store import MemoryStore
from .tokens import DEFAULT_EXPIRY_S, TokenError, TokenIssuer
from .validation import RECORD_TYPES, validate_record

REJECTED = "rejected"


@dataclass(frozen=True)
class Response:
    status: int
    body: bytes = b""
    headers: tuple = (("Content-Type", "application/json"),)

    def json(self):
        return json.loads(self.body) if self.body else None


def _json(status: int, doc) -> Response:
    return Response(status, json.dumps(doc, sort_keys=True).encode("utf-8"))


UNAUTHORIZED = Response(401, b"", (("WWW-Authenticate", "Bearer"),))


@dataclass
class BackendConfig:
    """Server settings; loaded from one YAML file.

    host, port        listen address for the HTTP adapter
    token_secret      HMAC key for tokens (random per process when omitted)
    token_expiry_s    token lifetime, default 30 days
    store_path        JSON-lines journal for the store; empty keeps it in memory
    """
    token_secret: str = field(default_factory=lambda: secrets.token_hex(32))
    token_expiry_s: float = DEFAULT_EXPIRY_S
    host: str = "127.0.0.1"
    port: int = 8080
    store_path: str | None = None

    @classmethod
    def load(cls, path) -> "BackendConfig":
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown backend config fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class Account:
    device_id: str
    username: str
    created_t: float


@dataclass
class RequestLogEntry:
    t: float
    method: str
    path: str
    status: int


class BackendService:
    def __init__(self, config: BackendConfig, clock: Callable[[], float], store=None):
        self.config = config
        self.clock = clock
        self.store = store if store is not None else MemoryStore(config.store_path or None)
        self.tokens = TokenIssuer(config.token_secret, clock, config.token_expiry_s)
        self.accounts: dict[str, Account] = {}
        self.request_log: list[RequestLogEntry] = []
        self._lock = threading.Lock()

    def analyst_token(self, name: str = "analyst") -> str:
        return self.tokens.issue(name, role="analyst").token

    # -- dispatch -------------------------------------------------------------

    def handle(self, method: str, path: str, headers: Mapping[str, str] | None = None,
               body: bytes = b"") -> Response:
        headers = {k.lower(): v for k, v in (headers or {}).items()}
        url = urlsplit(path)
        route = url.path.rstrip("/") or "/"
        if route == "/signup":
            resp = self._signup(body) if method == "POST" else _json(405, {"error": "method not allowed"})
        elif route.startswith("/data/"):
            rtype = route[len("/data/"):]
            if rtype not in RECORD_TYPES:
                resp = _json(404, {"error": f"unknown record type {rtype!r}"})
            elif method != "POST":
                resp = _json(405, {"error": "method not allowed"})
            else:
                resp = self._ingest(headers, rtype, body)
        elif route == "/records":
            resp = self._query(headers, url.query) if method == "GET" else _json(405, {"error": "method not allowed"})
        elif route == "/health":
            resp = _json(200, {"status": "ok", "records": self.store.count()})
        else:
            resp = _json(404, {"error": "not found"})
        with self._lock:
            self.request_log.append(RequestLogEntry(float(self.clock()), method, route, resp.status))
        return resp

    def _auth(self, headers: Mapping[str, str]) -> dict | None:
        value = headers.get("authorization", "")
        scheme, _, token = value.partition(" ")
        if scheme.lower() != "bearer" or not token.strip():
            return None
        try:
            return self.tokens.verify(token.strip())
        except TokenError:
            return None

    # -- routes ---------------------------------------------------------------

    def _signup(self, body: bytes) -> Response:
        try:
            doc = json.loads(body)
        except (ValueError, UnicodeDecodeError):
            return _json(400, {"error": "body is not JSON"})
        if not isinstance(doc, dict):
            return _json(400, {"error": "body must be an object"})
        device_id, username = doc.get("device_id"), doc.get("username")
        if not isinstance(device_id, str) or not device_id.strip():
            return _json(400, {"error": "device_id is required"})
        if not isinstance(username, str) or not username.strip():
            return _json(400, {"error": "username is required"})
        with self._lock:
            acct = self.accounts.get(device_id)
            if acct is None:
                acct = self.accounts[device_id] = Account(device_id, username, float(self.clock()))
        if acct.username != username:
            return _json(400, {"error": "device is registered to another username"})
        return _json(200, self.tokens.issue(device_id).to_dict())

    def _ingest(self, headers, rtype: str, body: bytes) -> Response:
        claims = self._auth(headers)
        if claims is None or claims.get("role") != "device":
            return UNAUTHORIZED
        try:
            doc = json.loads(body)
        except (ValueError, UnicodeDecodeError):
            return _json(400, {"error": "body is not valid JSON"})
        if not isinstance(doc, dict) or not isinstance(doc.get("records"), list):
            return _json(400, {"error": "body must be an object with a records list"})
        device = claims["device_id"]
        now = float(self.clock())
        acks, valid, slots = [], [], []
        for rec in doc["records"]:
            rid = rec.get("record_id") if isinstance(rec, dict) else None
            why = validate_record(rec, rtype, device)
            if why:
                acks.append({"record_id": rid if isinstance(rid, str) else None, "status": REJECTED, "reason": why})
                continue
            slots.append(len(acks))
            acks.append(None)
            valid.append({**rec, "received_t": now, "source_device": device})
        for i, rec, status in zip(slots, valid, self.store.upsert_many(valid)):
            acks[i] = {"record_id": rec["record_id"], "status": status}
        return _json(200, {"acks": acks})

    def _query(self, headers, query: str) -> Response:
        claims = self._auth(headers)
        if claims is None:
            return UNAUTHORIZED
        params = {k: v[-1] for k, v in parse_qs(query, keep_blank_values=False).items()}
        unknown = set(params) - {"record_type", "participant_id", "phone_id", "since", "until"}
        if unknown:
            return _json(400, {"error": f"unknown filters {sorted(unknown)}"})
        try:
            since = float(params["since"]) if "since" in params else None
            until = float(params["until"]) if "until" in params else None
        except ValueError:
            return _json(400, {"error": "since/until must be numbers"})
        phone = params.get("phone_id")
        if claims.get("role") != "analyst":
            if phone not in (None, claims["device_id"]):
                return _json(200, {"records": []})
            phone = claims["device_id"]
        recs = self.store.query(params.get("record_type"), params.get("participant_id"), phone, since, until)
        return _json(200, {"records": recs})
