"""The record envelope shared by the outbox, the wire and the server."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property

from ..backend.validation import RECORD_FIELDS, RECORD_TYPES, validate_record
from .crypto import GpsCipher, GpsDecryptError


class RecordError(ValueError):
    pass


@dataclass(frozen=True)
class DataRecord:
    record_id: str
    record_type: str
    participant_id: str
    phone_id: str
    timestamp: float
    payload: dict

    @property
    def username(self) -> str:
        return self.participant_id

    def to_doc(self) -> dict:
        """Wire / outbox document. Field order is part of the outbox format."""
        return {"record_id": self.record_id, "record_type": self.record_type,
                "participant_id": self.participant_id, "phone_id": self.phone_id,
                "username": self.username, "timestamp": self.timestamp, "payload": self.payload}

    @cached_property
    def wire_json(self) -> str:
        """Compact JSON of :meth:`to_doc`, encoded once; retries reuse it."""
        return json.dumps(self.to_doc(), separators=(",", ":"), allow_nan=False)

    @classmethod
    def from_doc(cls, doc: dict) -> "DataRecord":
        return cls(doc["record_id"], doc["record_type"], doc["participant_id"], doc["phone_id"],
                   doc["timestamp"], doc["payload"])

    @classmethod
    def build(cls, record_id: str, record_type: str, participant_id: str, phone_id: str,
              timestamp, payload: dict) -> "DataRecord":
        if record_type not in RECORD_TYPES:
            raise RecordError(f"unknown record type {record_type!r}")
        if isinstance(timestamp, bool) or not isinstance(timestamp, (int, float)):
            raise RecordError(f"timestamp must be a number, got {timestamp!r}")
        rec = cls(record_id, record_type, participant_id, phone_id, float(timestamp), payload)
        why = validate_record(rec.to_doc())
        if why:
            raise RecordError(why)
        return rec


def normalized(doc: dict, cipher: GpsCipher | None = None) -> dict:
    """Envelope fields only, GPS payloads replaced by their plaintext when a key is available."""
    out = {k: doc.get(k) for k in RECORD_FIELDS}
    if cipher is not None and out["record_type"] == "gps":
        try:
            out["payload"] = {"lat_lon": list(cipher.decrypt(out["payload"]))}
        except GpsDecryptError:
            out["payload"] = {"undecryptable": True}
    return out


def content_hash(doc: dict, cipher: GpsCipher | None = None) -> str:
    raw = json.dumps(normalized(doc, cipher), sort_keys=True, allow_nan=False)
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()
