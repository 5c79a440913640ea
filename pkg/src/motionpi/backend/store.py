"""Embedded document store behind a small storage interface.

Records live in one collection per record type and are unique by
``record_id`` across all collections. A production deployment would put a
document database behind the same :class:`DocumentStore` protocol.
"""
from __future__ import annotations

import json
import os
import threading
from typing import Iterable, Protocol

STORED = "stored"
DUPLICATE = "duplicate"
UPDATED = "updated"

_META = ("received_t", "source_device")


def _content(doc: dict) -> dict:
    return {k: v for k, v in doc.items() if k not in _META}


class DocumentStore(Protocol):
    def upsert(self, doc: dict) -> str: ...
    def upsert_many(self, docs: Iterable[dict]) -> list[str]: ...
    def get(self, record_id: str) -> dict | None: ...
    def delete(self, record_id: str) -> bool: ...
    def query(self, record_type: str | None = None, participant_id: str | None = None,
              phone_id: str | None = None, since: float | None = None, until: float | None = None) -> list[dict]: ...
    def count(self) -> int: ...
    def counts_by_type(self) -> dict[str, int]: ...


class MemoryStore:
    """Thread-safe in-memory store with optional JSON-lines journal.

    ``upsert`` with content identical to the stored copy is a no-op, so
    replays leave the store (including ``received_t``) unchanged.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self._lock = threading.Lock()
        self._collections: dict[str, dict[str, dict]] = {}
        self._type_of: dict[str, str] = {}
        self.path = os.fspath(path) if path is not None else None
        self._journal = None
        if self.path:
            if os.path.exists(self.path):
                self._replay()
            self._journal = open(self.path, "a", encoding="utf-8")

    def _replay(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                op = json.loads(line)
                if op.get("op") == "delete":
                    self._delete(op["record_id"])
                else:
                    self._put(op["doc"])

    def close(self) -> None:
        if self._journal:
            self._journal.close()
            self._journal = None

    def _log(self, op: dict) -> None:
        if self._journal:
            self._journal.write(json.dumps(op, sort_keys=True) + "\n")

    def _put(self, doc: dict) -> str:
        rid = doc["record_id"]
        old_type = self._type_of.get(rid)
        if old_type is None:
            status = STORED
        else:
            old = self._collections[old_type][rid]
            if _content(old) == _content(doc):
                return DUPLICATE
            del self._collections[old_type][rid]
            doc = {**doc, "received_t": old.get("received_t", doc.get("received_t"))}
            status = UPDATED
        self._collections.setdefault(doc["record_type"], {})[rid] = doc
        self._type_of[rid] = doc["record_type"]
        return status

    def _delete(self, rid: str) -> bool:
        rtype = self._type_of.pop(rid, None)
        if rtype is None:
            return False
        del self._collections[rtype][rid]
        return True

    def upsert(self, doc: dict) -> str:
        return self.upsert_many([doc])[0]

    def upsert_many(self, docs: Iterable[dict]) -> list[str]:
        out = []
        with self._lock:
            for doc in docs:
                status = self._put(dict(doc))
                if status != DUPLICATE:
                    self._log({"op": "put", "doc": doc})
                out.append(status)
            if self._journal:
                self._journal.flush()
        return out

    def get(self, record_id: str) -> dict | None:
        with self._lock:
            rtype = self._type_of.get(record_id)
            return dict(self._collections[rtype][record_id]) if rtype else None

    def delete(self, record_id: str) -> bool:
        with self._lock:
            ok = self._delete(record_id)
            if ok:
                self._log({"op": "delete", "record_id": record_id})
                if self._journal:
                    self._journal.flush()
            return ok

    def query(self, record_type=None, participant_id=None, phone_id=None, since=None, until=None) -> list[dict]:
        with self._lock:
            if record_type is not None:
                pool = list(self._collections.get(record_type, {}).values())
            else:
                pool = [d for coll in self._collections.values() for d in coll.values()]
        out = [dict(d) for d in pool
               if (participant_id is None or d["participant_id"] == participant_id)
               and (phone_id is None or d["phone_id"] == phone_id)
               and (since is None or d["timestamp"] >= since)
               and (until is None or d["timestamp"] < until)]
        out.sort(key=lambda d: (d["timestamp"], d["record_id"]))
        return out

    def count(self) -> int:
        with self._lock:
            return len(self._type_of)

    def counts_by_type(self) -> dict[str, int]:
        with self._lock:
            return {t: len(c) for t, c in sorted(self._collections.items()) if c}

    def dump(self) -> str:
        """Canonical JSON-lines image of every record, ordered by record_id."""
        with self._lock:
            docs = sorted((d for c in self._collections.values() for d in c.values()), key=lambda d: d["record_id"])
        return "".join(json.dumps(d, sort_keys=True) + "\n" for d in docs)
