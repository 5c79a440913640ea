"""Durable local store: type-partitioned, time-stamped, append-only record files.

Layout of an outbox directory::

    <type>-<YYYYMMDD-HHMMSS>.log   one JSON record per line, one file per type per local day;
                                   the name carries the local time of the file's first record
    uploaded.idx                   record_ids acknowledged by the server, one per line
    deadletter.log                 {"record": ..., "reason": ...} per quarantined record
    token.json                     the device token, if any

Record lines keep the field order record_id, record_type, participant_id,
phone_id, username, timestamp, payload.
"""
from __future__ import annotations

import json
import os
import re
from collections import OrderedDict
from datetime import datetime, timedelta, timezone

from ..backend.validation import RECORD_TYPES
from .records import DataRecord

_NAME = re.compile(r"^(?P<type>[a-z]+)-(?P<stamp>\d{8}-\d{6})\.log$")
UPLOADED_INDEX = "uploaded.idx"
DEAD_LETTER = "deadletter.log"
TOKEN_FILE = "token.json"


class OutboxError(OSError):
    """Local persistence failed; the record was not stored."""


def _dumps(doc) -> str:
    return json.dumps(doc, separators=(",", ":"), allow_nan=False)


class Outbox:
    """Single writer. Keeps an in-memory pending queue per type in creation order."""

    def __init__(self, root, utc_offset_s: float = 0.0):
        self.root = os.fspath(root)
        self._tz = timezone(timedelta(seconds=utc_offset_s))
        self._offset = float(utc_offset_s)
        self._recent: dict[tuple[str, int], str] = {}
        try:
            os.makedirs(self.root, exist_ok=True)
        except OSError as exc:
            raise OutboxError(f"cannot create outbox {self.root}: {exc}") from exc
        self._files: dict[tuple[str, str], str] = {}
        self._handles: dict[str, object] = {}
        self.pending: dict[str, OrderedDict[str, DataRecord]] = {t: OrderedDict() for t in RECORD_TYPES}
        self.uploaded: set[str] = set()
        self.dead: set[str] = set()
        self.counts = {t: 0 for t in RECORD_TYPES}
        self._load()

    # -- restart -------------------------------------------------------------

    def _load(self) -> None:
        self.uploaded = set(self._read_lines(UPLOADED_INDEX))
        self.dead = {json.loads(l)["record"]["record_id"] for l in self._read_lines(DEAD_LETTER)}
        for name in sorted(os.listdir(self.root)):
            m = _NAME.match(name)
            if not m or m["type"] not in RECORD_TYPES:
                continue
            self._files[(m["type"], m["stamp"][:8])] = os.path.join(self.root, name)
        for path in self.data_files():
            for rec in self._read_records(path):
                self.counts[rec.record_type] += 1
                if rec.record_id not in self.uploaded and rec.record_id not in self.dead:
                    self.pending[rec.record_type][rec.record_id] = rec

    def _read_lines(self, name: str) -> list[str]:
        path = os.path.join(self.root, name)
        if not os.path.exists(path):
            return []
        with open(path, encoding="utf-8") as fh:
            return [l.rstrip("\n") for l in fh if l.strip()]

    @staticmethod
    def _read_records(path: str):
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    yield DataRecord.from_doc(json.loads(line))

    # -- writes --------------------------------------------------------------

    def _append(self, path: str, line: str) -> None:
        try:
            fh = self._handles.get(path)
            if fh is None:
                fh = self._handles[path] = open(path, "a", encoding="utf-8")
            fh.write(line + "\n")
            fh.flush()
        except (OSError, ValueError) as exc:
            raise OutboxError(f"write to {path} failed: {exc}") from exc

    def _path_for(self, rec: DataRecord) -> str:
        day = int((rec.timestamp + self._offset) // 86400)
        path = self._recent.get((rec.record_type, day))
        if path is not None:
            return path
        local = datetime.fromtimestamp(rec.timestamp, tz=self._tz)
        key = (rec.record_type, local.strftime("%Y%m%d"))
        path = self._files.get(key)
        if path is None:
            path = self._files[key] = os.path.join(
                self.root, f"{rec.record_type}-{local.strftime('%Y%m%d-%H%M%S')}.log")
        self._recent[(rec.record_type, day)] = path
        return path

    def append(self, rec: DataRecord) -> None:
        self._append(self._path_for(rec), rec.wire_json)
        self.pending[rec.record_type][rec.record_id] = rec
        self.counts[rec.record_type] += 1

    def mark_uploaded(self, record_ids) -> None:
        ids = [r for r in record_ids if r not in self.uploaded]
        if not ids:
            return
        self._append(os.path.join(self.root, UPLOADED_INDEX), "\n".join(ids))
        for rid in ids:
            self.uploaded.add(rid)
            for q in self.pending.values():
                if q.pop(rid, None) is not None:
                    break

    def dead_letter(self, rec: DataRecord, reason: str) -> None:
        self._append(os.path.join(self.root, DEAD_LETTER), _dumps({"record": rec.to_doc(), "reason": reason}))
        self.dead.add(rec.record_id)
        self.pending[rec.record_type].pop(rec.record_id, None)

    def close(self) -> None:
        for fh in self._handles.values():
            fh.close()
        self._handles.clear()

    # -- reads ---------------------------------------------------------------

    def pending_count(self) -> int:
        return sum(len(q) for q in self.pending.values())

    def data_files(self) -> list[str]:
        return sorted(self._files.values())

    def read_all(self) -> list[DataRecord]:
        """Every record on disk, re-read from the files (the durable source of truth)."""
        for fh in self._handles.values():
            fh.flush()
        return [rec for path in self.data_files() for rec in self._read_records(path)]

    def dead_letters(self) -> list[dict]:
        return [json.loads(l) for l in self._read_lines(DEAD_LETTER)]

    def read_token(self) -> dict | None:
        path = os.path.join(self.root, TOKEN_FILE)
        if not os.path.exists(path):
            return None
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)

    def write_token(self, doc: dict) -> None:
        path = os.path.join(self.root, TOKEN_FILE)
        tmp = path + ".tmp"
        try:
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, sort_keys=True)
            os.replace(tmp, path)
        except OSError as exc:
            raise OutboxError(f"cannot persist token: {exc}") from exc
