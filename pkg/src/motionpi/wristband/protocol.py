"""Band command / notification messages and their byte encoding.

Every message is a 1-byte kind tag followed by a little-endian payload:

======  ================  ===========================================
tag     message           payload
======  ================  ===========================================
0x01    StartCollection   (none)
0x02    StopCollection    (none)
0x03    SetParticipantId  u8 length, UTF-8 bytes (at most 32)
0x04    SetTime           f64 seconds since the UNIX epoch
0x05    EraseStorage      (none)
0x81    MvpaEpoch         f64 t, u8 flag
0x82    BatteryLevel      f64 t, f64 percent
0x83    StorageLevel      f64 t, f64 percent used
0x84    ChargingStatus    f64 t, u8 charging
0x85    EnmoSummary       f64 t (bout end), f64 bout start, f64 mean ENMO g,
                          u8 flags (bit0 MVPA, bit1 dropout), u16 sample count
======  ================  ===========================================
"""
from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, NamedTuple

MAX_PARTICIPANT_ID = 32


class ProtocolError(ValueError):
    pass


class CommandKind(IntEnum):
    START_COLLECTION = 0x01
    STOP_COLLECTION = 0x02
    SET_PARTICIPANT_ID = 0x03
    SET_TIME = 0x04
    ERASE_STORAGE = 0x05


class NotificationKind(IntEnum):
    MVPA_EPOCH = 0x81
    BATTERY_LEVEL = 0x82
    STORAGE_LEVEL = 0x83
    CHARGING_STATUS = 0x84
    ENMO_SUMMARY = 0x85


class EnmoValue(NamedTuple):
    bout_start: float
    mean_enmo: float
    is_mvpa: bool
    sample_count: int
    dropout: bool


@dataclass(frozen=True)
class BandCommand:
    kind: CommandKind
    payload: Any = None

    @classmethod
    def start_collection(cls):
        return cls(CommandKind.START_COLLECTION)

    @classmethod
    def stop_collection(cls):
        return cls(CommandKind.STOP_COLLECTION)

    @classmethod
    def set_participant_id(cls, participant_id: str):
        return cls(CommandKind.SET_PARTICIPANT_ID, participant_id)

    @classmethod
    def set_time(cls, t: float):
        return cls(CommandKind.SET_TIME, float(t))

    @classmethod
    def erase_storage(cls):
        return cls(CommandKind.ERASE_STORAGE)

    def encode(self) -> bytes:
        tag = bytes([self.kind])
        if self.kind == CommandKind.SET_PARTICIPANT_ID:
            raw = str(self.payload).encode("utf-8")
            if not raw or len(raw) > MAX_PARTICIPANT_ID:
                raise ProtocolError(f"participant id must be 1..{MAX_PARTICIPANT_ID} bytes")
            return tag + bytes([len(raw)]) + raw
        if self.kind == CommandKind.SET_TIME:
            return tag + struct.pack("<d", self.payload)
        return tag

    @classmethod
    def decode(cls, raw: bytes) -> "BandCommand":
        if not raw:
            raise ProtocolError("empty command")
        try:
            kind = CommandKind(raw[0])
        except ValueError:
            raise ProtocolError(f"unknown command tag 0x{raw[0]:02x}") from None
        body = raw[1:]
        if kind == CommandKind.SET_PARTICIPANT_ID:
            if not body or len(body) != body[0] + 1:
                raise ProtocolError("malformed participant id payload")
            return cls(kind, body[1:].decode("utf-8"))
        if kind == CommandKind.SET_TIME:
            if len(body) != 8:
                raise ProtocolError("SetTime expects 8 payload bytes")
            return cls(kind, struct.unpack("<d", body)[0])
        if body:
            raise ProtocolError(f"{kind.name} takes no payload")
        return cls(kind)


_NOTE_FORMATS = {
    NotificationKind.MVPA_EPOCH: struct.Struct("<dB"),
    NotificationKind.BATTERY_LEVEL: struct.Struct("<dd"),
    NotificationKind.STORAGE_LEVEL: struct.Struct("<dd"),
    NotificationKind.CHARGING_STATUS: struct.Struct("<dB"),
    NotificationKind.ENMO_SUMMARY: struct.Struct("<dddBH"),
}


@dataclass(frozen=True)
class BandNotification:
    kind: NotificationKind
    t: float
    value: Any

    def encode(self) -> bytes:
        fmt = _NOTE_FORMATS[self.kind]
        if self.kind == NotificationKind.ENMO_SUMMARY:
            v = self.value
            flags = int(v.is_mvpa) | (int(v.dropout) << 1)
            body = fmt.pack(self.t, v.bout_start, v.mean_enmo, flags, min(v.sample_count, 0xFFFF))
        elif self.kind in (NotificationKind.MVPA_EPOCH, NotificationKind.CHARGING_STATUS):
            body = fmt.pack(self.t, int(bool(self.value)))
        else:
            body = fmt.pack(self.t, float(self.value))
        return bytes([self.kind]) + body

    @classmethod
    def decode(cls, raw: bytes) -> "BandNotification":
        try:
            kind = NotificationKind(raw[0])
        except (ValueError, IndexError):
            raise ProtocolError("unknown or empty notification") from None
        fmt = _NOTE_FORMATS[kind]
        if len(raw) - 1 != fmt.size:
            raise ProtocolError(f"{kind.name} expects {fmt.size} payload bytes")
        fields = fmt.unpack(raw[1:])
        if kind == NotificationKind.ENMO_SUMMARY:
            t, start, mean, flags, count = fields
            return cls(kind, t, EnmoValue(start, mean, bool(flags & 1), count, bool(flags & 2)))
        t, value = fields
        if kind in (NotificationKind.MVPA_EPOCH, NotificationKind.CHARGING_STATUS):
            value = bool(value)
        return cls(kind, t, value)


class BleChannel:
    """In-process stand-in for the GATT link: two FIFO queues of encoded messages."""

    def __init__(self):
        self.to_band: deque[bytes] = deque()
        self.to_phone: deque[bytes] = deque()
        self.bytes_sent = 0

    def send_command(self, cmd: BandCommand) -> None:
        raw = cmd.encode()
        self.bytes_sent += len(raw)
        self.to_band.append(raw)

    def notify(self, notes) -> None:
        for n in notes:
            raw = n.encode()
            self.bytes_sent += len(raw)
            self.to_phone.append(raw)

    def take_commands(self) -> list[BandCommand]:
        out = [BandCommand.decode(r) for r in self.to_band]
        self.to_band.clear()
        return out

    def take_notifications(self) -> list[BandNotification]:
        out = [BandNotification.decode(r) for r in self.to_phone]
        self.to_phone.clear()
        return out
