"""Wristband firmware model: command handling, sensing, storage and notifications."""
from .band import BandConfig, BandError, Wristband
from .protocol import (
    BandCommand, BandNotification, BleChannel, CommandKind, EnmoValue, NotificationKind, ProtocolError,
)

__all__ = [
    "BandConfig", "BandError", "Wristband", "BandCommand", "BandNotification", "BleChannel",
    "CommandKind", "EnmoValue", "NotificationKind", "ProtocolError",
]
