"""AES-256-CBC field encryption for GPS fixes."""
from __future__ import annotations

import base64
import math
import os
from typing import Callable

from cryptography.hazmat.primitives import padding
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

IV_BYTES = 16


class GpsDecryptError(ValueError):
    pass


def check_coordinates(lat: float, lon: float) -> tuple[float, float]:
    lat, lon = float(lat), float(lon)
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise ValueError("coordinates must be finite")
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise ValueError(f"({lat}, {lon}) is outside [-90,90]x[-180,180]")
    return lat, lon


class GpsCipher:
    """Encrypts ``"lat,lon"`` (shortest round-trip float text) with a fresh IV per call.

    ``iv_source(n)`` supplies IV bytes; it defaults to :func:`os.urandom`.
    Simulations pass a seeded source so runs are reproducible.
    """

    def __init__(self, key: bytes, key_id: str, iv_source: Callable[[int], bytes] | None = None):
        if len(key) != 32:
            raise ValueError("AES-256 needs a 32-byte key")
        if not key_id:
            raise ValueError("key_id must be non-empty")
        self._algo = algorithms.AES(key)
        self.key_id = key_id
        self._iv = iv_source or os.urandom

    @classmethod
    def from_hex(cls, key_hex: str, key_id: str, iv_source=None) -> "GpsCipher":
        return cls(bytes.fromhex(key_hex), key_id, iv_source)

    def encrypt(self, lat: float, lon: float) -> dict:
        lat, lon = check_coordinates(lat, lon)
        iv = self._iv(IV_BYTES)
        padder = padding.PKCS7(128).padder()
        plain = padder.update(f"{lat!r},{lon!r}".encode("ascii")) + padder.finalize()
        enc = Cipher(self._algo, modes.CBC(iv)).encryptor()
        ct = enc.update(plain) + enc.finalize()
        return {"iv": base64.b64encode(iv).decode("ascii"),
                "ciphertext": base64.b64encode(ct).decode("ascii"),
                "key_id": self.key_id}

    def decrypt(self, payload: dict) -> tuple[float, float]:
        if payload.get("key_id") != self.key_id:
            raise GpsDecryptError(f"payload was encrypted under key {payload.get('key_id')!r}")
        try:
            iv = base64.b64decode(payload["iv"], validate=True)
            ct = base64.b64decode(payload["ciphertext"], validate=True)
            dec = Cipher(self._algo, modes.CBC(iv)).decryptor()
            unpadder = padding.PKCS7(128).unpadder()
            plain = unpadder.update(dec.update(ct) + dec.finalize()) + unpadder.finalize()
            lat_s, lon_s = plain.decode("ascii").split(",")
            return check_coordinates(float(lat_s), float(lon_s))
        except (KeyError, ValueError, TypeError, UnicodeDecodeError) as exc:
            raise GpsDecryptError(f"cannot decrypt GPS payload: {exc}") from None
