"""Sensor record layouts stored in session files.

IMU: 9 little-endian int16 per sample (accel xyz, gyro xyz, mag xyz) at
32 Hz, 18 bytes, timestamps implicit from the file creation time.
PPG: 3 little-endian 24-bit unsigned samples (green, infrared, ambient)
at 64 Hz, 9 bytes.
"""
from __future__ import annotations

import numpy as np

IMU_RATE_HZ = 32.0
PPG_RATE_HZ = 64.0
IMU_RECORD_BYTES = 18
PPG_RECORD_BYTES = 9
ACCEL_LSB_G = 16.0 / 32768.0
GYRO_LSB_DPS = 2000.0 / 32768.0
MAG_LSB_UT = 0.15

IMU_COLUMNS = ["t", "ax_g", "ay_g", "az_g", "gx_dps", "gy_dps", "gz_dps", "mx_ut", "my_ut", "mz_ut"]
PPG_COLUMNS = ["t", "green", "infrared", "ambient"]


def encode_imu(ax, ay, az, gyro=None, mag=None) -> bytes:
    n = len(ax)
    out = np.zeros((n, 9), dtype="<i2")
    acc = np.stack([ax, ay, az], axis=1) / ACCEL_LSB_G
    out[:, 0:3] = np.clip(np.rint(acc), -32768, 32767)
    if gyro is not None:
        out[:, 3:6] = np.clip(np.rint(np.asarray(gyro) / GYRO_LSB_DPS), -32768, 32767)
    if mag is not None:
        out[:, 6:9] = np.clip(np.rint(np.asarray(mag) / MAG_LSB_UT), -32768, 32767)
    return out.tobytes()


def encode_ppg(channels) -> bytes:
    """``channels``: array of shape (n, 3) of unsigned 24-bit counts."""
    arr = np.asarray(channels, dtype=np.uint32)
    if arr.size and arr.max() >= 1 << 24:
        raise ValueError("PPG sample exceeds 24 bits")
    b = arr.astype("<u4").view(np.uint8).reshape(len(arr), 3, 4)[:, :, :3]
    return np.ascontiguousarray(b).tobytes()


def decode_imu(data: bytes) -> np.ndarray:
    n = len(data) // IMU_RECORD_BYTES
    raw = np.frombuffer(data[:n * IMU_RECORD_BYTES], dtype="<i2").reshape(n, 9).astype(np.float64)
    raw[:, 0:3] *= ACCEL_LSB_G
    raw[:, 3:6] *= GYRO_LSB_DPS
    raw[:, 6:9] *= MAG_LSB_UT
    return raw


def decode_ppg(data: bytes) -> np.ndarray:
    n = len(data) // PPG_RECORD_BYTES
    b = np.frombuffer(data[:n * PPG_RECORD_BYTES], dtype=np.uint8).reshape(n, 3, 3).astype(np.uint32)
    return b[:, :, 0] | (b[:, :, 1] << 8) | (b[:, :, 2] << 16)


def kind_for_name(name: str) -> str | None:
    upper = name.upper()
    if upper.startswith("IMU"):
        return "imu"
    if upper.startswith("PPG"):
        return "ppg"
    return None


def csv_header(kind: str) -> list[str]:
    return IMU_COLUMNS if kind == "imu" else PPG_COLUMNS


def decode_rows(kind: str, data: bytes, created_t: float):
    if kind == "imu":
        vals, rate = decode_imu(data), IMU_RATE_HZ
        fmt = lambda row: [f"{v:.6f}" for v in row]
    else:
        vals, rate = decode_ppg(data), PPG_RATE_HZ
        fmt = lambda row: [str(int(v)) for v in row]
    for i, row in enumerate(vals):
        yield [f"{created_t + i / rate:.5f}", *fmt(row)]


def bytes_per_second() -> float:
    return IMU_RECORD_BYTES * IMU_RATE_HZ + PPG_RECORD_BYTES * PPG_RATE_HZ
