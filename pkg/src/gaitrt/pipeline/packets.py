"""Sensor wire format and the replay dump file format.

Packet layout (little-endian):
  magic "GRT1" | sensor_id u8 | sequence u32 | device_timestamp_ms u64 |
  channel_count u8 | channel_count * f32 payload

Dump layout: magic "GRTDUMP1" | version u32 | record count u32 | records,
each: payload_length u32 | host_arrival_ms u64 | payload bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dataset import Trial
from ..errors import FormatError

PACKET_MAGIC = b"GRT1"
_HEADER = struct.Struct("<4sBIQB")

DUMP_MAGIC = b"GRTDUMP1"
DUMP_VERSION = 1
_DUMP_HEAD = struct.Struct("<8sII")
_RECORD_HEAD = struct.Struct("<IQ")

# sensor_id assignments
SENSOR_IDS = {
    "imu_rs": 0,  # right shank IMU
    "imu_rf": 1,  # right foot IMU
    "imu_ls": 2,  # left shank IMU
    "imu_lf": 3,  # left foot IMU
    "insole_r": 16,
    "insole_l": 17,
}
SENSOR_NAMES = {v: k for k, v in SENSOR_IDS.items()}
SENSOR_CHANNELS = {0: 9, 1: 9, 2: 9, 3: 9, 16: 8, 17: 8}


@dataclass(frozen=True)
class SensorPacket:
    sensor_id: int
    seq: int
    device_ts: int  # ms since epoch
    values: np.ndarray  # float64 copy of the f32 payload


def encode_packet(sensor_id: int, seq: int, device_ts_ms: int, values) -> bytes:
    values = np.asarray(values, dtype="<f4")
    head = _HEADER.pack(PACKET_MAGIC, sensor_id, seq, int(device_ts_ms), values.size)
    return head + values.tobytes()


def decode_packet(data: bytes) -> tuple[SensorPacket | None, str | None]:
    """Returns (packet, None) or (None, reason) for malformed input."""
    if len(data) < _HEADER.size:
        return None, "short_header"
    magic, sensor_id, seq, device_ts, count = _HEADER.unpack_from(data)
    if magic != PACKET_MAGIC:
        return None, "bad_magic"
    expected = SENSOR_CHANNELS.get(sensor_id)
    if expected is None:
        return None, "unknown_sensor"
    if count != expected:
        return None, "bad_channel_count"
    need = _HEADER.size + 4 * count
    if len(data) < need:
        return None, "short_payload"
    values = np.frombuffer(data, dtype="<f4", count=count, offset=_HEADER.size)
    return SensorPacket(sensor_id, seq, device_ts,
                        values.astype(np.float64)), None


def write_dump(records: list[tuple[int, bytes]], path) -> None:
    """records are (host_arrival_ms, packet_bytes)."""
    with open(path, "wb") as f:
        f.write(_DUMP_HEAD.pack(DUMP_MAGIC, DUMP_VERSION, len(records)))
        for arrival, payload in records:
            f.write(_RECORD_HEAD.pack(len(payload), int(arrival)))
            f.write(payload)


def read_dump(path) -> list[tuple[int, bytes]]:
    data = Path(path).read_bytes()
    if len(data) < _DUMP_HEAD.size:
        raise FormatError(f"{path}: truncated dump header")
    magic, version, count = _DUMP_HEAD.unpack_from(data)
    if magic != DUMP_MAGIC:
        raise FormatError(f"{path}: bad dump magic {magic!r}")
    if version != DUMP_VERSION:
        raise FormatError(f"{path}: unsupported dump version {version}")
    records = []
    offset = _DUMP_HEAD.size
    for _ in range(count):
        if offset + _RECORD_HEAD.size > len(data):
            raise FormatError(f"{path}: truncated record header")
        length, arrival = _RECORD_HEAD.unpack_from(data, offset)
        offset += _RECORD_HEAD.size
        if offset + length > len(data):
            raise FormatError(f"{path}: truncated record payload")
        records.append((arrival, data[offset : offset + length]))
        offset += length
    return records


def dump_records_from_trial(trial: Trial, start_host_ms: int = 1_000_000,
                            device_offsets: dict[str, int] | None = None,
                            jitter_ms: float = 0.0,
                            seed: int = 0) -> list[tuple[int, bytes]]:
    """Fabricate a wire capture of a trial.

    Device clocks may carry per-sensor constant offsets; network jitter is
    optional uniform noise on arrival times.  Records are ordered by arrival.
    """
    device_offsets = device_offsets or {}
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD0D0]))
    records = []
    for name, series in trial.sensor_series().items():
        sensor_id = SENSOR_IDS[name]
        offset = int(device_offsets.get(name, 0))
        times = series.times()
        for i in range(series.n_samples):
            t = float(times[i])
            device_ts = int(round(t)) + start_host_ms + offset
            arrival = start_host_ms + int(round(t + (
                rng.uniform(-jitter_ms, jitter_ms) if jitter_ms > 0 else 0.0)))
            payload = encode_packet(sensor_id, i, device_ts, series.data[i])
            records.append((arrival, sensor_id, payload))
    records.sort(key=lambda r: (r[0], r[1]))
    return [(arrival, payload) for arrival, _, payload in records]
