"""Packet sources (UDP socket, replay file) and demultiplexing."""

from __future__ import annotations

import logging
import socket
import time
from dataclasses import dataclass, field

import numpy as np

from .packets import SENSOR_CHANNELS, SENSOR_NAMES, decode_packet

log = logging.getLogger("gaitrt.ingest")

SENSOR_TIMEOUT_MS = 2000.0
NOMINAL_INTERVAL_MS = 40.0  # 25 Hz sensors


@dataclass
class SensorBuffer:
    sensor_id: int
    seqs: list[int] = field(default_factory=list)
    device_ts: list[int] = field(default_factory=list)
    arrivals: list[int] = field(default_factory=list)
    values: list[np.ndarray] = field(default_factory=list)
    drops: int = 0
    reorders: int = 0

    def append(self, seq: int, device_ts: int, arrival: int, values: np.ndarray):
        if self.seqs:
            gap = seq - self.seqs[-1]
            if gap > 1:
                self.drops += gap - 1
            elif gap <= 0:
                self.reorders += 1
        self.seqs.append(seq)
        self.device_ts.append(device_ts)
        self.arrivals.append(arrival)
        self.values.append(values)


@dataclass
class Demuxer:
    """Validates and splits a packet stream into per-sensor buffers."""

    buffers: dict[int, SensorBuffer] = field(default_factory=dict)
    malformed: int = 0
    last_seen_ms: dict[int, float] = field(default_factory=dict)
    timeouts_reported: set = field(default_factory=set)

    def push(self, arrival_ms: int, data: bytes):
        """Returns the decoded packet or None when dropped as malformed."""
        packet, reason = decode_packet(data)
        if packet is None:
            self.malformed += 1
            log.debug("malformed packet skipped (%s)", reason)
            return None
        buf = self.buffers.setdefault(packet.sensor_id, SensorBuffer(packet.sensor_id))
        buf.append(packet.seq, packet.device_ts, arrival_ms, packet.values)
        self.last_seen_ms[packet.sensor_id] = arrival_ms
        self._check_timeouts(arrival_ms)
        return packet

    def _check_timeouts(self, now_ms: float):
        for sensor_id, last in self.last_seen_ms.items():
            if now_ms - last > SENSOR_TIMEOUT_MS and sensor_id not in self.timeouts_reported:
                self.timeouts_reported.add(sensor_id)
                log.warning("sensor %s silent for more than %.0f ms",
                            SENSOR_NAMES.get(sensor_id, sensor_id), SENSOR_TIMEOUT_MS)

    def counts(self) -> dict[str, int]:
        out = {"malformed": self.malformed}
        for sensor_id, buf in sorted(self.buffers.items()):
            name = SENSOR_NAMES.get(sensor_id, str(sensor_id))
            out[f"{name}_packets"] = len(buf.seqs)
            out[f"{name}_drops"] = buf.drops
            out[f"{name}_reorders"] = buf.reorders
        return out


def timestamp_adjust(buffers: dict[int, SensorBuffer]) -> dict[int, np.ndarray]:
    """Express every stream on the host clock via a per-sensor constant offset
    estimated from the first packet (device_ts - host_arrival)."""
    aligned: dict[int, np.ndarray] = {}
    for sensor_id, buf in buffers.items():
        if not buf.device_ts:
            aligned[sensor_id] = np.zeros(0)
            continue
        offset = buf.device_ts[0] - buf.arrivals[0]
        dev = np.asarray(buf.device_ts, dtype=np.float64)
        out = dev - offset
        # repair non-monotone device stamps from sequence-number spacing
        bad = np.flatnonzero(np.diff(out) <= 0)
        if bad.size:
            log.warning("sensor %s: %d non-monotone timestamps repaired",
                        SENSOR_NAMES.get(sensor_id, sensor_id), bad.size)
            seqs = np.asarray(buf.seqs, dtype=np.float64)
            for i in bad + 1:
                out[i] = out[i - 1] + max(seqs[i] - seqs[i - 1], 1.0) * NOMINAL_INTERVAL_MS
        aligned[sensor_id] = out
    return aligned


class ReplaySource:
    """Yields (arrival_ms, payload) from a dump, timed or as fast as possible.

    Arrival times are the recorded ones in both modes, so downstream
    processing is deterministic; timed mode additionally sleeps to reproduce
    the original inter-packet spacing.
    """

    def __init__(self, records: list[tuple[int, bytes]], timed: bool = True):
        self.records = records
        self.timed = timed

    def __iter__(self):
        if not self.records:
            return
        t0_record = self.records[0][0]
        t0_wall = time.monotonic()
        for arrival, payload in self.records:
            if self.timed:
                lag = (arrival - t0_record) / 1000.0 - (time.monotonic() - t0_wall)
                if lag > 0:
                    time.sleep(lag)
            yield arrival, payload


class UdpSource:
    """Binds a UDP socket and yields (arrival_wall_ms, payload)."""

    def __init__(self, listen: str, duration_s: float | None = None,
                 bufsize: int = 2048):
        host, _, port = listen.rpartition(":")
        self.addr = (host or "0.0.0.0", int(port))
        self.duration_s = duration_s
        self.bufsize = bufsize
        self._stop = False

    def stop(self):
        self._stop = True

    def __iter__(self):
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock.bind(self.addr)
        sock.settimeout(0.2)
        log.info("listening on %s:%d", *self.addr)
        start = time.monotonic()
        try:
            while not self._stop:
                if self.duration_s is not None and time.monotonic() - start > self.duration_s:
                    break
                try:
                    data, _ = sock.recvfrom(self.bufsize)
                except socket.timeout:
                    continue
                yield int(time.time() * 1000), data
        finally:
            sock.close()
