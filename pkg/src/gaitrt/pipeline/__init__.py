"""Real-time system: UDP/file ingestion, streaming preprocessing, chained
inference, multi-stage 1 kHz logging, and latency accounting."""

from .packets import (
    DUMP_MAGIC,
    PACKET_MAGIC,
    SENSOR_CHANNELS,
    SENSOR_IDS,
    SensorPacket,
    decode_packet,
    dump_records_from_trial,
    encode_packet,
    read_dump,
    write_dump,
)
from .ingest import Demuxer, timestamp_adjust
from .realtime import RealtimeEngine, SessionConfig, StageLatency, run_realtime
from .compare import compare_to_reference

__all__ = [
    "DUMP_MAGIC",
    "Demuxer",
    "PACKET_MAGIC",
    "RealtimeEngine",
    "SENSOR_CHANNELS",
    "SENSOR_IDS",
    "SensorPacket",
    "SessionConfig",
    "StageLatency",
    "compare_to_reference",
    "decode_packet",
    "dump_records_from_trial",
    "encode_packet",
    "read_dump",
    "run_realtime",
    "timestamp_adjust",
    "write_dump",
]
