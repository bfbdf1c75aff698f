"""The streaming real-time engine.

Processing is arrival-driven: every accepted packet extends its sensor's
1 kHz up-sampled + filtered buffer, and all ticks covered by every sensor are
then processed in one vectorized batch (strike detection, stride clock, GC%,
chained GRF -> angle -> moment inference, output smoothing, logging).

Three cooperating units (ingest, process, log) connect through bounded
queues in timed/live mode; as-fast-as-possible replay runs them
synchronously in one thread so logs are byte-reproducible.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ShapeError
from ..gait import DEBOUNCE_MS, StrideClock
from ..signal import IirFilter, design_butterworth
from .ingest import Demuxer, NOMINAL_INTERVAL_MS
from .packets import SENSOR_CHANNELS, SENSOR_IDS, SENSOR_NAMES

log = logging.getLogger("gaitrt.realtime")

JOINT_ORDER = ["hipflex", "hipadd", "hiprot", "kneeflex", "ankleflex"]

LOG_SPECS = {
    "insole_raw": ["time_ms"] + [f"fsr_{s}{i}" for s in "rl" for i in range(1, 9)],
    "insole_adjusted": ["time_ms"] + [f"fsr_{s}{i}" for s in "rl" for i in range(1, 9)],
    "insole_filtered": ["time_ms"] + [f"fsr_{s}{i}" for s in "rl" for i in range(1, 9)],
    "imu_raw": None,  # filled below
    "imu_upsampled": None,
    "imu_filtered": None,
    "grf_predictions": ["time_ms", "valid", "gc_percent", "vgrf_bw"],
    "angle_predictions_raw": ["time_ms", "valid", "gc_percent"] + [f"{j}_deg" for j in JOINT_ORDER],
    "angle_predictions_filtered": ["time_ms", "valid", "gc_percent"] + [f"{j}_deg" for j in JOINT_ORDER],
    "moment_predictions_raw": ["time_ms", "valid", "gc_percent"] + [f"{j}_nm" for j in JOINT_ORDER],
    "moment_predictions_filtered": ["time_ms", "valid", "gc_percent"] + [f"{j}_nm" for j in JOINT_ORDER],
}
_IMU_COLS = ["time_ms"] + [
    f"imu_{sensor}_{axis}" for sensor in ("rs", "rf", "ls", "lf")
    for axis in ("ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz")
]
LOG_SPECS["imu_raw"] = _IMU_COLS
LOG_SPECS["imu_upsampled"] = _IMU_COLS
LOG_SPECS["imu_filtered"] = _IMU_COLS


def _fmt(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


@dataclass
class SessionConfig:
    mass_kg: float
    weight_n: float
    out_dir: str
    lead_foot: str = "right"
    tick_rate: float = 1000.0
    imu_band: tuple = (0.2, 10.0)
    imu_order: int = 5
    fsr_cutoff: float = 3.0
    fsr_order: int = 5
    smoothing_cutoff_hz: float = 6.0
    smoothing_order: int = 2
    insole_threshold_frac: float = 0.1
    insole_threshold_floor: float = 0.05
    window_len: int = 10
    batch_at_end: bool = False
    log_queue_size: int = 100000
    max_lag_ticks: int = 4000  # back-pressure guard in timed/live mode


@dataclass
class ChainModels:
    grf: object  # predict((n, 9)) -> (n, 1), weight-normalized vGRF
    angle: object  # predict((n, 20)) -> (n, 5) degrees
    moment: object  # predict((n, window, 8)) -> (n, 5) N*m


@dataclass
class StageLatency:
    grf_done_ms: float
    angles_done_ms: float
    moments_done_ms: float
    tick_latency_ms: dict
    ticks_processed: int
    ticks_skipped: int

    def as_dict(self) -> dict:
        return {
            "grf_done_ms": self.grf_done_ms,
            "angles_done_ms": self.angles_done_ms,
            "moments_done_ms": self.moments_done_ms,
            "tick_latency_ms": self.tick_latency_ms,
            "ticks_processed": self.ticks_processed,
            "ticks_skipped": self.ticks_skipped,
        }


@dataclass
class PredictionLogSet:
    directory: Path
    files: dict[str, Path]

    def path(self, name: str) -> Path:
        return self.files[name]


class _SyncSink:
    """Writes log rows immediately; used by deterministic replay."""

    def __init__(self, out_dir: Path):
        self.files = {}
        self.handles = {}
        self.dropped = 0
        for name, cols in LOG_SPECS.items():
            path = out_dir / f"{name}.csv"
            handle = open(path, "w", buffering=1 << 16)
            handle.write(",".join(cols) + "\n")
            self.files[name] = path
            self.handles[name] = handle

    def put(self, name: str, line: str):
        self.handles[name].write(line + "\n")

    def close(self):
        for h in self.handles.values():
            h.close()


class _QueueSink:
    """Bounded queue drained by a writer thread; overflow drops rows with a
    counter instead of ever blocking the processing unit."""

    def __init__(self, out_dir: Path, maxsize: int):
        self._sync = _SyncSink(out_dir)
        self.files = self._sync.files
        self.dropped = 0
        self.queue: queue.Queue = queue.Queue(maxsize=maxsize)
        self.thread = threading.Thread(target=self._run, name="gaitrt-log", daemon=True)
        self.thread.start()

    def _run(self):
        while True:
            item = self.queue.get()
            if item is None:
                break
            name, line = item
            self._sync.put(name, line)

    def put(self, name: str, line: str):
        try:
            self.queue.put_nowait((name, line))
        except queue.Full:
            self.dropped += 1

    def close(self):
        self.queue.put(None)
        self.thread.join()
        self.dropped += self._sync.dropped
        self._sync.close()


class _Grow:
    """Append-only (n, c) float64 array with geometric growth."""

    def __init__(self, channels: int):
        self.data = np.empty((256, channels))
        self.n = 0

    def append(self, rows: np.ndarray):
        need = self.n + rows.shape[0]
        if need > self.data.shape[0]:
            cap = max(need, 2 * self.data.shape[0])
            new = np.empty((cap, self.data.shape[1]))
            new[: self.n] = self.data[: self.n]
            self.data = new
        self.data[self.n : need] = rows
        self.n = need

    def rows(self, lo: int, hi: int) -> np.ndarray:
        return self.data[lo:hi]


class _StreamChannel:
    """Per-sensor timestamp alignment, streaming 1 kHz interpolation, and
    causal filtering."""

    def __init__(self, name: str, n_channels: int, filt: IirFilter):
        self.name = name
        self.filt = filt
        self.offset = None
        self.last_aligned = None
        self.last_seq = None
        self.repaired = 0
        self.prev = None  # (aligned_ms, values)
        self.first_tick = None
        self.next_tick = None
        self.up = _Grow(n_channels)
        self.filtered = _Grow(n_channels)

    def accept(self, seq: int, device_ts: int, arrival_ms: int,
               values: np.ndarray) -> tuple[float, int]:
        """Returns (aligned_time_ms, n_new_ticks)."""
        if self.offset is None:
            self.offset = device_ts - arrival_ms
        t = float(device_ts - self.offset)
        if self.last_aligned is not None and t <= self.last_aligned:
            gap = max((seq - self.last_seq) if self.last_seq is not None else 1, 1)
            t = self.last_aligned + gap * NOMINAL_INTERVAL_MS
            self.repaired += 1
        n_new = 0
        if self.prev is not None:
            t0, v0 = self.prev
            if self.next_tick is None:
                self.first_tick = int(math.ceil(t0 - 1e-9))
                self.next_tick = self.first_tick
            hi = int(math.floor(t + 1e-9))
            if hi >= self.next_tick:
                ticks = np.arange(self.next_tick, hi + 1, dtype=np.float64)
                frac = (ticks - t0) / (t - t0)
                rows = v0[None, :] + frac[:, None] * (values - v0)[None, :]
                self.up.append(rows)
                self.filtered.append(self.filt.process(rows))
                n_new = ticks.size
                self.next_tick = hi + 1
        self.prev = (t, values)
        self.last_aligned = t
        self.last_seq = seq
        return t, n_new

    def available_until(self) -> int:
        """One past the last tick this sensor can serve."""
        if self.next_tick is None:
            return -1
        return self.next_tick

    def tick_rows(self, which: str, lo_tick: int, hi_tick: int) -> np.ndarray:
        buf = self.up if which == "up" else self.filtered
        return buf.rows(lo_tick - self.first_tick, hi_tick - self.first_tick)


class _StrikeDetector:
    """Running-maximum fractional threshold with upward-crossing debounce."""

    def __init__(self, frac: float, floor: float, clock: StrideClock, foot: str):
        self.frac = frac
        self.floor = floor
        self.clock = clock
        self.foot = foot
        self.run_max = 0.0
        self.prev = 0.0
        self.last_strike = -np.inf
        self.strikes: list[float] = []

    def push(self, t_ms: float, total: float):
        if total > self.run_max:
            self.run_max = total
        thr = max(self.frac * self.run_max, self.floor)
        if self.prev < thr <= total and t_ms - self.last_strike >= DEBOUNCE_MS:
            self.clock.observe(self.foot, t_ms)
            self.strikes.append(t_ms)
            self.last_strike = t_ms
        self.prev = total


class RealtimeEngine:
    def __init__(self, config: SessionConfig, models: ChainModels,
                 out_dir=None, synchronous: bool = True):
        self.config = config
        self.models = models
        out_dir = Path(out_dir if out_dir is not None else config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.out_dir = out_dir
        self.sink = (_SyncSink(out_dir) if synchronous
                     else _QueueSink(out_dir, config.log_queue_size))
        self.synchronous = synchronous
        self.demux = Demuxer()
        fs = config.tick_rate
        self.channels: dict[int, _StreamChannel] = {}
        for name, sensor_id in SENSOR_IDS.items():
            if name.startswith("insole"):
                filt = design_butterworth(config.fsr_order, "lowpass",
                                          [config.fsr_cutoff], fs)
            else:
                filt = design_butterworth(config.imu_order, "bandpass",
                                          list(config.imu_band), fs)
            self.channels[sensor_id] = _StreamChannel(
                name, SENSOR_CHANNELS[sensor_id], filt)
        self.clock = StrideClock()
        self.detectors = {
            "right": _StrikeDetector(config.insole_threshold_frac,
                                     config.insole_threshold_floor,
                                     self.clock, "right"),
            "left": _StrikeDetector(config.insole_threshold_frac,
                                    config.insole_threshold_floor,
                                    self.clock, "left"),
        }
        self.angle_smoother = design_butterworth(
            config.smoothing_order, "lowpass", [config.smoothing_cutoff_hz], fs)
        self.moment_smoother = design_butterworth(
            config.smoothing_order, "lowpass", [config.smoothing_cutoff_hz], fs)
        self.cursor: int | None = None  # next unprocessed tick
        self.chain_hist = _Grow(8)  # valid-tick chain inputs for windowing
        self.ticks_processed = 0
        self.ticks_skipped = 0
        self.valid_ticks = 0
        self.last_arrival_wall = None
        self.stage_wall = {"grf": None, "angles": None, "moments": None}
        self.batch_latency_ms: list[float] = []
        self._n_out = {"angles": 5, "moments": models.moment.n_outputs
                       if models.moment is not None else 5}

    # ---------------- ingestion ----------------

    def feed(self, arrival_ms: int, payload: bytes,
             realtime_guard: bool = False):
        packet = self.demux.push(arrival_ms, payload)
        self.last_arrival_wall = time.time() * 1000.0
        if packet is None:
            return
        chan = self.channels[packet.sensor_id]
        aligned_t, _ = chan.accept(packet.seq, packet.device_ts, arrival_ms,
                                   packet.values)
        self._log_native(chan.name, packet.device_ts, aligned_t, packet.values)
        if not self.config.batch_at_end:
            self._advance(realtime_guard=realtime_guard)

    def _log_native(self, name: str, device_ts: int, aligned_t: float,
                    values: np.ndarray):
        if name.startswith("insole"):
            raw_file, adj_file, width = "insole_raw", "insole_adjusted", 16
            base = 0 if name == "insole_r" else 8
        else:
            # IMU adjusted stamps surface in the upsampled log instead
            raw_file, adj_file, width = "imu_raw", None, 36
            order = ["imu_rs", "imu_rf", "imu_ls", "imu_lf"]
            base = order.index(name) * 9
        cells = [""] * width
        for i, v in enumerate(values):
            cells[base + i] = _fmt(v)
        self.sink.put(raw_file, ",".join([_fmt(device_ts)] + cells))
        if adj_file is not None:
            self.sink.put(adj_file, ",".join([_fmt(aligned_t)] + cells))

    # ---------------- processing ----------------

    def _advance(self, realtime_guard: bool = False):
        bounds = [c.available_until() for c in self.channels.values()]
        if min(bounds) < 0:
            return
        bound = min(bounds)
        if self.cursor is None:
            self.cursor = max(c.first_tick for c in self.channels.values())
        if bound <= self.cursor:
            return
        if realtime_guard and bound - self.cursor > self.config.max_lag_ticks:
            skip_to = bound - self.config.max_lag_ticks
            self._process_batch(self.cursor, skip_to, skipped=True)
            self.ticks_skipped += skip_to - self.cursor
            self.cursor = skip_to
        self._process_batch(self.cursor, bound, skipped=False)
        self.cursor = bound

    def _process_batch(self, lo: int, hi: int, skipped: bool):
        if hi <= lo:
            return
        cfg = self.config
        n = hi - lo
        ticks = np.arange(lo, hi, dtype=np.float64)
        by_name = {c.name: c for c in self.channels.values()}
        fsr_r = by_name["insole_r"].tick_rows("filt", lo, hi)
        fsr_l = by_name["insole_l"].tick_rows("filt", lo, hi)
        imu_filt = np.hstack([by_name[k].tick_rows("filt", lo, hi)
                              for k in ("imu_rs", "imu_rf", "imu_ls", "imu_lf")])
        imu_up = np.hstack([by_name[k].tick_rows("up", lo, hi)
                            for k in ("imu_rs", "imu_rf", "imu_ls", "imu_lf")])

        # stride clocking always runs, even for back-pressure-skipped ticks
        sums = {"right": fsr_r.sum(axis=1), "left": fsr_l.sum(axis=1)}
        lead = cfg.lead_foot
        gc = np.empty(n)
        valid = np.zeros(n, dtype=bool)
        for i in range(n):
            t = ticks[i]
            for foot in ("right", "left"):
                self.detectors[foot].push(t, sums[foot][i])
            if self.clock.ready(lead):
                gc[i] = self.clock.gc_percent(lead, t)
                valid[i] = True
            else:
                gc[i] = np.nan

        for i in range(n):
            row = [_fmt(ticks[i])]
            self.sink.put("insole_filtered",
                          ",".join(row + [_fmt(v) for v in fsr_r[i]]
                                   + [_fmt(v) for v in fsr_l[i]]))
            self.sink.put("imu_upsampled", ",".join(row + [_fmt(v) for v in imu_up[i]]))
            self.sink.put("imu_filtered", ",".join(row + [_fmt(v) for v in imu_filt[i]]))

        if skipped:
            valid[:] = False  # predictions skipped under back-pressure

        vgrf = np.full(n, np.nan)
        angles = np.full((n, 5), np.nan)
        moments = np.full((n, self._n_out["moments"]), np.nan)
        angles_sm = np.full((n, 5), np.nan)
        moments_sm = np.full((n, self._n_out["moments"]), np.nan)
        moment_valid = np.zeros(n, dtype=bool)

        if valid.any() and not skipped:
            vi = np.flatnonzero(valid)
            fsr_lead = fsr_r if lead == "right" else fsr_l
            leg = "r" if lead == "right" else "l"
            imu_cols = slice(0, 18) if leg == "r" else slice(18, 36)
            grf_rows = np.hstack([fsr_lead[vi], gc[vi, None]])
            vgrf[vi] = self.models.grf.predict(grf_rows)[:, 0]
            self.stage_wall["grf"] = time.time() * 1000.0

            flag = np.ones((vi.size, 1))
            angle_rows = np.hstack([imu_filt[vi, imu_cols], gc[vi, None], flag])
            angles[vi] = self.models.angle.predict(angle_rows)
            self.stage_wall["angles"] = time.time() * 1000.0

            vgrf_masskg = vgrf[vi] * (cfg.weight_n / cfg.mass_kg)
            chain_rows = np.hstack([angles[vi], vgrf_masskg[:, None],
                                    gc[vi, None], flag])
            base = self.chain_hist.n
            self.chain_hist.append(chain_rows)
            w = cfg.window_len
            firsts = base + np.arange(vi.size)  # global valid-sequence index
            ready = firsts >= w - 1
            if ready.any():
                starts = firsts[ready] - (w - 1)
                windows = self.chain_hist.data[starts[:, None] + np.arange(w)]
                moments[vi[ready]] = self.models.moment.predict(windows)
                moment_valid[vi[ready]] = True
            self.stage_wall["moments"] = time.time() * 1000.0

            angles_sm[vi] = self.angle_smoother.process(angles[vi])
            mv = np.flatnonzero(moment_valid)
            if mv.size:
                moments_sm[mv] = self.moment_smoother.process(moments[mv])

        self._log_predictions(ticks, gc, valid, vgrf, angles, angles_sm,
                              moments, moments_sm, moment_valid)
        self.ticks_processed += n
        self.valid_ticks += int(valid.sum())
        if self.last_arrival_wall is not None and not self.config.batch_at_end:
            self.batch_latency_ms.append(time.time() * 1000.0 - self.last_arrival_wall)

    def _log_predictions(self, ticks, gc, valid, vgrf, angles, angles_sm,
                         moments, moments_sm, moment_valid):
        n_m = self._n_out["moments"]
        for i in range(ticks.size):
            t = _fmt(ticks[i])
            g = _fmt(gc[i]) if valid[i] else ""
            if valid[i]:
                self.sink.put("grf_predictions", f"{t},1,{g},{_fmt(vgrf[i])}")
                avals = ",".join(_fmt(v) for v in angles[i])
                svals = ",".join(_fmt(v) for v in angles_sm[i])
                self.sink.put("angle_predictions_raw", f"{t},1,{g},{avals}")
                self.sink.put("angle_predictions_filtered", f"{t},1,{g},{svals}")
            else:
                self.sink.put("grf_predictions", ",".join([t, "0", "", ""]))
                empty = ",".join([t, "0"] + [""] * 6)
                self.sink.put("angle_predictions_raw", empty)
                self.sink.put("angle_predictions_filtered", empty)
            if moment_valid[i]:
                mvals = ",".join(_fmt(v) for v in moments[i])
                msv = ",".join(_fmt(v) for v in moments_sm[i])
                self.sink.put("moment_predictions_raw", f"{t},1,{g},{mvals}")
                self.sink.put("moment_predictions_filtered", f"{t},1,{g},{msv}")
            else:
                empty = ",".join([t, "0"] + [""] * (1 + n_m))
                self.sink.put("moment_predictions_raw", empty)
                self.sink.put("moment_predictions_filtered", empty)

    # ---------------- finish ----------------

    def finalize(self) -> tuple[PredictionLogSet, StageLatency]:
        end_wall = self.last_arrival_wall or time.time() * 1000.0
        self._advance()  # drain anything still buffered (everything, batch mode)
        lat = self.batch_latency_ms
        percentiles = {}
        if lat:
            arr = np.asarray(lat)
            percentiles = {
                "p50": float(np.percentile(arr, 50)),
                "p90": float(np.percentile(arr, 90)),
                "p99": float(np.percentile(arr, 99)),
                "max": float(arr.max()),
            }
        stage = StageLatency(
            grf_done_ms=(self.stage_wall["grf"] or end_wall) - end_wall,
            angles_done_ms=(self.stage_wall["angles"] or end_wall) - end_wall,
            moments_done_ms=(self.stage_wall["moments"] or end_wall) - end_wall,
            tick_latency_ms=percentiles,
            ticks_processed=self.ticks_processed,
            ticks_skipped=self.ticks_skipped,
        )
        self.sink.close()
        session = {
            "counts": self.demux.counts(),
            "valid_ticks": self.valid_ticks,
            "ticks_processed": self.ticks_processed,
            "ticks_skipped": self.ticks_skipped,
            "log_rows_dropped": getattr(self.sink, "dropped", 0),
            "strikes_right": self.detectors["right"].strikes,
            "strikes_left": self.detectors["left"].strikes,
            "timestamp_repairs": {c.name: c.repaired for c in self.channels.values()},
        }
        with open(self.out_dir / "session.json", "w") as f:
            json.dump(session, f, indent=1, sort_keys=True)
        with open(self.out_dir / "latency.json", "w") as f:
            json.dump(stage.as_dict(), f, indent=1, sort_keys=True)
        files = dict(self.sink.files)
        files["session"] = self.out_dir / "session.json"
        files["latency"] = self.out_dir / "latency.json"
        return PredictionLogSet(directory=self.out_dir, files=files), stage


def run_realtime(source, config: SessionConfig, models: ChainModels,
                 synchronous: bool = True) -> tuple[PredictionLogSet, StageLatency]:
    """Drive the engine from a packet source.

    synchronous=True runs ingest/process/log in one thread (deterministic,
    used for as-fast-as-possible replay); otherwise ingestion runs in its own
    thread feeding a bounded queue and logging drains through a writer thread.
    """
    engine = RealtimeEngine(config, models, synchronous=synchronous)
    if synchronous:
        for arrival, payload in source:
            engine.feed(arrival, payload)
        return engine.finalize()

    packet_q: queue.Queue = queue.Queue(maxsize=4096)

    def _ingest():
        for item in source:
            packet_q.put(item)
        packet_q.put(None)

    t = threading.Thread(target=_ingest, name="gaitrt-ingest", daemon=True)
    t.start()
    while True:
        item = packet_q.get()
        if item is None:
            break
        arrival, payload = item
        engine.feed(arrival, payload, realtime_guard=True)
    t.join()
    return engine.finalize()
