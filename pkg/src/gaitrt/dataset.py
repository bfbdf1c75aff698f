"""Dataset containers and the on-disk trial format.

A dataset directory holds one metadata.json plus one CSV per trial.  Trial
CSVs interleave 25 Hz sensor rows (empty ground-truth cells) with 100 Hz
ground-truth rows (empty sensor cells); rows align by time_ms.  Column order
is fixed and documented in the README.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .series import SampleSeries

GRAVITY = 9.80665  # m/s^2, converts body-weight units to N/kg

JOINTS = ["hipflex", "hipadd", "hiprot", "kneeflex", "ankleflex"]
SIDES = ["r", "l"]

IMU_AXES = ["ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz"]
IMU_SENSORS = ["rs", "rf", "ls", "lf"]  # right/left shank, right/left foot

FSR_COLUMNS = [f"fsr_{s}{i}" for s in SIDES for i in range(1, 9)]
IMU_COLUMNS = [f"imu_{sensor}_{axis}" for sensor in IMU_SENSORS for axis in IMU_AXES]
SENSOR_COLUMNS = FSR_COLUMNS + IMU_COLUMNS

GT_COLUMNS = (
    [f"gt_vgrf_bw_{s}" for s in SIDES]
    + [f"gt_angle_{j}_{s}_deg" for j in JOINTS for s in SIDES]
    + [f"gt_moment_{j}_{s}_nm" for j in JOINTS for s in SIDES]
    + [f"gt_gc_percent_{s}" for s in SIDES]
)

CSV_HEADER = ["time_ms"] + SENSOR_COLUMNS + GT_COLUMNS


@dataclass
class SubjectMeta:
    subject_id: str
    mass_kg: float
    weight_n: float
    height_cm: float


@dataclass
class Trial:
    trial_id: str
    insole_r: SampleSeries
    insole_l: SampleSeries
    imu_rs: SampleSeries
    imu_rf: SampleSeries
    imu_ls: SampleSeries
    imu_lf: SampleSeries
    gt: SampleSeries
    heel_strikes: dict[str, np.ndarray]  # foot -> ms, exact

    def sensor_series(self) -> dict[str, SampleSeries]:
        return {
            "insole_r": self.insole_r,
            "insole_l": self.insole_l,
            "imu_rs": self.imu_rs,
            "imu_rf": self.imu_rf,
            "imu_ls": self.imu_ls,
            "imu_lf": self.imu_lf,
        }


@dataclass
class SubjectData:
    meta: SubjectMeta
    trials: list[Trial] = field(default_factory=list)
    profile: object | None = None  # generator profile when synthetic


@dataclass
class Dataset:
    subjects: list[SubjectData] = field(default_factory=list)

    def subject(self, subject_id: str) -> SubjectData:
        for s in self.subjects:
            if s.meta.subject_id == subject_id:
                return s
        raise KeyError(subject_id)


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if float(x).is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(float(x))


def write_trial_csv(trial: Trial, path) -> None:
    sensors = trial.sensor_series()
    sensor_rows = {}
    # every sensor stream shares the 25 Hz grid, so rows merge by timestamp
    for name, series in sensors.items():
        times = series.times()
        for i, t in enumerate(times):
            sensor_rows.setdefault(float(t), {})[name] = series.data[i]
    gt_times = trial.gt.times()

    records = []
    for t, chunks in sensor_rows.items():
        records.append((t, 0, chunks))
    for i, t in enumerate(gt_times):
        records.append((float(t), 1, trial.gt.data[i]))
    records.sort(key=lambda r: (r[0], r[1]))

    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_HEADER)
        n_sensor = len(SENSOR_COLUMNS)
        for t, kind, payload in records:
            if kind == 0:
                cells = []
                for name in ("insole_r", "insole_l"):
                    cells.extend(_fmt(v) for v in payload[name])
                for name in ("imu_rs", "imu_rf", "imu_ls", "imu_lf"):
                    cells.extend(_fmt(v) for v in payload[name])
                row = [_fmt(t)] + cells + [""] * len(GT_COLUMNS)
            else:
                row = [_fmt(t)] + [""] * n_sensor + [_fmt(v) for v in payload]
            w.writerow(row)


def _series_from_rows(times: list[float], rows: list[list[float]],
                      channels: list[str], path, what: str) -> SampleSeries:
    if len(times) < 2:
        raise DataError(f"{path}: fewer than 2 {what} rows")
    t = np.asarray(times)
    steps = np.diff(t)
    step = steps[0]
    if not np.allclose(steps, step, rtol=0, atol=1e-6):
        raise FormatError(f"{path}: non-uniform {what} timestamps")
    return SampleSeries(
        start_time=float(t[0]),
        rate=1000.0 / step,
        channels=channels,
        data=np.asarray(rows),
    )


def read_trial_csv(path) -> tuple[SampleSeries, SampleSeries]:
    """Returns (sensor series at 25 Hz with 52 channels, gt series at 100 Hz)."""
    path = Path(path)
    with open(path, newline="") as f:
        r = csv.reader(f)
        try:
            header = next(r)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if header != CSV_HEADER:
            missing = [c for c in CSV_HEADER if c not in header]
            if missing:
                raise FormatError(f"{path}: line 1: missing columns {missing}")
            raise FormatError(f"{path}: line 1: unexpected column order")
        n_sensor = len(SENSOR_COLUMNS)
        sensor_times: list[float] = []
        sensor_rows: list[list[float]] = []
        gt_times: list[float] = []
        gt_rows: list[list[float]] = []
        for lineno, row in enumerate(r, start=2):
            if len(row) != len(CSV_HEADER):
                raise DataError(f"{path}: line {lineno}: truncated row "
                                f"({len(row)} of {len(CSV_HEADER)} cells)")
            t = _parse_cell(row[0], path, lineno, "time_ms")
            sensor_cells = row[1 : 1 + n_sensor]
            gt_cells = row[1 + n_sensor :]
            if sensor_cells[0] != "":
                vals = [_parse_cell(c, path, lineno, name)
                        for c, name in zip(sensor_cells, SENSOR_COLUMNS)]
                sensor_times.append(t)
                sensor_rows.append(vals)
            elif gt_cells[0] != "":
                vals = [_parse_cell(c, path, lineno, name)
                        for c, name in zip(gt_cells, GT_COLUMNS)]
                gt_times.append(t)
                gt_rows.append(vals)
            else:
                raise DataError(f"{path}: line {lineno}: row carries neither "
                                "sensor nor ground-truth cells")
    sensors = _series_from_rows(sensor_times, sensor_rows, list(SENSOR_COLUMNS),
                                path, "sensor")
    gt = _series_from_rows(gt_times, gt_rows, list(GT_COLUMNS), path, "ground-truth")
    return sensors, gt


def _parse_cell(cell: str, path, lineno: int, name: str) -> float:
    if cell == "":
        raise DataError(f"{path}: line {lineno}: empty required cell {name}")
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"{path}: line {lineno}: bad value {cell!r} in {name}") from None
    if math.isnan(v):
        raise DataError(f"{path}: line {lineno}: NaN in required column {name}")
    return v


def _split_sensor_series(merged: SampleSeries) -> dict[str, SampleSeries]:
    def pick(cols: list[str]) -> SampleSeries:
        idx = [merged.channels.index(c) for c in cols]
        return SampleSeries(
            start_time=merged.start_time, rate=merged.rate,
            channels=cols, data=merged.data[:, idx],
        )

    out = {
        "insole_r": pick([f"fsr_r{i}" for i in range(1, 9)]),
        "insole_l": pick([f"fsr_l{i}" for i in range(1, 9)]),
    }
    for sensor in IMU_SENSORS:
        out[f"imu_{sensor}"] = pick([f"imu_{sensor}_{a}" for a in IMU_AXES])
    return out


def write_dataset(dataset: Dataset, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"format": "gaitrt-dataset", "version": 1, "subjects": []}
    for subj in dataset.subjects:
        entry = {
            "subject_id": subj.meta.subject_id,
            "mass_kg": subj.meta.mass_kg,
            "weight_n": subj.meta.weight_n,
            "height_cm": subj.meta.height_cm,
            "trials": [],
        }
        for trial in subj.trials:
            fname = f"{subj.meta.subject_id}_{trial.trial_id}.csv"
            write_trial_csv(trial, out_dir / fname)
            entry["trials"].append({
                "trial_id": trial.trial_id,
                "file": fname,
                "heel_strikes_right_ms": [float(t) for t in trial.heel_strikes["right"]],
                "heel_strikes_left_ms": [float(t) for t in trial.heel_strikes["left"]],
            })
        meta["subjects"].append(entry)
    with open(out_dir / "metadata.json", "w") as f:
        json.dump(meta, f, indent=1, sort_keys=True)
        f.write("\n")


def read_dataset(path) -> Dataset:
    path = Path(path)
    meta_path = path / "metadata.json"
    if not meta_path.exists():
        raise FormatError(f"{meta_path} not found")
    with open(meta_path) as f:
        try:
            meta = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"{meta_path}: line {e.lineno}: {e.msg}") from None
    if meta.get("format") != "gaitrt-dataset":
        raise FormatError(f"{meta_path}: not a gaitrt dataset")
    dataset = Dataset()
    for s in meta["subjects"]:
        subj = SubjectData(meta=SubjectMeta(
            subject_id=s["subject_id"], mass_kg=s["mass_kg"],
            weight_n=s["weight_n"], height_cm=s["height_cm"],
        ))
        for t in s["trials"]:
            sensors_merged, gt = read_trial_csv(path / t["file"])
            parts = _split_sensor_series(sensors_merged)
            subj.trials.append(Trial(
                trial_id=t["trial_id"],
                insole_r=parts["insole_r"], insole_l=parts["insole_l"],
                imu_rs=parts["imu_rs"], imu_rf=parts["imu_rf"],
                imu_ls=parts["imu_ls"], imu_lf=parts["imu_lf"],
                gt=gt,
                heel_strikes={
                    "right": np.asarray(t["heel_strikes_right_ms"], dtype=np.float64),
                    "left": np.asarray(t["heel_strikes_left_ms"], dtype=np.float64),
                },
            ))
        dataset.subjects.append(subj)
    return dataset
