"""Ensemble-average comparison between real-time prediction logs and a
reference dataset (the Table-style r / r^2 report)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dataset import Dataset, JOINTS
from ..errors import InsufficientData
from ..metrics import ensemble_average, pearson_r
from .realtime import JOINT_ORDER


@dataclass
class VariableComparison:
    variable: str
    r: float
    r_squared: float
    rt_mean: np.ndarray
    rt_std: np.ndarray
    ref_mean: np.ndarray
    ref_std: np.ndarray


@dataclass
class ComparisonReport:
    rows: list[VariableComparison]

    def format_lines(self) -> list[str]:
        lines = [f"{'variable':<24} {'r':>8} {'r2':>8}"]
        for row in self.rows:
            lines.append(f"{row.variable:<24} {row.r:8.4f} {row.r_squared:8.4f}")
        return lines

    def write_profiles_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["variable", "gc_percent", "rt_mean", "rt_std",
                        "ref_mean", "ref_std"])
            for row in self.rows:
                for i in range(101):
                    w.writerow([row.variable, i, repr(row.rt_mean[i]),
                                repr(row.rt_std[i]), repr(row.ref_mean[i]),
                                repr(row.ref_std[i])])


def _read_prediction_log(path, value_names: list[str]):
    """Valid rows -> (times, gc, values (n, len(value_names)))."""
    times, gcs, vals = [], [], []
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        idx = {name: header.index(name) for name in ["time_ms", "valid", "gc_percent"]}
        vidx = [header.index(n) for n in value_names]
        for row in r:
            if row[idx["valid"]] != "1":
                continue
            times.append(float(row[idx["time_ms"]]))
            gcs.append(float(row[idx["gc_percent"]]))
            vals.append([float(row[i]) for i in vidx])
    return np.asarray(times), np.asarray(gcs), np.asarray(vals)


def _cycles_from_gc(gc: np.ndarray, values: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a contiguous GC% track into complete wrap-to-wrap cycles."""
    if gc.size == 0:
        return []
    wraps = np.flatnonzero(np.diff(gc) < 0) + 1
    bounds = wraps.tolist()
    cycles = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        cycles.append((gc[lo:hi], values[lo:hi]))
    return cycles


def rt_variable_cycles(log_dir, variable: str) -> list[tuple[np.ndarray, np.ndarray]]:
    log_dir = Path(log_dir)
    if variable == "vgrf_bw":
        _, gc, vals = _read_prediction_log(log_dir / "grf_predictions.csv", ["vgrf_bw"])
    elif variable.startswith("angle_"):
        joint = variable.split("_", 1)[1]
        _, gc, vals = _read_prediction_log(
            log_dir / "angle_predictions_raw.csv", [f"{joint}_deg"])
    elif variable.startswith("moment_"):
        joint = variable.split("_", 1)[1]
        _, gc, vals = _read_prediction_log(
            log_dir / "moment_predictions_raw.csv", [f"{joint}_nm"])
    else:
        raise ValueError(variable)
    return _cycles_from_gc(gc, vals[:, 0])


def reference_variable_cycles(dataset: Dataset, variable: str,
                              side: str = "r") -> list[tuple[np.ndarray, np.ndarray]]:
    if variable == "vgrf_bw":
        col = f"gt_vgrf_bw_{side}"
    elif variable.startswith("angle_"):
        col = f"gt_angle_{variable.split('_', 1)[1]}_{side}_deg"
    elif variable.startswith("moment_"):
        col = f"gt_moment_{variable.split('_', 1)[1]}_{side}_nm"
    else:
        raise ValueError(variable)
    cycles = []
    for subj in dataset.subjects:
        for trial in subj.trials:
            gc = trial.gt.channel(f"gt_gc_percent_{side}")
            vals = trial.gt.channel(col)
            cycles.extend(_cycles_from_gc(gc, vals))
    return cycles


ALL_VARIABLES = (["vgrf_bw"] + [f"angle_{j}" for j in JOINT_ORDER]
                 + [f"moment_{j}" for j in JOINT_ORDER])


def compare_to_reference(log_dir, dataset: Dataset,
                         variables: list[str] | None = None,
                         side: str = "r") -> ComparisonReport:
    """Pearson r and r^2 between the 101-point mean GC% profiles of the
    real-time predictions and the reference ground truth."""
    variables = variables or ALL_VARIABLES
    rows = []
    for var in variables:
        rt_cycles = rt_variable_cycles(log_dir, var)
        if not rt_cycles:
            raise InsufficientData(f"no complete real-time cycle for {var}")
        ref_cycles = reference_variable_cycles(dataset, var, side)
        if not ref_cycles:
            raise InsufficientData(f"no reference cycle for {var}")
        _, rt_mean, rt_std = ensemble_average(rt_cycles)
        _, ref_mean, ref_std = ensemble_average(ref_cycles)
        r = pearson_r(ref_mean, rt_mean)
        rows.append(VariableComparison(
            variable=var, r=r, r_squared=_profile_r2(ref_mean, rt_mean),
            rt_mean=rt_mean, rt_std=rt_std, ref_mean=ref_mean, ref_std=ref_std,
        ))
    return ComparisonReport(rows=rows)


def _profile_r2(ref: np.ndarray, rt: np.ndarray) -> float:
    ss_tot = float(np.sum((ref - ref.mean()) ** 2))
    ss_res = float(np.sum((rt - ref) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
