"""Evaluation metrics: RMSE, range-normalized RMSE/MAE, Pearson r, R^2,
ensemble averaging over the gait-cycle grid, and fold aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorrelationUndefined, EmptyInput, RangeError

GC_GRID = np.arange(101.0)  # 0..100 %, step 1


def _check(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.size == 0 or y_true.size != y_pred.size:
        raise EmptyInput(
            f"series must be equal nonzero lengths, got {y_true.size} and {y_pred.size}"
        )
    return y_true, y_pred


def rmse(y_true, y_pred) -> float:
    y_true, y_pred = _check(y_true, y_pred)
    return float(np.sqrt(np.mean((y_pred - y_true) ** 2)))


def nrmse(y_true, y_pred) -> float:
    """RMSE as a percentage of the ground-truth range."""
    y_true, y_pred = _check(y_true, y_pred)
    rng = float(y_true.max() - y_true.min())
    if rng <= 0.0:
        raise RangeError("ground truth has zero range")
    return 100.0 * rmse(y_true, y_pred) / rng


def nmae(y_true, y_pred) -> float:
    """Mean absolute error as a percentage of the ground-truth range."""
    y_true, y_pred = _check(y_true, y_pred)
    rng = float(y_true.max() - y_true.min())
    if rng <= 0.0:
        raise RangeError("ground truth has zero range")
    return 100.0 * float(np.mean(np.abs(y_pred - y_true))) / rng


def pearson_r(y_true, y_pred) -> float:
    y_true, y_pred = _check(y_true, y_pred)
    a = y_true - y_true.mean()
    b = y_pred - y_pred.mean()
    sa = float(np.sqrt(np.sum(a * a)))
    sb = float(np.sqrt(np.sum(b * b)))
    if sa == 0.0 or sb == 0.0:
        raise CorrelationUndefined("zero variance in one of the series")
    return float(np.sum(a * b)) / (sa * sb)


def r_squared(y_true, y_pred) -> float:
    """Coefficient of determination, 1 - SSres/SStot."""
    y_true, y_pred = _check(y_true, y_pred)
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise RangeError("ground truth has zero variance")
    ss_res = float(np.sum((y_pred - y_true) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass
class MetricReport:
    """Per-evaluation-unit metrics; fields undefined for degenerate inputs are None."""

    rmse: float
    nrmse: float | None
    nmae: float | None
    pearson_r: float | None
    r_squared: float | None
    n_samples: int

    def as_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "nrmse": self.nrmse,
            "nmae": self.nmae,
            "pearson_r": self.pearson_r,
            "r_squared": self.r_squared,
            "n_samples": self.n_samples,
        }

    def format_line(self) -> str:
        parts = [f"n={self.n_samples}", f"rmse={self.rmse:.6g}"]
        for key in ("nrmse", "nmae", "pearson_r", "r_squared"):
            v = getattr(self, key)
            parts.append(f"{key}={'nan' if v is None else format(v, '.6g')}")
        return " ".join(parts)


def compute_report(y_true, y_pred) -> MetricReport:
    y_true, y_pred = _check(y_true, y_pred)
    try:
        v_nrmse, v_nmae = nrmse(y_true, y_pred), nmae(y_true, y_pred)
    except RangeError:
        v_nrmse = v_nmae = None
    try:
        v_r = pearson_r(y_true, y_pred)
    except CorrelationUndefined:
        v_r = None
    try:
        v_r2 = r_squared(y_true, y_pred)
    except RangeError:
        v_r2 = None
    return MetricReport(
        rmse=rmse(y_true, y_pred),
        nrmse=v_nrmse,
        nmae=v_nmae,
        pearson_r=v_r,
        r_squared=v_r2,
        n_samples=int(y_true.size),
    )


def ensemble_average(segments) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean and population-std profiles over the 101-point GC% grid.

    segments is an iterable of (gc_percent, values) pairs; each segment is
    linearly interpolated onto the grid (edge-held at the wrap point).
    Returns (grid, mean, std).
    """
    profiles = []
    for gc, values in segments:
        gc = np.asarray(gc, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        profiles.append(np.interp(GC_GRID, gc, values))
    if not profiles:
        raise EmptyInput("no segments to average")
    stack = np.vstack(profiles)
    return GC_GRID.copy(), stack.mean(axis=0), stack.std(axis=0)


def fold_aggregate(reports: list[MetricReport]) -> dict[str, tuple[float, float]]:
    """mean +/- sample (N-1) std per metric across folds; std of one report is 0."""
    if not reports:
        raise EmptyInput("no reports to aggregate")
    out: dict[str, tuple[float, float]] = {}
    for key in ("rmse", "nrmse", "nmae", "pearson_r", "r_squared"):
        vals = [getattr(r, key) for r in reports if getattr(r, key) is not None]
        if not vals:
            continue
        arr = np.asarray(vals, dtype=np.float64)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        out[key] = (float(arr.mean()), std)
    return out
