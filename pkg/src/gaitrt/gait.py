"""Heel-strike detection, stride segmentation, and gait-cycle percentage."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTrial, InsufficientData, OutOfStride, WarmupIncomplete
from .series import SampleSeries

DEBOUNCE_MS = 300.0
GC_CLAMP = 99.999


@dataclass(frozen=True)
class HeelStrikeEvent:
    time: float  # ms
    foot: str  # "left" | "right"
    source: str = "insole"  # "forceplate" | "insole"


def detect_heel_strikes(
    series: SampleSeries,
    threshold: float,
    foot: str = "right",
    source: str = "forceplate",
    debounce_ms: float = DEBOUNCE_MS,
) -> list[HeelStrikeEvent]:
    """Upward threshold crossings (prev < thr <= cur) with a debounce floor."""
    if series.n_samples == 0:
        raise InsufficientData("empty series")
    if series.n_channels != 1:
        raise ValueError("heel-strike detection expects a single-channel series")
    x = series.data[:, 0]
    above = x >= threshold
    crossings = np.flatnonzero(above[1:] & ~above[:-1]) + 1
    times = series.times()
    events: list[HeelStrikeEvent] = []
    last = -np.inf
    for i in crossings:
        t = times[i]
        if t - last >= debounce_ms:
            events.append(HeelStrikeEvent(time=float(t), foot=foot, source=source))
            last = t
    return events


def gc_percent_offline(strike_times: np.ndarray, t: float) -> float:
    """GC% of instant t inside the stride [s_i, s_{i+1}) delimited by same-foot strikes."""
    strikes = np.asarray(strike_times, dtype=np.float64)
    if strikes.size < 2:
        raise OutOfStride("need at least two strikes to delimit a stride")
    if t < strikes[0] or t >= strikes[-1]:
        raise OutOfStride(f"t={t} outside [{strikes[0]}, {strikes[-1]})")
    i = int(np.searchsorted(strikes, t, side="right")) - 1
    return 100.0 * (t - strikes[i]) / (strikes[i + 1] - strikes[i])


@dataclass
class StrideClock:
    """Live per-foot stride state: last strike time and previous stride duration."""

    last_strike: dict[str, float] = field(default_factory=dict)
    prev_duration: dict[str, float] = field(default_factory=dict)

    def observe(self, foot: str, t: float) -> None:
        if foot in self.last_strike:
            self.prev_duration[foot] = t - self.last_strike[foot]
        self.last_strike[foot] = t

    def ready(self, foot: str) -> bool:
        return foot in self.prev_duration and self.prev_duration[foot] > 0

    def gc_percent(self, foot: str, t: float) -> float:
        """Extrapolated GC% from the previous stride, clamped below 100."""
        if not self.ready(foot):
            raise WarmupIncomplete(f"fewer than 2 strikes observed for {foot} foot")
        raw = 100.0 * (t - self.last_strike[foot]) / self.prev_duration[foot]
        return min(raw, GC_CLAMP)


def gc_percent_realtime(clock: StrideClock, foot: str, t: float) -> float:
    return clock.gc_percent(foot, t)


@dataclass
class GaitCycleSegment:
    """One complete stride of a trial, sliced from a 1 kHz aligned series."""

    subject_id: str
    trial_id: str
    foot: str
    samples: SampleSeries
    gc_percent: np.ndarray
    start_ms: float
    duration_ms: float

    @property
    def lead_flag(self) -> np.ndarray:
        """1 for every sample: the segment's own leg is by definition the lead leg."""
        return np.ones(self.samples.n_samples)


def segment_cycles(
    series: SampleSeries,
    strikes_by_foot: dict[str, np.ndarray],
    subject_id: str = "",
    trial_id: str = "",
) -> list[GaitCycleSegment]:
    """One segment per complete same-foot stride, all channels trimmed to it."""
    segments: list[GaitCycleSegment] = []
    for foot in sorted(strikes_by_foot):
        strikes = np.asarray(strikes_by_foot[foot], dtype=np.float64)
        for s0, s1 in zip(strikes[:-1], strikes[1:]):
            sl = series.slice_time(s0, s1)
            if sl.n_samples == 0:
                continue
            gc = 100.0 * (sl.times() - s0) / (s1 - s0)
            segments.append(
                GaitCycleSegment(
                    subject_id=subject_id,
                    trial_id=trial_id,
                    foot=foot,
                    samples=sl,
                    gc_percent=gc,
                    start_ms=float(s0),
                    duration_ms=float(s1 - s0),
                )
            )
    if not segments:
        raise EmptyTrial("no complete stride in trial")
    segments.sort(key=lambda s: (s.start_ms, s.foot))
    return segments
