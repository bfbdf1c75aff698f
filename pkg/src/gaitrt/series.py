"""Uniformly sampled multichannel time series, the signal currency of the package."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


@dataclass
class SampleSeries:
    """A block of uniformly sampled data.

    start_time is in milliseconds since epoch, rate in Hz.  Row i was
    sampled at start_time + 1000 * i / rate.  data is (n_samples, n_channels).
    """

    start_time: float
    rate: float
    channels: list[str]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim == 1:
            self.data = self.data[:, None]
        if self.rate <= 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if self.data.shape[1] != len(self.channels):
            raise ShapeError(
                f"{self.data.shape[1]} data columns vs {len(self.channels)} channel names"
            )

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def step_ms(self) -> float:
        return 1000.0 / self.rate

    def times(self) -> np.ndarray:
        """Per-row timestamps in milliseconds."""
        return self.start_time + np.arange(self.n_samples) * (1000.0 / self.rate)

    def end_time(self) -> float:
        """Timestamp of the last row in milliseconds."""
        return self.start_time + (self.n_samples - 1) * (1000.0 / self.rate)

    def channel(self, name: str) -> np.ndarray:
        return self.data[:, self.channels.index(name)]

    def slice_rows(self, lo: int, hi: int) -> "SampleSeries":
        return SampleSeries(
            start_time=self.start_time + lo * (1000.0 / self.rate),
            rate=self.rate,
            channels=list(self.channels),
            data=self.data[lo:hi].copy(),
        )

    def slice_time(self, t0: float, t1: float) -> "SampleSeries":
        """Rows with t0 <= time < t1."""
        lo = int(np.ceil((t0 - self.start_time) * self.rate / 1000.0 - 1e-9))
        hi = int(np.ceil((t1 - self.start_time) * self.rate / 1000.0 - 1e-9))
        lo = max(lo, 0)
        hi = min(max(hi, lo), self.n_samples)
        return self.slice_rows(lo, hi)
