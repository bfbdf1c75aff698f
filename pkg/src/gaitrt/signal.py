"""Resampling, causal IIR filtering, and feature standardization.

All filtering here is causal (the real-time path and the training path run
the exact same difference equations), and every designed filter is a cascade
of second-order sections.  A single expanded numerator/denominator polynomial
cannot represent a narrow low-frequency Butterworth at 1 kHz in double
precision (the rounded polynomial's roots land outside the unit circle), so
coefficients are kept per-section and never expanded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .errors import InsufficientData, InvalidCutoff, InvalidOrder, ShapeError
from .series import SampleSeries


def resample_linear(series: SampleSeries, target_rate: float) -> SampleSeries:
    """Resample onto a uniform target_rate grid by linear interpolation.

    The output grid starts at series.start_time and never extends past the
    final input sample, so no extrapolation occurs.
    """
    if series.n_samples < 2:
        raise InsufficientData(
            f"resampling needs >= 2 samples, got {series.n_samples}"
        )
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    # relative times keep interpolation exact when grid instants coincide
    t_in = np.arange(series.n_samples) * (1000.0 / series.rate)
    n_out = int(math.floor((series.n_samples - 1) * target_rate / series.rate + 1e-9)) + 1
    t_out = np.arange(n_out) * (1000.0 / target_rate)
    out = np.empty((n_out, series.n_channels))
    for c in range(series.n_channels):
        out[:, c] = np.interp(t_out, t_in, series.data[:, c])
    return SampleSeries(
        start_time=series.start_time,
        rate=target_rate,
        channels=list(series.channels),
        data=out,
    )


@dataclass
class IirFilter:
    """Causal IIR filter as a cascade of second-order sections.

    sos is (n_sections, 6): [b0, b1, b2, a0, a1, a2] per section with a0 = 1.
    state carries the per-channel direct-form-II-transposed delay lines so
    chunked filtering is bit-identical to whole-signal filtering.
    """

    sos: np.ndarray
    state: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_sections(self) -> int:
        return self.sos.shape[0]

    def reset(self) -> None:
        self.state = None

    def copy(self) -> "IirFilter":
        return IirFilter(sos=self.sos.copy(), state=None)

    def process(self, data: np.ndarray) -> np.ndarray:
        """Filter (n, channels) sample-by-sample, persisting state across calls."""
        data = np.asarray(data, dtype=np.float64)
        squeeze = data.ndim == 1
        if squeeze:
            data = data[:, None]
        n_ch = data.shape[1]
        if self.state is None:
            self.state = np.zeros((self.n_sections, 2, n_ch))
        elif self.state.shape[2] != n_ch:
            raise ShapeError(
                f"filter state holds {self.state.shape[2]} channels, chunk has {n_ch}"
            )
        if data.shape[0] == 0:
            return data[:, 0] if squeeze else data
        out, self.state = scipy.signal.sosfilt(self.sos, data, axis=0, zi=self.state)
        return out[:, 0] if squeeze else out


def design_butterworth(
    order: int, kind: str, cutoffs, sample_rate: float
) -> IirFilter:
    """Digital Butterworth filter via bilinear transform with pre-warping.

    kind is "lowpass" (one cutoff) or "bandpass" (two ascending cutoffs).
    """
    if order < 1:
        raise InvalidOrder(f"order must be >= 1, got {order}")
    cutoffs = [float(c) for c in np.atleast_1d(cutoffs)]
    nyq = sample_rate / 2.0
    for c in cutoffs:
        if not 0.0 < c < nyq:
            raise InvalidCutoff(f"cutoff {c} Hz not inside (0, {nyq}) Hz")
    if kind == "lowpass":
        if len(cutoffs) != 1:
            raise InvalidCutoff("lowpass takes exactly one cutoff")
    elif kind == "bandpass":
        if len(cutoffs) != 2 or not cutoffs[0] < cutoffs[1]:
            raise InvalidCutoff("bandpass takes two ascending cutoffs")
    else:
        raise ValueError(f"unknown filter kind {kind!r}")

    fs = float(sample_rate)
    # analog lowpass prototype: poles on the unit circle, left half plane
    k = np.arange(order)
    proto = np.exp(1j * np.pi * (2 * k + order + 1) / (2 * order))
    warped = [2.0 * fs * math.tan(math.pi * c / fs) for c in cutoffs]

    if kind == "lowpass":
        wc = warped[0]
        poles = wc * proto
        zeros = np.zeros(0, dtype=complex)
        gain = wc**order
        n_zeros_at_plus1 = 0
    else:
        w1, w2 = warped
        bw = w2 - w1
        w0 = math.sqrt(w1 * w2)
        t = proto * (bw / 2.0)
        disc = np.sqrt(t * t - w0 * w0 + 0j)
        poles = np.concatenate([t + disc, t - disc])
        zeros = np.zeros(order, dtype=complex)
        gain = bw**order
        n_zeros_at_plus1 = order

    # bilinear transform, s = 2*fs*(z-1)/(z+1)
    fs2 = 2.0 * fs
    zpoles = (fs2 + poles) / (fs2 - poles)
    zzeros = (fs2 + zeros) / (fs2 - zeros)
    gain = gain * float(np.real(np.prod(fs2 - zeros) / np.prod(fs2 - poles)))
    n_minus1 = len(zpoles) - n_zeros_at_plus1  # degree padding lands at z = -1

    sos = _pair_sections(zpoles, n_zeros_at_plus1, n_minus1)
    sos[0, :3] *= gain
    return IirFilter(sos=sos)


def _pair_sections(zpoles: np.ndarray, n_plus1: int, n_minus1: int) -> np.ndarray:
    """Combine digital poles into real biquads; zeros are all at z = +1 or -1."""
    cplx = zpoles[zpoles.imag > 1e-12]
    reals = np.sort(zpoles[np.abs(zpoles.imag) <= 1e-12].real)
    denoms = []
    for p in sorted(cplx, key=lambda c: (abs(c), c.real)):
        denoms.append((1.0, -2.0 * p.real, float((p * p.conjugate()).real), 2))
    i = 0
    while i + 1 < len(reals):
        denoms.append((1.0, -(reals[i] + reals[i + 1]), reals[i] * reals[i + 1], 2))
        i += 2
    if i < len(reals):
        denoms.append((1.0, -reals[i], 0.0, 1))

    sections = np.zeros((len(denoms), 6))
    for j, (a0, a1, a2, npoles) in enumerate(denoms):
        roots = []
        for _ in range(npoles):
            if n_minus1 > 0:
                roots.append(-1.0)
                n_minus1 -= 1
            elif n_plus1 > 0:
                roots.append(1.0)
                n_plus1 -= 1
        if len(roots) == 2:
            b = (1.0, -(roots[0] + roots[1]), roots[0] * roots[1])
        elif len(roots) == 1:
            b = (1.0, -roots[0], 0.0)
        else:
            b = (1.0, 0.0, 0.0)
        sections[j, :3] = b
        sections[j, 3:] = (a0, a1, a2)
    return sections


def filter_stream(filt: IirFilter, chunk: SampleSeries) -> SampleSeries:
    """Apply the difference equations to a chunk, persisting filter state."""
    out = filt.process(chunk.data)
    return SampleSeries(
        start_time=chunk.start_time,
        rate=chunk.rate,
        channels=list(chunk.channels),
        data=out,
    )


def frequency_response(filt: IirFilter, freqs, sample_rate: float) -> np.ndarray:
    """Complex response H(e^{j 2 pi f / fs}) evaluated per section."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
    z = np.exp(2j * np.pi * freqs / sample_rate)
    h = np.ones_like(z)
    for b0, b1, b2, a0, a1, a2 in filt.sos:
        h *= (b0 + b1 / z + b2 / z**2) / (a0 + a1 / z + a2 / z**2)
    return h


@dataclass
class StandardScaler:
    """Per-feature (x - mean) / std with the population (divide-by-N) std.

    Zero-variance features transform to 0 so constant flags stay harmless.
    """

    mean: np.ndarray
    std: np.ndarray

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    def transform(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape[-1] != self.n_features:
            raise ShapeError(
                f"scaler fitted on {self.n_features} features, got {rows.shape[-1]}"
            )
        safe = np.where(self.std > 0.0, self.std, 1.0)
        out = (rows - self.mean) / safe
        if np.any(self.std == 0.0):
            out = np.where(self.std > 0.0, out, 0.0)
        return out

    def inverse_transform(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape[-1] != self.n_features:
            raise ShapeError(
                f"scaler fitted on {self.n_features} features, got {rows.shape[-1]}"
            )
        return rows * self.std + self.mean


def scaler_fit(rows: np.ndarray) -> StandardScaler:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise InsufficientData("scaler_fit needs at least one row")
    return StandardScaler(mean=rows.mean(axis=0), std=rows.std(axis=0))


def scaler_transform(scaler: StandardScaler, rows: np.ndarray) -> np.ndarray:
    return scaler.transform(rows)
