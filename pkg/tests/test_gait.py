import numpy as np
import numpy.testing as npt
import pytest

from gaitrt.errors import EmptyTrial, InsufficientData, OutOfStride, WarmupIncomplete
from gaitrt.gait import (
    StrideClock,
    detect_heel_strikes,
    gc_percent_offline,
    gc_percent_realtime,
    segment_cycles,
)
from gaitrt.series import SampleSeries


def brute_force_crossings(x, times, threshold, debounce_ms=300.0):
    """Independent scan oracle: first sample >= threshold after being below."""
    events = []
    last = -np.inf
    for i in range(1, len(x)):
        if x[i - 1] < threshold <= x[i] and times[i] - last >= debounce_ms:
            events.append(times[i])
            last = times[i]
    return events


class TestHeelStrikeDetection:
    def test_rising_ramp_crossing(self):
        # zero for 0.4 s then a ramp; oracle scan fixes the event time
        fs = 1000.0
        t = np.arange(2000) / fs
        x = np.where(t < 0.4, 0.0, (t - 0.4) * 1500.0)  # crosses 20 N at ~0.413 s
        s = SampleSeries(0.0, fs, ["f"], x[:, None])
        events = detect_heel_strikes(s, 20.0)
        expected = brute_force_crossings(x, s.times(), 20.0)
        assert [e.time for e in events] == expected
        assert len(events) == 1
        assert events[0].time == pytest.approx(414.0, abs=1.0)

    def test_constant_zero_no_events(self):
        s = SampleSeries(0.0, 100.0, ["f"], np.zeros((300, 1)))
        assert detect_heel_strikes(s, 20.0) == []

    def test_two_stance_humps(self):
        fs = 1000.0
        t = np.arange(3000) / fs
        hump = lambda c: 800.0 * np.exp(-((t - c) ** 2) / (2 * 0.1**2))
        x = hump(0.5) + hump(1.6)  # 1.1 s apart
        s = SampleSeries(0.0, fs, ["f"], x[:, None])
        events = detect_heel_strikes(s, 20.0)
        assert len(events) == 2
        spacing = events[1].time - events[0].time
        assert spacing == pytest.approx(1100.0, abs=1.0 + 1000.0 / fs)

    def test_debounce_suppresses_ripple(self):
        fs = 1000.0
        x = np.zeros(1000)
        x[100:110] = 30.0
        x[150:160] = 30.0  # 50 ms later: inside the debounce floor
        x[600:610] = 30.0
        s = SampleSeries(0.0, fs, ["f"], x[:, None])
        assert len(detect_heel_strikes(s, 20.0)) == 2

    def test_empty_series(self):
        s = SampleSeries(0.0, 100.0, ["f"], np.zeros((0, 1)))
        with pytest.raises(InsufficientData):
            detect_heel_strikes(s, 20.0)


class TestGcPercentOffline:
    def test_midpoint(self):
        assert gc_percent_offline(np.array([0.0, 1000.0]), 500.0) == 50.0

    def test_at_strike(self):
        assert gc_percent_offline(np.array([0.0, 1000.0]), 0.0) == 0.0

    def test_proportion(self):
        assert gc_percent_offline(np.array([0.0, 1100.0]), 275.0) == 25.0

    def test_out_of_stride(self):
        strikes = np.array([100.0, 1100.0])
        with pytest.raises(OutOfStride):
            gc_percent_offline(strikes, 50.0)
        with pytest.raises(OutOfStride):
            gc_percent_offline(strikes, 1100.0)

    def test_bijection_inverse_recovers_time(self):
        strikes = np.array([0.0, 930.0, 1910.0, 2950.0])
        for t in np.linspace(0.0, 2949.0, 97):
            gc = gc_percent_offline(strikes, t)
            i = np.searchsorted(strikes, t, side="right") - 1
            recovered = strikes[i] + gc / 100.0 * (strikes[i + 1] - strikes[i])
            assert abs(recovered - t) < 1.0  # one 1 kHz sample period


class TestStrideClock:
    def test_basic_fraction(self):
        clock = StrideClock()
        clock.observe("right", 0.0)
        clock.observe("right", 1000.0)
        assert gc_percent_realtime(clock, "right", 1400.0) == 40.0

    def test_clamp_when_stride_runs_long(self):
        clock = StrideClock()
        clock.observe("right", 0.0)
        clock.observe("right", 1000.0)
        assert gc_percent_realtime(clock, "right", 2200.0) == 99.999

    def test_900ms_stride(self):
        clock = StrideClock()
        clock.observe("left", 0.0)
        clock.observe("left", 900.0)
        assert gc_percent_realtime(clock, "left", 1350.0) == 50.0

    def test_warmup_incomplete(self):
        clock = StrideClock()
        with pytest.raises(WarmupIncomplete):
            clock.gc_percent("right", 100.0)
        clock.observe("right", 0.0)
        with pytest.raises(WarmupIncomplete):
            clock.gc_percent("right", 100.0)

    def test_matches_offline_at_constant_cadence(self):
        period = 1000.0
        strikes = np.arange(0.0, 5000.1, period)
        clock = StrideClock()
        for s in strikes[:3]:
            clock.observe("right", s)
        for t in np.linspace(2000.0, 2999.0, 23):
            offline = gc_percent_offline(strikes, t)
            assert gc_percent_realtime(clock, "right", t) == pytest.approx(
                offline, abs=1e-12)


class TestSegmentCycles:
    def _series(self, n, fs=1000.0):
        return SampleSeries(0.0, fs, ["a"], np.arange(n, dtype=float)[:, None])

    def test_single_left_segment(self):
        s = self._series(1200)
        segs = segment_cycles(s, {"left": np.array([0.0, 1100.0]),
                                  "right": np.array([550.0])})
        assert len(segs) == 1
        seg = segs[0]
        assert seg.foot == "left"
        assert seg.samples.n_samples == 1100
        assert seg.gc_percent[0] == 0.0
        assert np.all(np.diff(seg.gc_percent) > 0)
        assert np.all(seg.lead_flag == 1.0)

    def test_four_strikes_three_segments(self):
        s = self._series(3300)
        segs = segment_cycles(s, {"left": np.array([0.0, 1000.0, 2000.0, 3000.0])})
        assert len(segs) == 3

    def test_synthetic_cadence_count(self):
        # 20 s walk at 1.0 s stride -> 19 +/- 1 segments per foot
        s = self._series(20000)
        strikes = {"right": np.arange(0.0, 20000.0, 1000.0),
                   "left": np.arange(500.0, 20000.0, 1000.0)}
        segs = segment_cycles(s, strikes)
        per_foot = {"right": 0, "left": 0}
        for seg in segs:
            per_foot[seg.foot] += 1
        for foot in per_foot:
            assert abs(per_foot[foot] - 19) <= 1

    def test_empty_trial(self):
        s = self._series(100)
        with pytest.raises(EmptyTrial):
            segment_cycles(s, {"right": np.array([0.0])})
