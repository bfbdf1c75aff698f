"""Deterministic synthetic gait generator: the ground-truth oracle.

The goal is learnable, gait-shaped, inter-subject-variable signals with
exact ground truth, not biomechanical fidelity.  Joint angles and moments
are truncated Fourier series over the gait-cycle phase; IMU channels derive
analytically from segment-angle trajectories; insole channels mix
stance-phase basis functions of the vertical GRF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import (
    GRAVITY,
    GT_COLUMNS,
    IMU_AXES,
    JOINTS,
    Dataset,
    SubjectData,
    SubjectMeta,
    Trial,
)
from .errors import InsufficientDuration
from .series import SampleSeries

SENSOR_RATE = 25.0  # Hz, wearable streams
GT_RATE = 100.0  # Hz, ground-truth streams

MAG_FIELD = (20.0, 0.0, 45.0)  # arbitrary fixed field, a.u.


@dataclass
class Fourier:
    """f(phase) = a0 + sum_k a_k cos(2 pi k phase) + b_k sin(2 pi k phase)."""

    a0: float
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)

    def eval(self, phase: np.ndarray) -> np.ndarray:
        phase = np.asarray(phase, dtype=np.float64)
        out = np.full(phase.shape, self.a0)
        for k in range(1, self.a.size + 1):
            w = 2.0 * np.pi * k * phase
            out += self.a[k - 1] * np.cos(w) + self.b[k - 1] * np.sin(w)
        return out

    def deriv(self, phase: np.ndarray) -> np.ndarray:
        """df/dphase."""
        phase = np.asarray(phase, dtype=np.float64)
        out = np.zeros(phase.shape)
        for k in range(1, self.a.size + 1):
            w = 2.0 * np.pi * k * phase
            out += 2.0 * np.pi * k * (-self.a[k - 1] * np.sin(w) + self.b[k - 1] * np.cos(w))
        return out

    def deriv2(self, phase: np.ndarray) -> np.ndarray:
        """d^2 f / dphase^2."""
        phase = np.asarray(phase, dtype=np.float64)
        out = np.zeros(phase.shape)
        for k in range(1, self.a.size + 1):
            w = 2.0 * np.pi * k * phase
            out -= (2.0 * np.pi * k) ** 2 * (
                self.a[k - 1] * np.cos(w) + self.b[k - 1] * np.sin(w)
            )
        return out

    def shifted(self, dphase: float) -> "Fourier":
        """Same series with phase -> phase + dphase."""
        a = np.empty_like(self.a)
        b = np.empty_like(self.b)
        for k in range(1, self.a.size + 1):
            c, s = math.cos(2 * math.pi * k * dphase), math.sin(2 * math.pi * k * dphase)
            a[k - 1] = self.a[k - 1] * c + self.b[k - 1] * s
            b[k - 1] = -self.a[k - 1] * s + self.b[k - 1] * c
        return Fourier(self.a0, a, b)


# Canonical gait-like base shapes (degrees / N*m per 70 kg); amplitudes and
# phases get per-subject jitter in generate_cohort.
BASE_ANGLES = {
    "hipflex": Fourier(8.0, [20.0, 3.0, 0.8, 0.0, 0.0, 0.0], [6.0, -1.5, 0.4, 0.0, 0.0, 0.0]),
    "hipadd": Fourier(1.5, [4.0, -2.0, 0.5, 0.0, 0.0, 0.0], [3.0, 1.2, -0.3, 0.0, 0.0, 0.0]),
    "hiprot": Fourier(-1.0, [3.0, 1.5, 0.5, 0.0, 0.0, 0.0], [-4.0, 1.0, 0.2, 0.0, 0.0, 0.0]),
    "kneeflex": Fourier(22.0, [-10.0, -12.0, 3.0, 1.0, 0.0, 0.0], [15.0, 6.0, -2.0, 0.5, 0.0, 0.0]),
    "ankleflex": Fourier(2.0, [-6.0, -4.0, 1.5, 0.0, 0.0, 0.0], [8.0, 4.0, -1.0, 0.0, 0.0, 0.0]),
}

BASE_MOMENTS = {
    "hipflex": Fourier(5.0, [28.0, 6.0, 1.5, 0.0, 0.0, 0.0], [22.0, -8.0, 2.0, 0.0, 0.0, 0.0]),
    "hipadd": Fourier(18.0, [-14.0, -9.0, 2.0, 0.0, 0.0, 0.0], [10.0, 7.0, -1.5, 0.0, 0.0, 0.0]),
    "hiprot": Fourier(2.0, [5.0, 3.0, -1.0, 0.0, 0.0, 0.0], [-6.0, 2.5, 0.8, 0.0, 0.0, 0.0]),
    "kneeflex": Fourier(6.0, [12.0, -10.0, 4.0, 1.0, 0.0, 0.0], [-16.0, 5.0, 2.0, 0.0, 0.0, 0.0]),
    "ankleflex": Fourier(28.0, [-26.0, -12.0, 6.0, 2.0, 0.0, 0.0], [20.0, 14.0, -4.0, -1.0, 0.0, 0.0]),
}

FSR_BASIS = [(0.18, 0.12), (0.50, 0.15), (0.82, 0.12)]  # (center, width) in stance phase


@dataclass
class ImuPlacement:
    """Planar segment model: main angle drives gx/accel/mag, two small
    auxiliary angles drive gy/gz."""

    mix: dict[str, float]  # joint -> weight into the main segment angle, degrees
    offset_deg: float
    aux1: Fourier  # degrees
    aux2: Fourier
    sway: Fourier  # pseudo-translation, m


@dataclass
class NoiseLevels:
    accel: float = 0.05
    gyro: float = 1.0
    mag: float = 0.2
    fsr: float = 0.004


@dataclass
class SubjectProfile:
    subject_id: str
    mass_kg: float
    height_cm: float
    stride_period_s: float
    stance_fraction: float
    angles: dict[str, Fourier]  # right leg; left is phase-shifted by 0.5
    moments: dict[str, Fourier]
    grf_amps: tuple[float, float]
    grf_centers: tuple[float, float]
    grf_widths: tuple[float, float]
    fsr_weights: np.ndarray  # (8, len(FSR_BASIS)), non-negative
    imu: dict[str, ImuPlacement]  # "shank" | "foot"
    noise: NoiseLevels = field(default_factory=NoiseLevels)

    @property
    def weight_n(self) -> float:
        return self.mass_kg * GRAVITY

    @property
    def grf_amp_band(self) -> tuple[float, float]:
        """Admissible band for the weight-normalized vGRF peak."""
        lo = 0.95 * max(self.grf_amps)
        hi = 1.05 * (max(self.grf_amps) + 0.1)
        return lo, hi

    def phase(self, t_s: np.ndarray, foot: str) -> np.ndarray:
        shift = 0.0 if foot == "right" else 0.5
        return np.mod(t_s / self.stride_period_s + shift, 1.0)

    def vgrf_bw(self, phase: np.ndarray) -> np.ndarray:
        """Weight-normalized vertical GRF; identically zero during swing."""
        phase = np.asarray(phase, dtype=np.float64)
        sf = self.stance_fraction
        st = phase / sf
        (a1, a2), (c1, c2), (w1, w2) = self.grf_amps, self.grf_centers, self.grf_widths
        g = a1 * np.exp(-((st - c1) ** 2) / (2 * w1**2)) + a2 * np.exp(
            -((st - c2) ** 2) / (2 * w2**2)
        )
        # debias so the profile hits exactly zero at both stance ends
        g0 = a1 * math.exp(-(c1**2) / (2 * w1**2)) + a2 * math.exp(-(c2**2) / (2 * w2**2))
        g1 = a1 * math.exp(-((1 - c1) ** 2) / (2 * w1**2)) + a2 * math.exp(
            -((1 - c2) ** 2) / (2 * w2**2)
        )
        g = np.maximum(g - (g0 + (g1 - g0) * st), 0.0)
        return np.where(phase < sf, g, 0.0)

    def segment_angle_deg(self, placement: ImuPlacement, phase: np.ndarray) -> np.ndarray:
        out = np.full(np.asarray(phase).shape, placement.offset_deg)
        for joint, w in placement.mix.items():
            out += w * self.angles[joint].eval(phase)
        return out

    def segment_angle_deriv(self, placement: ImuPlacement, phase: np.ndarray) -> np.ndarray:
        out = np.zeros(np.asarray(phase).shape)
        for joint, w in placement.mix.items():
            out += w * self.angles[joint].deriv(phase)
        return out


@dataclass
class SyntheticTrial:
    trial_id: str
    profile: SubjectProfile
    insole_r: SampleSeries
    insole_l: SampleSeries
    imu_rs: SampleSeries
    imu_rf: SampleSeries
    imu_ls: SampleSeries
    imu_lf: SampleSeries
    gt: SampleSeries
    heel_strikes: dict[str, np.ndarray]

    def as_trial(self) -> Trial:
        return Trial(
            trial_id=self.trial_id,
            insole_r=self.insole_r, insole_l=self.insole_l,
            imu_rs=self.imu_rs, imu_rf=self.imu_rf,
            imu_ls=self.imu_ls, imu_lf=self.imu_lf,
            gt=self.gt, heel_strikes=self.heel_strikes,
        )


def _imu_channels(profile: SubjectProfile, placement: ImuPlacement,
                  t_s: np.ndarray, foot: str, rng: np.random.Generator,
                  noise_scale: float) -> np.ndarray:
    phase = profile.phase(t_s, foot)
    period = profile.stride_period_s
    theta = np.deg2rad(profile.segment_angle_deg(placement, phase))
    dtheta_deg = profile.segment_angle_deriv(placement, phase) / period  # deg/s
    aux1 = np.deg2rad(placement.aux1.eval(phase))
    aux2 = np.deg2rad(placement.aux2.eval(phase))
    daux1_deg = placement.aux1.deriv(phase) / period
    daux2_deg = placement.aux2.deriv(phase) / period
    # second derivative of the sway trajectory = linear acceleration term
    sway_acc = placement.sway.deriv2(phase) / period**2

    n = NoiseLevels(
        accel=profile.noise.accel * noise_scale,
        gyro=profile.noise.gyro * noise_scale,
        mag=profile.noise.mag * noise_scale,
        fsr=profile.noise.fsr * noise_scale,
    )
    size = t_s.shape[0]
    bx, _, bz = MAG_FIELD
    out = np.empty((size, 9))
    out[:, 0] = GRAVITY * np.sin(theta) + sway_acc + n.accel * rng.standard_normal(size)
    out[:, 1] = GRAVITY * np.sin(aux1) + n.accel * rng.standard_normal(size)
    out[:, 2] = GRAVITY * np.cos(theta) + n.accel * rng.standard_normal(size)
    out[:, 3] = dtheta_deg + n.gyro * rng.standard_normal(size)
    out[:, 4] = daux1_deg + n.gyro * rng.standard_normal(size)
    out[:, 5] = daux2_deg + n.gyro * rng.standard_normal(size)
    out[:, 6] = bx * np.cos(theta) - bz * np.sin(theta) + n.mag * rng.standard_normal(size)
    out[:, 7] = bx * np.sin(aux2) + n.mag * rng.standard_normal(size)
    out[:, 8] = bx * np.sin(theta) + bz * np.cos(theta) + n.mag * rng.standard_normal(size)
    return out


def _fsr_channels(profile: SubjectProfile, t_s: np.ndarray, foot: str,
                  rng: np.random.Generator, noise_scale: float) -> np.ndarray:
    phase = profile.phase(t_s, foot)
    vgrf = profile.vgrf_bw(phase)
    st = np.clip(phase / profile.stance_fraction, 0.0, 1.0)
    basis = np.stack(
        [np.exp(-((st - c) ** 2) / (2 * w**2)) for c, w in FSR_BASIS], axis=1
    )
    raw = (basis * vgrf[:, None]) @ profile.fsr_weights.T
    raw += profile.noise.fsr * noise_scale * rng.standard_normal(raw.shape)
    return np.clip(raw, 0.0, 1.0)


def generate_trial(profile: SubjectProfile, duration_s: float, seed: int,
                   trial_id: str = "trial_00", noise_scale: float = 1.0) -> SyntheticTrial:
    """Deterministic under (profile, seed); ground truth stored noise-free."""
    if duration_s < 2.0 * profile.stride_period_s:
        raise InsufficientDuration(
            f"duration {duration_s}s < 2 stride periods ({2 * profile.stride_period_s:.2f}s)"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    n25 = int(round(duration_s * SENSOR_RATE))
    t25 = np.arange(n25) / SENSOR_RATE  # seconds
    n100 = int(round(duration_s * GT_RATE))
    t100 = np.arange(n100) / GT_RATE

    series25 = {}
    for (name, foot) in (("insole_r", "right"), ("insole_l", "left")):
        series25[name] = SampleSeries(
            0.0, SENSOR_RATE, [f"fsr_{foot[0]}{i}" for i in range(1, 9)],
            _fsr_channels(profile, t25, foot, rng, noise_scale),
        )
    for (name, place, foot) in (
        ("imu_rs", "shank", "right"), ("imu_rf", "foot", "right"),
        ("imu_ls", "shank", "left"), ("imu_lf", "foot", "left"),
    ):
        series25[name] = SampleSeries(
            0.0, SENSOR_RATE, [f"imu_{name[4:]}_{a}" for a in IMU_AXES],
            _imu_channels(profile, profile.imu[place], t25, foot, rng, noise_scale),
        )

    gt = np.empty((n100, len(GT_COLUMNS)))
    col = {c: i for i, c in enumerate(GT_COLUMNS)}
    for side, foot in (("r", "right"), ("l", "left")):
        phase = profile.phase(t100, foot)
        gt[:, col[f"gt_vgrf_bw_{side}"]] = profile.vgrf_bw(phase)
        gt[:, col[f"gt_gc_percent_{side}"]] = 100.0 * phase
        for joint in JOINTS:
            gt[:, col[f"gt_angle_{joint}_{side}_deg"]] = profile.angles[joint].eval(phase)
            gt[:, col[f"gt_moment_{joint}_{side}_nm"]] = profile.moments[joint].eval(phase)
    gt_series = SampleSeries(0.0, GT_RATE, list(GT_COLUMNS), gt)

    period_ms = profile.stride_period_s * 1000.0
    end_ms = (n25 - 1) * (1000.0 / SENSOR_RATE)
    strikes_r = np.arange(0.0, end_ms + 1e-9, period_ms)
    strikes_l = np.arange(0.5 * period_ms, end_ms + 1e-9, period_ms)

    return SyntheticTrial(
        trial_id=trial_id, profile=profile,
        insole_r=series25["insole_r"], insole_l=series25["insole_l"],
        imu_rs=series25["imu_rs"], imu_rf=series25["imu_rf"],
        imu_ls=series25["imu_ls"], imu_lf=series25["imu_lf"],
        gt=gt_series,
        heel_strikes={"right": strikes_r, "left": strikes_l},
    )


def _jitter(f: Fourier, rng: np.random.Generator, amp_lo=0.85, amp_hi=1.15,
            offset=3.0, phase_jitter=0.04) -> Fourier:
    scale = rng.uniform(amp_lo, amp_hi)
    shifted = f.shifted(rng.uniform(-phase_jitter, phase_jitter))
    return Fourier(f.a0 + rng.uniform(-offset, offset), scale * shifted.a, scale * shifted.b)


def _small_fourier(rng: np.random.Generator, amp: float, harmonics: int = 2) -> Fourier:
    return Fourier(
        0.0,
        np.concatenate([rng.uniform(-amp, amp, harmonics), np.zeros(4)]),
        np.concatenate([rng.uniform(-amp, amp, harmonics), np.zeros(4)]),
    )


def make_profile(subject_id: str, rng: np.random.Generator) -> SubjectProfile:
    mass = rng.uniform(55.0, 95.0)
    angles = {j: _jitter(BASE_ANGLES[j], rng) for j in JOINTS}
    moments = {
        j: _jitter(BASE_MOMENTS[j], rng, offset=2.0) for j in JOINTS
    }
    for j in JOINTS:  # moments scale with body mass
        m = moments[j]
        s = mass / 70.0
        moments[j] = Fourier(m.a0 * s, m.a * s, m.b * s)
    imu = {}
    for place, mix in (
        ("shank", {"hipflex": rng.uniform(0.15, 0.3), "kneeflex": rng.uniform(-0.6, -0.4),
                   "ankleflex": rng.uniform(0.1, 0.2)}),
        ("foot", {"kneeflex": rng.uniform(-0.25, -0.1), "ankleflex": rng.uniform(0.7, 1.0),
                  "hipflex": rng.uniform(0.0, 0.1)}),
    ):
        imu[place] = ImuPlacement(
            mix=mix,
            offset_deg=rng.uniform(-5.0, 5.0),
            aux1=_small_fourier(rng, rng.uniform(2.0, 6.0)),
            aux2=_small_fourier(rng, rng.uniform(2.0, 6.0)),
            sway=_small_fourier(rng, rng.uniform(0.01, 0.03)),
        )
    return SubjectProfile(
        subject_id=subject_id,
        mass_kg=mass,
        height_cm=rng.uniform(160.0, 195.0),
        stride_period_s=rng.uniform(0.95, 1.25),
        stance_fraction=rng.uniform(0.58, 0.66),
        angles=angles,
        moments=moments,
        grf_amps=(rng.uniform(1.02, 1.18), rng.uniform(1.02, 1.18)),
        grf_centers=(rng.uniform(0.22, 0.28), rng.uniform(0.72, 0.78)),
        grf_widths=(rng.uniform(0.08, 0.11), rng.uniform(0.08, 0.11)),
        fsr_weights=rng.uniform(0.2, 0.7, size=(8, len(FSR_BASIS))),
        imu=imu,
    )


class OraclePerSampleModel:
    """Model stand-in that reads GC% out of its feature rows and returns the
    profile's exact value; perfect by construction."""

    def __init__(self, profile: SubjectProfile, gc_column: int, targets: str,
                 foot: str = "right"):
        self.profile = profile
        self.gc_column = gc_column
        self.targets = targets  # "vgrf" | "angles"
        self.foot = foot
        self.n_outputs = 1 if targets == "vgrf" else 5

    def predict(self, X: np.ndarray) -> np.ndarray:
        phase = np.asarray(X)[:, self.gc_column] / 100.0
        if self.targets == "vgrf":
            return self.profile.vgrf_bw(phase)[:, None]
        return np.stack([self.profile.angles[j].eval(phase) for j in
                         ("hipflex", "hipadd", "hiprot", "kneeflex", "ankleflex")],
                        axis=1)


class OracleMomentModel:
    """Window model stand-in: evaluates the moment profiles at the GC% of the
    window's last sample (the causal target alignment)."""

    def __init__(self, profile: SubjectProfile, gc_channel: int = 6):
        self.profile = profile
        self.gc_channel = gc_channel
        self.n_outputs = 5

    def predict(self, windows: np.ndarray) -> np.ndarray:
        phase = np.asarray(windows)[:, -1, self.gc_channel] / 100.0
        return np.stack([self.profile.moments[j].eval(phase) for j in
                         ("hipflex", "hipadd", "hiprot", "kneeflex", "ankleflex")],
                        axis=1)


def make_oracle_models(profile: SubjectProfile):
    """(grf, angle, moment) stand-ins matching the chained-model interfaces."""
    grf = OraclePerSampleModel(profile, gc_column=8, targets="vgrf")
    angle = OraclePerSampleModel(profile, gc_column=18, targets="angles")
    moment = OracleMomentModel(profile, gc_channel=6)
    return grf, angle, moment


def generate_cohort(n_subjects: int, seed: int, trials_per_subject: int = 3,
                    trial_duration_s: float = 20.0,
                    noise_scale: float = 1.0) -> Dataset:
    """Cohort with seeded inter-subject parameter variation."""
    if n_subjects < 1:
        raise ValueError("n_subjects must be >= 1")
    dataset = Dataset()
    for si in range(n_subjects):
        rng = np.random.default_rng(np.random.SeedSequence([seed, si]))
        profile = make_profile(f"subject_{si:02d}", rng)
        subj = SubjectData(
            meta=SubjectMeta(
                subject_id=profile.subject_id, mass_kg=profile.mass_kg,
                weight_n=profile.weight_n, height_cm=profile.height_cm,
            ),
            profile=profile,
        )
        for ti in range(trials_per_subject):
            trial_seed = int(np.random.default_rng(
                np.random.SeedSequence([seed, si, ti])).integers(0, 2**62))
            syn = generate_trial(profile, trial_duration_s, trial_seed,
                                 trial_id=f"trial_{ti:02d}", noise_scale=noise_scale)
            subj.trials.append(syn.as_trial())
        dataset.subjects.append(subj)
    return dataset
