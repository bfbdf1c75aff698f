import numpy as np
import numpy.testing as npt
import pytest

from gaitrt.dataset import read_dataset, write_dataset, write_trial_csv, read_trial_csv
from gaitrt.errors import DataError, FormatError, InsufficientDuration
from gaitrt.forest import ForestParams, fit_forest
from gaitrt.gait import gc_percent_offline
from gaitrt.synth import (
    Fourier,
    generate_cohort,
    generate_trial,
    make_profile,
)


def fourier_deriv_oracle(f: Fourier, phase: np.ndarray) -> np.ndarray:
    """Independent derivative evaluation (different code path from synth)."""
    out = np.zeros_like(phase)
    for k in range(1, f.a.size + 1):
        w = 2.0 * np.pi * k
        out += w * (-f.a[k - 1] * np.sin(w * phase) + f.b[k - 1] * np.cos(w * phase))
    return out


class TestGenerateTrial:
    def test_deterministic_bit_identical(self, clean_profile):
        a = generate_trial(clean_profile, 8.0, seed=3)
        b = generate_trial(clean_profile, 8.0, seed=3)
        npt.assert_array_equal(a.imu_rs.data, b.imu_rs.data)
        npt.assert_array_equal(a.insole_l.data, b.insole_l.data)
        npt.assert_array_equal(a.gt.data, b.gt.data)

    def test_gyro_is_analytic_derivative_when_noise_free(self, clean_profile):
        syn = generate_trial(clean_profile, 6.0, seed=1, noise_scale=0.0)
        t_s = np.arange(syn.imu_rs.n_samples) / 25.0
        phase = clean_profile.phase(t_s, "right")
        place = clean_profile.imu["shank"]
        expected = np.zeros_like(t_s)
        for joint, w in place.mix.items():
            expected += w * fourier_deriv_oracle(clean_profile.angles[joint], phase)
        expected /= clean_profile.stride_period_s
        npt.assert_allclose(syn.imu_rs.channel("imu_rs_gx"), expected,
                            rtol=1e-10, atol=1e-9)

    def test_heel_strikes_exact_multiples(self, clean_profile):
        syn = generate_trial(clean_profile, 10.0, seed=2)
        period = clean_profile.stride_period_s * 1000.0
        npt.assert_allclose(syn.heel_strikes["right"],
                            np.arange(len(syn.heel_strikes["right"])) * period,
                            atol=1e-9)
        npt.assert_allclose(syn.heel_strikes["left"][0], 0.5 * period, atol=1e-9)

    def test_vgrf_peak_within_band(self, clean_profile):
        syn = generate_trial(clean_profile, 10.0, seed=2, noise_scale=0.0)
        peak = syn.gt.channel("gt_vgrf_bw_r").max()
        lo, hi = clean_profile.grf_amp_band
        assert lo <= peak <= hi

    def test_vgrf_zero_during_swing(self, clean_profile):
        syn = generate_trial(clean_profile, 10.0, seed=2, noise_scale=0.0)
        gc = syn.gt.channel("gt_gc_percent_r")
        vgrf = syn.gt.channel("gt_vgrf_bw_r")
        swing = gc >= 100.0 * clean_profile.stance_fraction
        assert np.all(vgrf[swing] == 0.0)

    def test_fsr_nonnegative_saturating(self, clean_profile):
        syn = generate_trial(clean_profile, 10.0, seed=2)
        assert syn.insole_r.data.min() >= 0.0
        assert syn.insole_r.data.max() <= 1.0

    def test_duration_too_short(self, clean_profile):
        with pytest.raises(InsufficientDuration):
            generate_trial(clean_profile, 1.0, seed=0)

    def test_gc_consistency_offline(self, clean_profile):
        # GC% recomputed from generated strikes matches the stored track
        syn = generate_trial(clean_profile, 10.0, seed=4, noise_scale=0.0)
        strikes = syn.heel_strikes["right"]
        gc_stored = syn.gt.channel("gt_gc_percent_r")
        times = syn.gt.times()
        sample_period_gc = 100.0 * (10.0 / (clean_profile.stride_period_s * 1000.0))
        for i in range(20, syn.gt.n_samples, 97):
            t = times[i]
            if strikes[0] <= t < strikes[-1]:
                gc = gc_percent_offline(strikes, t)
                assert abs(gc - gc_stored[i]) <= sample_period_gc + 1e-9


class TestGenerateCohort:
    def test_same_seed_identical(self):
        a = generate_cohort(2, seed=5, trials_per_subject=1, trial_duration_s=4.0)
        b = generate_cohort(2, seed=5, trials_per_subject=1, trial_duration_s=4.0)
        for sa, sb in zip(a.subjects, b.subjects):
            assert sa.meta == sb.meta
            npt.assert_array_equal(sa.trials[0].gt.data, sb.trials[0].gt.data)

    def test_subjects_vary(self):
        ds = generate_cohort(3, seed=6, trials_per_subject=1, trial_duration_s=4.0)
        periods = {s.profile.stride_period_s for s in ds.subjects}
        assert len(periods) == 3
        a0 = ds.subjects[0].profile.angles["kneeflex"].a
        a1 = ds.subjects[1].profile.angles["kneeflex"].a
        assert not np.allclose(a0, a1)

    def test_cycle_yield_at_configured_cadence(self):
        # 10 trials x 20 s at ~1.1 s stride -> comfortably over 150
        # cycles/subject
        ds = generate_cohort(1, seed=7, trials_per_subject=10,
                             trial_duration_s=20.0)
        subj = ds.subjects[0]
        total = sum(len(t.heel_strikes["right"]) - 1 + len(t.heel_strikes["left"]) - 1
                    for t in subj.trials)
        assert total >= 150

    def test_learnability_floor_single_subject(self):
        # a forest on one subject's cycles must reach < 3 deg ankle RMSE;
        # this gates generator quality, not model quality
        from gaitrt.features import (
            MODEL_CONFIGS,
            ProtocolOptions,
            assemble_features,
            preprocess_trial,
            trial_cycles,
        )
        ds = generate_cohort(1, seed=8, trials_per_subject=1, trial_duration_s=14.0)
        subj = ds.subjects[0]
        pre = preprocess_trial(subj.trials[0], subj.meta)
        spans = trial_cycles(pre)
        cycles = assemble_features(MODEL_CONFIGS["W1"], pre, spans)
        assert len(cycles) >= 8
        train, test = cycles[:-4], cycles[-4:]
        X = np.vstack([c.X[::4] for c in train])
        Y = np.vstack([c.Y[::4] for c in train])
        model = fit_forest(X, Y, ForestParams(n_trees=30), seed=0)
        pred = np.vstack([model.predict(c.X) for c in test])
        truth = np.vstack([c.Y for c in test])
        rmse = float(np.sqrt(np.mean((pred - truth) ** 2)))
        assert rmse < 3.0


class TestDatasetIo:
    def test_round_trip_lossless(self, tmp_path, small_cohort):
        write_dataset(small_cohort, tmp_path / "ds")
        loaded = read_dataset(tmp_path / "ds")
        assert len(loaded.subjects) == len(small_cohort.subjects)
        for sa, sb in zip(small_cohort.subjects, loaded.subjects):
            assert sa.meta.subject_id == sb.meta.subject_id
            assert sa.meta.mass_kg == sb.meta.mass_kg
            for ta, tb in zip(sa.trials, sb.trials):
                npt.assert_array_equal(ta.gt.data, tb.gt.data)
                npt.assert_array_equal(ta.imu_lf.data, tb.imu_lf.data)
                npt.assert_array_equal(ta.insole_r.data, tb.insole_r.data)
                assert ta.gt.rate == tb.gt.rate
                npt.assert_array_equal(ta.heel_strikes["right"],
                                       tb.heel_strikes["right"])

    def test_missing_column_rejected(self, tmp_path, small_cohort):
        trial = small_cohort.subjects[0].trials[0]
        path = tmp_path / "trial.csv"
        write_trial_csv(trial, path)
        lines = path.read_text().splitlines()
        header = lines[0].split(",")
        header.remove("fsr_l3")
        bad = tmp_path / "bad.csv"
        bad.write_text("\n".join([",".join(header)] + lines[1:]) + "\n")
        with pytest.raises(FormatError, match="fsr_l3"):
            read_trial_csv(bad)

    def test_truncated_final_row(self, tmp_path, small_cohort):
        trial = small_cohort.subjects[0].trials[0]
        path = tmp_path / "trial.csv"
        write_trial_csv(trial, path)
        lines = path.read_text().splitlines()
        lines[-1] = ",".join(lines[-1].split(",")[:10])
        bad = tmp_path / "bad.csv"
        bad.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match=str(len(lines))):
            read_trial_csv(bad)

    def test_nan_in_required_column(self, tmp_path, small_cohort):
        trial = small_cohort.subjects[0].trials[0]
        path = tmp_path / "trial.csv"
        write_trial_csv(trial, path)
        lines = path.read_text().splitlines()
        cells = lines[1].split(",")
        cells[1] = "nan"
        lines[1] = ",".join(cells)
        bad = tmp_path / "bad.csv"
        bad.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="NaN"):
            read_trial_csv(bad)
