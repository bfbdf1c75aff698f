import numpy as np
import pytest

from gaitrt.dataset import Dataset, SubjectData, SubjectMeta
from gaitrt.synth import generate_cohort, generate_trial, make_profile


@pytest.fixture(scope="session")
def small_cohort() -> Dataset:
    """2 subjects x 1 trial x 12 s, default noise; shared across tests."""
    return generate_cohort(2, seed=11, trials_per_subject=1, trial_duration_s=12.0)


@pytest.fixture(scope="session")
def clean_profile():
    rng = np.random.default_rng(42)
    return make_profile("subject_00", rng)


@pytest.fixture(scope="session")
def clean_trial(clean_profile):
    """Noise-free 20 s trial (exact ground truth everywhere)."""
    return generate_trial(clean_profile, 20.0, seed=5, noise_scale=0.0).as_trial()


@pytest.fixture(scope="session")
def clean_dataset(clean_profile, clean_trial) -> Dataset:
    meta = SubjectMeta("subject_00", clean_profile.mass_kg,
                       clean_profile.weight_n, clean_profile.height_cm)
    return Dataset(subjects=[SubjectData(meta=meta, trials=[clean_trial],
                                         profile=clean_profile)])
