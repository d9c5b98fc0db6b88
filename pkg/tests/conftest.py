import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "fast",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("fast")


@pytest.fixture(scope="session")
def clean_params():
    from pulse2ecg.synthgen import SynthParams

    return SynthParams(hr_bpm=80.0, hrv_std_s=0.02, noise_std=0.02, seed=3)


@pytest.fixture(scope="session")
def clean_segment(clean_params):
    """One clean synthetic pair with all beats away from the segment edges."""
    from pulse2ecg.rng import segment_rng
    from pulse2ecg.synthgen import gen_beat_times, synth_ecg, synth_ppg

    p = clean_params
    bt = gen_beat_times(p, segment_rng(p.seed, 0, 0))
    assert np.all((bt.beat_times > 0.05) & (bt.beat_times < 9.95))
    ecg = synth_ecg(bt, p, segment_rng(p.seed, 0, 1))
    ppg = synth_ppg(bt, p, segment_rng(p.seed, 0, 2))
    return bt, ppg, ecg


@pytest.fixture(scope="session")
def small_dataset():
    from pulse2ecg.synthgen import SynthParams, make_dataset

    return make_dataset(SynthParams(n_segments=24, seed=9, hr_bpm=75.0, noise_std=0.03))
