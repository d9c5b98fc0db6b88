import numpy as np
import pytest
from hypothesis import given, strategies as st

from pulse2ecg.errors import MetricError
from pulse2ecg.metrics import fid
from pulse2ecg.probe import auroc, embed, evaluate_probe, train_probe
from pulse2ecg.rng import stream_rng
from pulse2ecg.synthgen import SynthParams, make_dataset


@pytest.fixture(scope="module")
def af_mix():
    normal = make_dataset(SynthParams(n_segments=40, seed=41, hr_bpm=75.0, noise_std=0.03))
    af = make_dataset(SynthParams(n_segments=40, seed=42, hr_bpm=75.0, noise_std=0.03, af_mode=True))
    x = np.stack([p.ecg.samples for p in normal + af])
    y = np.array([0] * 40 + [1] * 40)
    return x, y


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_three_score_case(self):
        # one concordant pair, one discordant pair
        assert auroc([0.2, 0.5, 0.8], [1, 0, 1]) == pytest.approx(0.5)

    def test_shuffled_labels_near_chance(self):
        rng = stream_rng(0, 1)
        scores = rng.normal(0, 1, 4000)
        labels = rng.permutation(np.array([0, 1] * 2000))
        assert auroc(scores, labels) == pytest.approx(0.5, abs=0.05)

    def test_ties_get_half_credit(self):
        assert auroc([0.5, 0.5], [0, 1]) == pytest.approx(0.5)

    @given(st.integers(0, 100_000), st.floats(0.1, 5.0), st.floats(-3, 3))
    def test_monotone_transform_invariance(self, seed, scale, shift):
        rng = stream_rng(seed, 2)
        scores = rng.normal(0, 1, 40)
        labels = (rng.uniform(0, 1, 40) > 0.5).astype(int)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        base = auroc(scores, labels)
        assert auroc(scale * scores + shift, labels) == pytest.approx(base, abs=1e-12)
        assert auroc(np.tanh(scores), labels) == pytest.approx(base, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(MetricError):
            auroc([0.1, 0.9], [1, 1])


class TestProbe:
    def test_separates_real_af(self, af_mix):
        x, y = af_mix
        net = train_probe(x, y, iters=150, seed=0)
        assert evaluate_probe(net, x, y) >= 0.95

    def test_single_class_training_rejected(self, af_mix):
        x, _ = af_mix
        with pytest.raises(MetricError):
            train_probe(x, np.zeros(x.shape[0]), iters=10)

    def test_embed_deterministic(self, af_mix):
        x, y = af_mix
        net = train_probe(x, y, iters=30, seed=1)
        e1, e2 = embed(net, x[:5]), embed(net, x[:5])
        assert np.array_equal(e1, e2)
        assert e1.shape == (5, 32)

    def test_identical_sets_fid_zero(self, af_mix):
        x, y = af_mix
        net = train_probe(x, y, iters=30, seed=2)
        e = embed(net, x)
        assert fid(e, e) < 1e-6

    def test_af_vs_normal_fid_positive(self, af_mix):
        x, y = af_mix
        net = train_probe(x, y, iters=150, seed=3)
        e0, e1 = embed(net, x[y == 0]), embed(net, x[y == 1])
        assert fid(e0, e1) > 0.01
