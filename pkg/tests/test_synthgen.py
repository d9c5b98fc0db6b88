import numpy as np
import pytest

from pulse2ecg.errors import ContractError, GenerationError
from pulse2ecg.qrs import detect_qrs, heart_rate
from pulse2ecg.rng import segment_rng, stream_rng
from pulse2ecg.signals import quality_gate_ppg
from pulse2ecg.synthgen import (
    BeatTrain,
    SynthParams,
    corrupt,
    gen_beat_times,
    make_dataset,
    synth_ecg,
    synth_ppg,
)


class TestBeatTimes:
    def test_zero_jitter_is_exact(self):
        p = SynthParams(hr_bpm=80.0, hrv_std_s=0.0, seed=1)
        bt = gen_beat_times(p, segment_rng(1, 0, 0))
        rr = np.diff(bt.beat_times)
        np.testing.assert_allclose(rr, 0.75, atol=1e-12)
        assert len(bt) in (13, 14)

    def test_af_rr_is_irregular(self):
        # coefficient of variation over many seeded draws
        rrs = []
        p = SynthParams(af_mode=True, seed=0)
        for s in range(1000):
            bt = gen_beat_times(p, segment_rng(0, s, 0))
            rrs.extend(np.diff(bt.beat_times))
        rrs = np.asarray(rrs)
        assert rrs.std() / rrs.mean() > 0.15
        assert rrs.min() >= 0.35 - 1e-12 and rrs.max() <= 1.2 + 1e-12

    def test_same_seed_same_train(self):
        p = SynthParams(hr_bpm=70.0, hrv_std_s=0.05, seed=4)
        a = gen_beat_times(p, segment_rng(4, 2, 0))
        b = gen_beat_times(p, segment_rng(4, 2, 0))
        assert np.array_equal(a.beat_times, b.beat_times)

    def test_refractory_floor(self):
        p = SynthParams(hr_bpm=220.0, hrv_std_s=0.5, seed=6)
        for s in range(20):
            bt = gen_beat_times(p, segment_rng(6, s, 0))
            assert np.all(np.diff(bt.beat_times) >= 0.25 - 1e-12)

    def test_invalid_params_rejected(self):
        with pytest.raises(ContractError):
            SynthParams(hr_bpm=10.0)
        with pytest.raises(ContractError):
            SynthParams(ptt_s=0.9)


class TestSynthEcg:
    def test_detector_matches_beat_count(self, clean_segment):
        bt, _, ecg = clean_segment
        det = detect_qrs(ecg.samples, 128.0)
        assert len(det) == len(bt)
        true_idx = np.round(bt.beat_times * 128).astype(int)
        assert np.max(np.abs(det.r_peak_indices - true_idx)) <= 3

    def test_zero_beats_pure_noise(self):
        p = SynthParams(noise_std=0.05, seed=2)
        w = synth_ecg(BeatTrain(np.empty(0)), p, stream_rng(2, 1))
        assert abs(w.samples.std() - 0.05) < 0.01
        assert abs(w.samples.mean()) < 0.01

    def test_af_differs_only_in_p_wave(self):
        p = SynthParams(hr_bpm=70.0, hrv_std_s=0.02, noise_std=0.02, seed=8)
        bt = gen_beat_times(p, segment_rng(8, 0, 0))
        from dataclasses import replace

        normal = synth_ecg(bt, replace(p, af_mode=False), stream_rng(8, 99))
        af = synth_ecg(bt, replace(p, af_mode=True), stream_rng(8, 99))
        diff = np.abs(normal.samples - af.samples)
        t = np.arange(1280) / 128.0
        in_p_window = np.zeros(1280, dtype=bool)
        for b in bt.beat_times:
            in_p_window |= (t > b - 0.32) & (t < b - 0.08)
        assert diff[~in_p_window].max() < 1e-8
        assert diff[in_p_window].max() > 0.1


class TestSynthPpg:
    def test_lag_matches_ptt(self):
        p = SynthParams(hr_bpm=70.0, noise_std=0.0, ptt_s=0.25, seed=5)
        bt = gen_beat_times(p, segment_rng(5, 0, 0))
        ecg = synth_ecg(bt, p, segment_rng(5, 0, 1)).samples
        ppg = synth_ppg(bt, p, segment_rng(5, 0, 2)).samples
        lags = np.arange(0, int(0.5 * 128) + 1)
        vals = [float(np.dot(ppg[l:], ecg[: 1280 - l])) for l in lags]
        best = lags[int(np.argmax(vals))] / 128.0
        assert abs(best - 0.25) <= 1.0 / 128.0 + 1e-12

    def test_single_beat_two_lobes(self):
        p = SynthParams(noise_std=0.0, ptt_s=0.2, seed=0)
        w = synth_ppg(BeatTrain(np.array([4.0])), p).samples
        peaks = [
            i for i in range(1, 1279) if w[i] > w[i - 1] and w[i] > w[i + 1] and w[i] > 0.1
        ]
        assert len(peaks) == 2

    def test_zero_beats_pure_noise(self):
        p = SynthParams(noise_std=0.05, seed=2)
        w = synth_ppg(BeatTrain(np.empty(0)), p, stream_rng(2, 2))
        assert abs(w.samples.std() - 0.05) < 0.01


class TestCorrupt:
    @pytest.mark.parametrize("kind", ["wander", "burst", "dropout"])
    def test_severity_zero_is_identity(self, kind, clean_segment):
        _, ppg, _ = clean_segment
        out = corrupt(ppg, kind, 0.0, stream_rng(1, 2))
        assert np.array_equal(out.samples, ppg.samples)

    def test_dropout_creates_flat_run(self, small_dataset):
        seg = small_dataset[0].ppg
        out = corrupt(seg, "dropout", 1.0, stream_rng(1, 3))
        assert quality_gate_ppg(out).flat_fraction >= 0.1 - 1e-9

    def test_burst_breaks_template(self, small_dataset):
        seg = small_dataset[0].ppg
        out = corrupt(seg, "burst", 1.0, stream_rng(1, 4))
        assert quality_gate_ppg(out).template_corr < 0.8

    def test_wander_adds_low_frequency(self, small_dataset):
        seg = small_dataset[0].ppg
        out = corrupt(seg, "wander", 1.0, stream_rng(1, 5))
        delta = out.samples - seg.samples
        assert np.ptp(delta) > 4.0  # ~2 * amplitude 3.0

    def test_unknown_kind_rejected(self, small_dataset):
        with pytest.raises(ContractError):
            corrupt(small_dataset[0].ppg, "melt", 0.5, stream_rng(1, 6))


class TestMakeDataset:
    def test_clean_run_keeps_everything(self):
        pairs = make_dataset(SynthParams(n_segments=100, seed=17, noise_std=0.02))
        assert len(pairs) == 100

    def test_same_seed_bit_identical(self):
        a = make_dataset(SynthParams(n_segments=10, seed=5, noise_std=0.03))
        b = make_dataset(SynthParams(n_segments=10, seed=5, noise_std=0.03))
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.ppg.samples, pb.ppg.samples)
            assert np.array_equal(pa.ecg.samples, pb.ecg.samples)

    def test_af_flag_only_changes_labels_and_rhythm(self):
        a = make_dataset(SynthParams(n_segments=6, seed=5, noise_std=0.03))
        b = make_dataset(SynthParams(n_segments=6, seed=5, noise_std=0.03, af_mode=True))
        assert all(p.label == frozenset() for p in a)
        assert all(p.label == frozenset({"af"}) for p in b)

    def test_impossible_params_raise(self):
        with pytest.raises(GenerationError):
            make_dataset(SynthParams(n_segments=10, seed=1, noise_std=4.0))

    def test_hr_link(self):
        # estimated HR tracks the RR process for clean segments
        p = SynthParams(n_segments=12, seed=31, hr_bpm=65.0, hrv_std_s=0.02, noise_std=0.03)
        pairs = make_dataset(p)
        for pair in pairs:
            hr = heart_rate(detect_qrs(pair.ecg.samples, 128.0), 128.0)
            assert abs(hr - 65.0) <= 2.0

    def test_ppg_and_ecg_beat_counts_agree(self, small_dataset):
        from pulse2ecg.signals import _ppg_peaks

        for pair in small_dataset[:10]:
            n_ecg = len(detect_qrs(pair.ecg.samples, 128.0))
            n_ppg = _ppg_peaks(pair.ppg.samples, 128.0).size
            assert abs(n_ecg - n_ppg) <= 1
