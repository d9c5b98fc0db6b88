import numpy as np
import pytest
from hypothesis import given, strategies as st

from pulse2ecg.errors import ConfigError, SignalError
from pulse2ecg.signals import (
    bandpass_ppg,
    flat_fraction,
    highpass_ecg,
    preprocess_pair,
    quality_gate_ecg,
    quality_gate_ppg,
    resample,
    segment,
    zscore,
)
from pulse2ecg.rng import stream_rng
from pulse2ecg.types import ECG, PPG, Waveform

FS = 128.0


def _sine(freq, fs, seconds, amp=1.0, modality=ECG):
    t = np.arange(int(seconds * fs)) / fs
    return Waveform(amp * np.sin(2 * np.pi * freq * t), fs, modality)


def _interior(x, fs):
    n = int(fs)
    return x[n:-n]


class TestResample:
    def test_constant_stays_constant(self):
        w = Waveform(np.full(5000, 3.7), 500.0, ECG)
        out = resample(w, 128.0)
        assert out.fs == 128.0
        assert out.samples.shape == (1280,)
        np.testing.assert_allclose(out.samples, 3.7, rtol=1e-12)

    def test_identity_when_rates_match(self):
        w = Waveform(stream_rng(0, 1).normal(0, 1, 640), 128.0, ECG)
        out = resample(w, 128.0)
        assert np.array_equal(out.samples, w.samples)

    def test_sine_peak_survives(self):
        # FFT-peak oracle: the 2 Hz line must stay at 2 Hz within one bin
        w = _sine(2.0, 500.0, 10.0)
        out = resample(w, 128.0)
        spec = np.abs(np.fft.rfft(out.samples))
        freqs = np.fft.rfftfreq(out.samples.size, 1.0 / 128.0)
        assert abs(freqs[np.argmax(spec[1:]) + 1] - 2.0) <= freqs[1] + 1e-12

    def test_output_length_rounds(self):
        w = Waveform(np.ones(1001), 100.0, ECG)
        assert len(resample(w, 128.0)) == round(1001 * 128 / 100)

    def test_rejects_non_finite(self):
        x = np.ones(256)
        x[3] = np.nan
        with pytest.raises(SignalError):
            resample(Waveform(x, 128.0, ECG), 64.0)


class TestFilters:
    def test_highpass_removes_dc(self):
        w = Waveform(np.full(1280, 5.0), FS, ECG)
        out = highpass_ecg(w)
        assert abs(np.mean(_interior(out.samples, FS))) < 1e-3 * 5.0
        assert len(out) == len(w)

    def test_highpass_passband_flat(self):
        w = _sine(5.0, FS, 10.0)
        out = highpass_ecg(w)
        ratio = np.std(_interior(out.samples, FS)) / np.std(_interior(w.samples, FS))
        assert abs(ratio - 1.0) < 0.01

    def test_highpass_zero_is_zero(self):
        out = highpass_ecg(Waveform(np.zeros(1280), FS, ECG))
        np.testing.assert_allclose(out.samples, 0.0, atol=1e-12)

    def test_highpass_rejects_low_fs(self):
        with pytest.raises(ConfigError):
            highpass_ecg(Waveform(np.ones(100), 32.0, ECG))

    def test_bandpass_removes_dc(self):
        out = bandpass_ppg(Waveform(np.full(1280, 4.0), FS, PPG))
        assert abs(np.mean(_interior(out.samples, FS))) < 1e-3 * 4.0

    def test_bandpass_stopband(self):
        w = _sine(20.0, FS, 10.0, modality=PPG)
        out = bandpass_ppg(w)
        ratio = np.std(_interior(out.samples, FS)) / np.std(_interior(w.samples, FS))
        assert ratio < 0.1

    def test_bandpass_passband(self):
        w = _sine(1.5, FS, 10.0, modality=PPG)
        out = bandpass_ppg(w)
        ratio = np.std(_interior(out.samples, FS)) / np.std(_interior(w.samples, FS))
        assert abs(ratio - 1.0) < 0.05

    @given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, seed, a, b):
        rng = stream_rng(seed, 0)
        x = Waveform(rng.normal(0, 1, 640), FS, ECG)
        y = Waveform(rng.normal(0, 1, 640), FS, ECG)
        combo = Waveform(a * x.samples + b * y.samples, FS, ECG)
        lhs = highpass_ecg(combo).samples
        rhs = a * highpass_ecg(x).samples + b * highpass_ecg(y).samples
        np.testing.assert_allclose(lhs, rhs, rtol=1e-6, atol=1e-9)

    def test_zero_phase(self):
        # band-limited input: output cross-correlation peak must sit at lag 0
        w = _sine(3.0, FS, 10.0)
        out = bandpass_ppg(Waveform(w.samples, FS, PPG))
        xc = np.correlate(out.samples, w.samples, mode="full")
        assert np.argmax(xc) == w.samples.size - 1


class TestSegment:
    def test_35s_gives_3_windows(self):
        w = Waveform(np.arange(int(35 * FS)), FS, ECG)
        assert len(segment(w)) == 3

    def test_10s_roundtrip(self):
        w = Waveform(stream_rng(1, 1).normal(0, 1, 1280), FS, ECG)
        wins = segment(w)
        assert len(wins) == 1
        assert np.array_equal(wins[0].samples, w.samples)

    def test_just_under_10s_empty(self):
        w = Waveform(np.ones(1279), FS, ECG)
        assert segment(w) == []

    def test_non_finite_window_dropped(self):
        x = stream_rng(2, 1).normal(0, 1, 1280 * 3)
        x[1500] = np.nan
        wins = segment(Waveform(x, FS, ECG))
        assert len(wins) == 2
        assert {w.t0 for w in wins} == {0.0, 20.0}

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4))
    def test_concat_roundtrip(self, seed, k):
        x = stream_rng(seed, 3).normal(0, 1, 1280 * k)
        wins = segment(Waveform(x, FS, ECG))
        assert np.array_equal(np.concatenate([w.samples for w in wins]), x)


class TestZscore:
    def test_hand_computed(self):
        out = zscore(Waveform(np.array([1.0, 2.0, 3.0]), FS, ECG))
        np.testing.assert_allclose(out.samples, [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)

    def test_idempotent(self):
        w = Waveform(stream_rng(3, 1).normal(2, 5, 1280), FS, ECG)
        once = zscore(w)
        twice = zscore(once)
        np.testing.assert_allclose(once.samples, twice.samples, atol=1e-6)

    def test_flat_rejected(self):
        with pytest.raises(SignalError):
            zscore(Waveform(np.full(1280, 2.0), FS, ECG))

    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 50), st.floats(-20, 20))
    def test_affine_invariance(self, seed, a, b):
        x = stream_rng(seed, 4).normal(0, 1, 640)
        base = zscore(Waveform(x, FS, ECG)).samples
        moved = zscore(Waveform(a * x + b, FS, ECG)).samples
        np.testing.assert_allclose(base, moved, atol=1e-6)


class TestQualityGates:
    def test_clean_ecg_passes(self, clean_segment):
        _, _, ecg = clean_segment
        rep = quality_gate_ecg(ecg)
        assert rep.passed
        assert 12 <= rep.detected_beats <= 15

    def test_zero_ecg_fails_flat(self):
        rep = quality_gate_ecg(Waveform(np.zeros(1280), FS, ECG))
        assert not rep.passed
        assert rep.flat_fraction == 1.0

    @pytest.mark.parametrize("seed", [0, 7, 11, 23])
    def test_white_noise_fails_beat_count(self, seed):
        x = stream_rng(seed, 7).normal(0, 1, 1280)
        rep = quality_gate_ecg(Waveform(x, FS, ECG))
        assert not rep.passed
        assert rep.detected_beats < 5 or rep.detected_beats > 40

    def test_clean_ppg_passes(self, clean_segment):
        _, ppg, _ = clean_segment
        rep = quality_gate_ppg(ppg)
        assert rep.passed
        assert rep.template_corr > 0.95

    def test_shuffled_ppg_fails(self, clean_segment):
        _, ppg, _ = clean_segment
        x = ppg.samples.copy()
        stream_rng(5, 9).shuffle(x)
        assert not quality_gate_ppg(Waveform(x, FS, PPG)).passed

    def test_zero_ppg_fails(self):
        assert not quality_gate_ppg(Waveform(np.zeros(1280), FS, PPG)).passed

    def test_flat_fraction_run_rule(self):
        # a flat run shorter than 0.25 s does not count
        x = stream_rng(6, 1).normal(0, 1, 1280)
        x[100:120] = 0.5
        assert flat_fraction(x, FS) == 0.0
        x[400:600] = -0.25
        assert flat_fraction(x, FS) == pytest.approx(200 / 1280, abs=2 / 1280)


def _bumps(t, centers, amp, width):
    out = np.zeros_like(t)
    for c in centers:
        out += amp * np.exp(-0.5 * ((t - c) / (width / 2)) ** 2)
    return out


def _clean_recording(seconds=60.0, fs=128.0, rr=0.75, seed=21):
    t = np.arange(int(seconds * fs)) / fs
    beats = np.arange(0.4, seconds - 0.3, rr)
    ecg = (
        _bumps(t, beats, 1.0, 0.012)
        + _bumps(t, beats + 0.3, 0.3, 0.06)
        + _bumps(t, beats - 0.2, 0.15, 0.04)
        + 0.02 * stream_rng(seed, 0).normal(0, 1, t.size)
    )
    ppg = (
        _bumps(t, beats + 0.25, 1.0, 0.10)
        + _bumps(t, beats + 0.5, 0.35, 0.12)
        + 0.02 * stream_rng(seed, 1).normal(0, 1, t.size)
    )
    return Waveform(ppg, fs, PPG, "s"), Waveform(ecg, fs, ECG, "s")


class TestPreprocessPair:
    def test_60s_clean_gives_6_pairs(self):
        ppg, ecg = _clean_recording()
        pairs = preprocess_pair(ppg, ecg)
        assert len(pairs) == 6
        for p in pairs:
            assert abs(p.ppg.samples.mean()) < 1e-6
            assert abs(p.ppg.samples.std() - 1.0) < 1e-4
            assert abs(p.ecg.samples.mean()) < 1e-6
            assert abs(p.ecg.samples.std() - 1.0) < 1e-4

    def test_flatlined_ppg_window_dropped(self):
        ppg, ecg = _clean_recording()
        x = ppg.samples.copy()
        x[int(20 * FS) : int(30 * FS)] = x[int(20 * FS)]
        pairs = preprocess_pair(Waveform(x, FS, PPG, "s"), ecg)
        assert len(pairs) == 5
        assert 20.0 not in {p.ppg.t0 for p in pairs}

    def test_short_input_empty(self):
        ppg = Waveform(np.ones(8), FS, PPG)
        ecg = Waveform(np.ones(8), FS, ECG)
        assert preprocess_pair(ppg, ecg) == []

    def test_deterministic(self):
        ppg, ecg = _clean_recording()
        a = preprocess_pair(ppg, ecg)
        b = preprocess_pair(ppg, ecg)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.ppg.samples, pb.ppg.samples)
            assert np.array_equal(pa.ecg.samples, pb.ecg.samples)

    def test_offset_alignment(self):
        # ppg starts 2 s later: windows align to the later grid
        ppg, ecg = _clean_recording(seconds=40.0)
        ppg_cut = Waveform(ppg.samples[int(2 * FS) :], FS, PPG, "s", t0=2.0)
        pairs = preprocess_pair(ppg_cut, ecg)
        assert len(pairs) == 3
        assert all(p.ppg.t0 == p.ecg.t0 for p in pairs)
