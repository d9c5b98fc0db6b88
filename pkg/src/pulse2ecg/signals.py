"""Deterministic preprocessing of raw PPG/ECG into normalized segment pairs.

Pipeline per modality: filter at native rate -> resample to 128 Hz ->
non-overlapping 10 s windows -> quality gate -> z-score. A window survives
only if both modalities pass their gates; dropped windows are logged with
the reason.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.signal import butter, find_peaks, sosfiltfilt

from .errors import ConfigError, SignalError
from .qrs import detect_qrs
from .types import ECG, PPG, SEGMENT_SECONDS, TARGET_FS, QualityReport, SegmentPair, Waveform

log = logging.getLogger(__name__)

ECG_HIGHPASS_HZ = 0.5
PPG_BAND_HZ = (0.5, 8.0)
FILTER_ORDER = 4
MIN_FILTER_FS = 64.0
PAD_SECONDS = 1.0

FLAT_DELTA = 1e-5
FLAT_RUN_S = 0.25
FLAT_FRACTION_MAX = 0.2
BEAT_COUNT_RANGE = (5, 40)
PPG_TEMPLATE_CORR_MIN = 0.8
PPG_PEAK_SPACING_S = 0.3
PPG_PROMINENCE_KEEP = 0.5
PPG_TEMPLATE_HALF_S = 0.35
ZSCORE_MIN_STD = 1e-6


def _require_finite(w: Waveform) -> None:
    if not np.all(np.isfinite(w.samples)):
        raise SignalError(f"{w.modality} waveform contains non-finite samples")


def resample(w: Waveform, target_fs: float) -> Waveform:
    """Resample onto a uniform grid via cubic Hermite interpolation."""
    if not target_fs > 0:
        raise ConfigError("target_fs must be positive")
    _require_finite(w)
    if target_fs == w.fs:
        return w.with_samples(w.samples.copy())
    n_out = int(round(len(w) * target_fs / w.fs))
    if n_out < 1:
        raise SignalError("resampling would produce an empty waveform")
    t_in = np.arange(len(w)) / w.fs
    if len(w) < 2:
        out = np.full(n_out, w.samples[0])
        return w.with_samples(out, fs=target_fs)
    spline = CubicHermiteSpline(t_in, w.samples, np.gradient(w.samples, t_in))
    t_out = np.arange(n_out) / target_fs
    return w.with_samples(spline(t_out), fs=target_fs)


def _sos_filtfilt(x: np.ndarray, sos: np.ndarray, fs: float) -> np.ndarray:
    padlen = min(x.size - 1, int(round(PAD_SECONDS * fs)))
    return sosfiltfilt(sos, x, padtype="even", padlen=padlen)


def highpass_ecg(w: Waveform) -> Waveform:
    """Zero-phase 4th-order Butterworth high-pass at 0.5 Hz."""
    if w.modality != ECG:
        raise SignalError("highpass_ecg expects an ECG waveform")
    if w.fs < MIN_FILTER_FS:
        raise ConfigError(f"fs {w.fs} too low for stable high-pass design")
    _require_finite(w)
    sos = butter(FILTER_ORDER, ECG_HIGHPASS_HZ / (w.fs / 2.0), btype="highpass", output="sos")
    return w.with_samples(_sos_filtfilt(w.samples, sos, w.fs))


def bandpass_ppg(w: Waveform) -> Waveform:
    """Zero-phase 4th-order Butterworth band-pass 0.5-8 Hz."""
    if w.modality != PPG:
        raise SignalError("bandpass_ppg expects a PPG waveform")
    if w.fs < MIN_FILTER_FS:
        raise ConfigError(f"fs {w.fs} too low for stable band-pass design")
    _require_finite(w)
    nyq = w.fs / 2.0
    sos = butter(FILTER_ORDER, [PPG_BAND_HZ[0] / nyq, PPG_BAND_HZ[1] / nyq], btype="bandpass", output="sos")
    return w.with_samples(_sos_filtfilt(w.samples, sos, w.fs))


def segment(w: Waveform, win_s: float = SEGMENT_SECONDS) -> list[Waveform]:
    """Consecutive non-overlapping windows; incomplete tail and non-finite windows dropped."""
    n_win = w.fs * win_s
    if abs(n_win - round(n_win)) > 1e-9:
        raise ConfigError("fs * win_s must be an integer sample count")
    n_win = int(round(n_win))
    out = []
    for k in range(len(w) // n_win):
        chunk = w.samples[k * n_win : (k + 1) * n_win]
        if not np.all(np.isfinite(chunk)):
            continue
        out.append(Waveform(chunk.copy(), w.fs, w.modality, w.subject_id, w.t0 + k * win_s))
    return out


def zscore(w: Waveform) -> Waveform:
    """Normalize to zero mean, unit population std."""
    _require_finite(w)
    std = float(np.std(w.samples))
    if std <= ZSCORE_MIN_STD:
        raise SignalError("near-flat segment rejected by z-score normalization")
    return w.with_samples((w.samples - np.mean(w.samples)) / std)


def flat_fraction(x: np.ndarray, fs: float) -> float:
    """Fraction of samples inside flat runs (|dx| < 1e-5 sustained >= 0.25 s)."""
    d = np.abs(np.diff(x)) < FLAT_DELTA
    min_run = int(round(FLAT_RUN_S * fs))
    covered = 0
    run = 0
    for flag in np.append(d, False):
        if flag:
            run += 1
        else:
            if run >= min_run:
                covered += run + 1
            run = 0
    return covered / x.size


def quality_gate_ecg(w: Waveform) -> QualityReport:
    """Gate a 10 s ECG window on flatness and plausible QRS count."""
    flat = flat_fraction(w.samples, w.fs)
    beats = len(detect_qrs(w.samples, w.fs))
    passed = flat < FLAT_FRACTION_MAX and BEAT_COUNT_RANGE[0] <= beats <= BEAT_COUNT_RANGE[1]
    return QualityReport(passed=passed, flat_fraction=flat, detected_beats=beats)


def _ppg_peaks(x: np.ndarray, fs: float) -> np.ndarray:
    """Systolic peak candidates: local maxima, dicrotic lobes pruned by prominence."""
    spread = float(np.std(x))
    if spread <= 0:
        return np.empty(0, dtype=np.int64)
    peaks, props = find_peaks(
        x,
        distance=max(1, int(round(PPG_PEAK_SPACING_S * fs))),
        prominence=0.1 * spread,
    )
    if peaks.size == 0:
        return peaks
    prom = props["prominences"]
    return peaks[prom >= PPG_PROMINENCE_KEEP * float(np.max(prom))]


def quality_gate_ppg(w: Waveform) -> QualityReport:
    """Gate a 10 s PPG window on beat count and beat-template correlation."""
    flat = flat_fraction(w.samples, w.fs)
    peaks = _ppg_peaks(w.samples, w.fs)
    corr = 0.0
    half = int(round(PPG_TEMPLATE_HALF_S * w.fs))
    windows = [w.samples[p - half : p + half] for p in peaks if p - half >= 0 and p + half <= len(w)]
    if len(windows) >= 2:
        stack = np.stack(windows)
        template = stack.mean(axis=0)
        tc = template - template.mean()
        denom_t = np.sqrt(np.sum(tc**2))
        corrs = []
        for row in stack:
            rc = row - row.mean()
            denom = np.sqrt(np.sum(rc**2)) * denom_t
            corrs.append(float(np.dot(rc, tc) / denom) if denom > 0 else 0.0)
        corr = float(np.mean(corrs))
    beats = int(peaks.size)
    passed = corr >= PPG_TEMPLATE_CORR_MIN and BEAT_COUNT_RANGE[0] <= beats <= BEAT_COUNT_RANGE[1]
    return QualityReport(passed=passed, flat_fraction=flat, detected_beats=beats, template_corr=corr)


def _crop_to_common_support(a: Waveform, b: Waveform) -> tuple[Waveform, Waveform] | None:
    t_start = max(a.t0, b.t0)
    t_end = min(a.t0 + a.duration, b.t0 + b.duration)
    if t_end - t_start < SEGMENT_SECONDS - 1e-9:
        return None
    out = []
    for w in (a, b):
        i0 = int(np.ceil((t_start - w.t0) * w.fs - 1e-9))
        i1 = int(np.floor((t_end - w.t0) * w.fs + 1e-9))
        out.append(Waveform(w.samples[i0:i1], w.fs, w.modality, w.subject_id, w.t0 + i0 / w.fs))
    n = min(len(out[0]), len(out[1]))
    return out[0].with_samples(out[0].samples[:n]), out[1].with_samples(out[1].samples[:n])


def preprocess_pair(ppg_raw: Waveform, ecg_raw: Waveform, label: frozenset = frozenset()) -> list[SegmentPair]:
    """Full preprocessing pipeline for one synchronized PPG/ECG recording."""
    if ppg_raw.modality != PPG or ecg_raw.modality != ECG:
        raise SignalError("preprocess_pair expects (ppg, ecg) in that order")
    if ppg_raw.duration < SEGMENT_SECONDS or ecg_raw.duration < SEGMENT_SECONDS:
        return []

    ppg = resample(bandpass_ppg(ppg_raw), TARGET_FS)
    ecg = resample(highpass_ecg(ecg_raw), TARGET_FS)
    cropped = _crop_to_common_support(ppg, ecg)
    if cropped is None:
        return []
    ppg, ecg = cropped

    pairs = []
    ppg_windows = {round(w.t0 * TARGET_FS): w for w in segment(ppg)}
    ecg_windows = {round(w.t0 * TARGET_FS): w for w in segment(ecg)}
    for key in sorted(set(ppg_windows) & set(ecg_windows)):
        wp, we = ppg_windows[key], ecg_windows[key]
        qp = quality_gate_ppg(wp)
        qe = quality_gate_ecg(we)
        if not (qp.passed and qe.passed):
            log.debug("window at t0=%.2f dropped: ppg_gate=%s ecg_gate=%s", wp.t0, qp.passed, qe.passed)
            continue
        try:
            wp_n, we_n = zscore(wp), zscore(we)
        except SignalError as exc:
            log.debug("window at t0=%.2f dropped: %s", wp.t0, exc)
            continue
        # snap to the float32 grid so PAIRS1 serialization round-trips bit-exactly
        wp_n = wp_n.with_samples(wp_n.samples.astype(np.float32).astype(np.float64))
        we_n = we_n.with_samples(we_n.samples.astype(np.float32).astype(np.float64))
        pairs.append(SegmentPair(ppg=wp_n, ecg=we_n, label=label, quality=(qp, qe)))
    return pairs
