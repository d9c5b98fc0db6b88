"""QRS detection and heart-rate estimation.

Energy-based detector in the Hamilton family: band-pass 8-16 Hz,
differentiate, rectify, 80 ms moving average, then classify envelope peaks
against running signal/noise level estimates with a 200 ms refractory.
Every threshold is relative to those running estimates, so detections are
invariant to positive amplitude scaling of the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, find_peaks, sosfiltfilt

from .errors import ContractError, MetricError
from .types import Waveform

BAND_HZ = (8.0, 16.0)
SMOOTH_S = 0.08
REFRACTORY_S = 0.2
# wider than one QRS envelope so a complex yields a single candidate peak
CANDIDATE_SPACING_S = 0.15
REFINE_WINDOW_S = 0.1
# peak classification: threshold sits between the noise and signal level
# estimates; the noise floor multiple keeps pure-noise inputs from firing
LEVEL_MIX = 0.45
NOISE_FLOOR_MULT = 2.75
LEVEL_UPDATE = 0.125
INIT_WINDOW_S = 2.0


@dataclass
class BeatAnnotations:
    r_peak_indices: np.ndarray

    def __post_init__(self) -> None:
        self.r_peak_indices = np.asarray(self.r_peak_indices, dtype=np.int64)
        if self.r_peak_indices.ndim != 1:
            raise ContractError("r_peak_indices must be 1-D")
        if np.any(np.diff(self.r_peak_indices) <= 0):
            raise ContractError("r_peak_indices must be strictly increasing")

    def __len__(self) -> int:
        return self.r_peak_indices.size


def _envelope(x: np.ndarray, fs: float) -> np.ndarray:
    nyq = fs / 2.0
    sos = butter(2, [BAND_HZ[0] / nyq, BAND_HZ[1] / nyq], btype="bandpass", output="sos")
    padlen = min(x.size - 1, int(round(fs)))
    bp = sosfiltfilt(sos, x, padlen=padlen)
    rect = np.abs(np.diff(bp, prepend=bp[0]))
    w = max(1, int(round(SMOOTH_S * fs)))
    kernel = np.ones(w)
    # normalize by actual coverage so edge peaks are not attenuated
    env = np.convolve(rect, kernel, mode="same") / np.convolve(np.ones_like(rect), kernel, mode="same")
    return env


def detect_qrs(ecg, fs: float = 128.0) -> BeatAnnotations:
    """R-peak indices of a single-channel ECG segment."""
    if isinstance(ecg, Waveform):
        fs = ecg.fs
        x = ecg.samples
    else:
        x = np.asarray(ecg, dtype=np.float64)
    if x.ndim != 1 or x.size < 8:
        raise ContractError("ecg must be a 1-D array with at least 8 samples")
    if not np.all(np.isfinite(x)):
        return BeatAnnotations(np.empty(0, dtype=np.int64))

    env = _envelope(x, fs)
    spacing = max(1, int(round(CANDIDATE_SPACING_S * fs)))
    cand, _ = find_peaks(env, distance=spacing)
    if cand.size == 0:
        return BeatAnnotations(np.empty(0, dtype=np.int64))

    # seed the running levels from candidate-peak statistics: on a clean ECG
    # the lower quantile tracks inter-beat ripple even at high heart rates
    init_cand = cand[cand < int(round(INIT_WINDOW_S * fs))]
    if init_cand.size == 0:
        init_cand = cand
    signal_level = float(np.max(env[init_cand]))
    noise_level = float(np.quantile(env[init_cand], 0.25))

    refractory = int(round(REFRACTORY_S * fs))
    accepted: list[int] = []
    last = -10 * refractory
    for idx in cand:
        v = env[idx]
        if idx - last < refractory:
            continue
        threshold = noise_level + LEVEL_MIX * (signal_level - noise_level)
        if v > threshold and v > NOISE_FLOOR_MULT * noise_level:
            accepted.append(int(idx))
            last = idx
            signal_level += LEVEL_UPDATE * (v - signal_level)
        else:
            noise_level += LEVEL_UPDATE * (v - noise_level)

    # refine each detection to the local maximum of the raw waveform
    half = max(1, int(round(REFINE_WINDOW_S * fs)))
    refined: list[int] = []
    for idx in accepted:
        lo = max(0, idx - half)
        hi = min(x.size, idx + half + 1)
        r = lo + int(np.argmax(x[lo:hi]))
        if refined and r - refined[-1] < refractory:
            continue
        if not refined or r > refined[-1]:
            refined.append(r)
    return BeatAnnotations(np.asarray(refined, dtype=np.int64))


def heart_rate(beats: BeatAnnotations, fs: float) -> float:
    """Heart rate in bpm from the median RR interval."""
    if len(beats) < 2:
        raise MetricError("heart rate undefined with fewer than 2 beats")
    rr = np.diff(beats.r_peak_indices) / fs
    return 60.0 / float(np.median(rr))
