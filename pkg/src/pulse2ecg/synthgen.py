"""Synthetic paired PPG/ECG generation.

Beat trains drive both modalities: the ECG is a sum of five Gaussian bumps
per beat (P, Q, R, S, T), the PPG a systolic plus dicrotic lobe delayed by
the pulse transit time. Morphology constants are engineering defaults and
overridable. Gaussian "width" below means the full 2-sigma width of the
bump. Every output is a pure function of (params, seed) via Philox
sub-streams, one block per segment.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, GenerationError
from .rng import CH_BEATS, CH_ECG_NOISE, CH_PPG_NOISE, segment_rng, stream_rng
from .signals import preprocess_pair
from .types import ECG, PPG, SEGMENT_SAMPLES, SEGMENT_SECONDS, TARGET_FS, SegmentPair, Waveform

RR_FLOOR_S = 0.25
AF_RR_RANGE_S = (0.35, 1.2)

WANDER_HZ = 0.2
WANDER_AMP = 3.0
BURST_STD = 5.0
BURST_SPAN_S = 2.0
DROPOUT_SPAN_S = 1.0


@dataclass(frozen=True)
class SynthParams:
    hr_bpm: float = 75.0
    hrv_std_s: float = 0.02
    af_mode: bool = False
    noise_std: float = 0.02
    ptt_s: float = 0.25
    n_segments: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if not 30.0 <= self.hr_bpm <= 220.0:
            raise ContractError("hr_bpm must be in [30, 220]")
        if self.hrv_std_s < 0 or self.noise_std < 0:
            raise ContractError("hrv_std_s and noise_std must be non-negative")
        if not 0.0 <= self.ptt_s <= 0.5:
            raise ContractError("ptt_s must be in [0, 0.5]")
        if self.n_segments < 0:
            raise ContractError("n_segments must be non-negative")


@dataclass
class BeatTrain:
    beat_times: np.ndarray

    def __post_init__(self) -> None:
        self.beat_times = np.asarray(self.beat_times, dtype=np.float64)
        if self.beat_times.size and (
            self.beat_times[0] < 0 or self.beat_times[-1] >= SEGMENT_SECONDS
        ):
            raise ContractError("beat times must lie in [0, 10)")
        if np.any(np.diff(self.beat_times) < RR_FLOOR_S - 1e-12):
            raise ContractError("RR intervals must respect the 0.25 s refractory floor")

    def __len__(self) -> int:
        return self.beat_times.size


# (offset s, amplitude, width s) per bump; width = 2 * Gaussian sigma
ECG_BUMPS = {
    "p": (-0.20, 0.15, 0.04),
    "q": (-0.03, -0.10, 0.01),
    "r": (0.0, 1.0, 0.012),
    "s": (0.03, -0.15, 0.01),
    "t": (0.30, 0.30, 0.06),
}
PPG_SYSTOLIC = (0.0, 1.0, 0.10)
PPG_DICROTIC = (0.25, 0.35, 0.12)


def gen_beat_times(p: SynthParams, rng: np.random.Generator) -> BeatTrain:
    """Beat times over [0, 10): jittered regular rhythm, or uniform RR in AF mode."""
    rr_mean = np.mean(AF_RR_RANGE_S) if p.af_mode else 60.0 / p.hr_bpm
    t = rng.uniform(0.0, rr_mean)
    times = []
    while t < SEGMENT_SECONDS:
        times.append(t)
        if p.af_mode:
            rr = rng.uniform(*AF_RR_RANGE_S)
        else:
            rr = max(RR_FLOOR_S, 60.0 / p.hr_bpm + rng.normal(0.0, p.hrv_std_s))
        t += rr
    return BeatTrain(np.asarray(times))


def _bumps(t: np.ndarray, centers: np.ndarray, amp: float, width: float) -> np.ndarray:
    sigma = width / 2.0
    out = np.zeros_like(t)
    for c in centers:
        out += amp * np.exp(-0.5 * ((t - c) / sigma) ** 2)
    return out


def synth_ecg(bt: BeatTrain, p: SynthParams, rng: np.random.Generator | None = None) -> Waveform:
    """Sum-of-Gaussian-bumps ECG; in AF mode the P wave is absent."""
    if rng is None:
        rng = stream_rng(p.seed, CH_ECG_NOISE)
    t = np.arange(SEGMENT_SAMPLES) / TARGET_FS
    x = np.zeros(SEGMENT_SAMPLES)
    for name, (off, amp, width) in ECG_BUMPS.items():
        if name == "p" and p.af_mode:
            continue
        x += _bumps(t, bt.beat_times + off, amp, width)
    x += rng.normal(0.0, p.noise_std, SEGMENT_SAMPLES)
    return Waveform(x, TARGET_FS, ECG)


def synth_ppg(bt: BeatTrain, p: SynthParams, rng: np.random.Generator | None = None) -> Waveform:
    """Systolic + dicrotic lobes per beat, delayed by the pulse transit time."""
    if rng is None:
        rng = stream_rng(p.seed, CH_PPG_NOISE)
    t = np.arange(SEGMENT_SAMPLES) / TARGET_FS
    pulse_times = bt.beat_times + p.ptt_s
    x = _bumps(t, pulse_times + PPG_SYSTOLIC[0], PPG_SYSTOLIC[1], PPG_SYSTOLIC[2])
    x += _bumps(t, pulse_times + PPG_DICROTIC[0], PPG_DICROTIC[1], PPG_DICROTIC[2])
    x += rng.normal(0.0, p.noise_std, SEGMENT_SAMPLES)
    return Waveform(x, TARGET_FS, PPG)


def corrupt(w: Waveform, kind: str, severity: float, rng: np.random.Generator) -> Waveform:
    """Degrade a waveform with baseline wander, a noise burst, or a dropout."""
    if not 0.0 <= severity <= 1.0:
        raise ContractError("severity must be in [0, 1]")
    if severity == 0.0:
        return w.with_samples(w.samples.copy())
    x = w.samples.copy()
    t = np.arange(x.size) / w.fs
    if kind == "wander":
        phase = rng.uniform(0.0, 2.0 * np.pi)
        x += WANDER_AMP * severity * np.sin(2.0 * np.pi * WANDER_HZ * t + phase)
    elif kind == "burst":
        span = int(round(BURST_SPAN_S * w.fs))
        start = rng.integers(0, max(1, x.size - span))
        x[start : start + span] += rng.normal(0.0, BURST_STD * severity, min(span, x.size - start))
    elif kind == "dropout":
        span = int(round(DROPOUT_SPAN_S * w.fs))
        start = rng.integers(0, max(1, x.size - span))
        x[start : start + span] = 0.0
    else:
        raise ContractError(f"unknown corruption kind {kind!r}")
    return w.with_samples(x)


def _candidate_pair(p: SynthParams, index: int, subject_id: str) -> list[SegmentPair]:
    bt = gen_beat_times(p, segment_rng(p.seed, index, CH_BEATS))
    ecg = synth_ecg(bt, p, segment_rng(p.seed, index, CH_ECG_NOISE))
    ppg = synth_ppg(bt, p, segment_rng(p.seed, index, CH_PPG_NOISE))
    ecg = replace(ecg, subject_id=subject_id)
    ppg = replace(ppg, subject_id=subject_id)
    label = frozenset({"af"}) if p.af_mode else frozenset()
    return preprocess_pair(ppg, ecg, label=label)


def make_dataset(p: SynthParams) -> list[SegmentPair]:
    """n_segments labeled pairs, each run through the preprocessing pipeline."""
    pairs: list[SegmentPair] = []
    attempts = 0
    max_attempts = 2 * p.n_segments + 20
    while len(pairs) < p.n_segments and attempts < max_attempts:
        subject = f"synth-{p.seed:08x}-{attempts:05d}"
        got = _candidate_pair(p, attempts, subject)
        attempts += 1
        pairs.extend(got)
    if len(pairs) < p.n_segments:
        raise GenerationError(
            f"preprocessing rejected too many candidates: kept {len(pairs)} of {attempts} "
            f"(params: hr={p.hr_bpm}, af={p.af_mode}, noise={p.noise_std})"
        )
    return pairs[: p.n_segments]
