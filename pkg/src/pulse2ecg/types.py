"""Core waveform containers.

A `Waveform` is a uniformly sampled 1-D signal. Raw recordings may contain
NaN gaps (missing values); the preprocessing ops are the gatekeepers that
reject or drop non-finite data, so construction stays permissive about
sample values and strict about structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ContractError

PPG = "ppg"
ECG = "ecg"

TARGET_FS = 128.0
SEGMENT_SECONDS = 10.0
SEGMENT_SAMPLES = 1280


@dataclass
class Waveform:
    samples: np.ndarray
    fs: float
    modality: str
    subject_id: str = ""
    t0: float = 0.0

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ContractError("samples must be a non-empty 1-D array")
        if not self.fs > 0:
            raise ContractError("fs must be positive")
        if self.modality not in (PPG, ECG):
            raise ContractError(f"unknown modality {self.modality!r}")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    def with_samples(self, samples: np.ndarray, fs: Optional[float] = None) -> "Waveform":
        return replace(self, samples=samples, fs=self.fs if fs is None else fs)


@dataclass
class QualityReport:
    passed: bool
    flat_fraction: float
    detected_beats: int
    template_corr: Optional[float] = None  # PPG only


@dataclass
class SegmentPair:
    """A time-aligned 10 s PPG/ECG pair at 128 Hz."""

    ppg: Waveform
    ecg: Waveform
    label: frozenset = field(default_factory=frozenset)
    quality: Optional[tuple] = None  # (QualityReport ppg, QualityReport ecg)

    def __post_init__(self) -> None:
        self.label = frozenset(self.label)
        if len(self.ppg) != len(self.ecg):
            raise ContractError("ppg/ecg lengths differ")
        if self.ppg.fs != self.ecg.fs:
            raise ContractError("ppg/ecg sampling rates differ")
        if self.ppg.subject_id != self.ecg.subject_id:
            raise ContractError("ppg/ecg subject ids differ")

    @property
    def n_samples(self) -> int:
        return len(self.ppg)

    @property
    def fs(self) -> float:
        return self.ppg.fs

    @property
    def subject_id(self) -> str:
        return self.ppg.subject_id
