"""Evaluation suite: waveform errors, curve and distribution distances,
heart-rate agreement, and latent-alignment diagnostics.

The Fréchet distance here is the discrete Fréchet distance between
time-value curves (decimated to at most 512 points); embedding-set FID
fits Gaussians with a small shrinkage term and takes the matrix square
root via an eigendecomposition of the symmetrized product.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError, MetricError, NumericError
from .qrs import BeatAnnotations, detect_qrs, heart_rate  # noqa: F401  (re-export)
from .types import TARGET_FS

FRECHET_MAX_POINTS = 512
FID_SHRINKAGE = 1e-6


def _as_segment_matrix(segments) -> np.ndarray:
    arr = np.asarray(segments, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ContractError("expected a segment or a set of equally long segments")
    return arr


def mae(a, b) -> float:
    """Per-segment mean absolute error, averaged over segments."""
    a, b = _as_segment_matrix(a), _as_segment_matrix(b)
    if a.shape != b.shape:
        raise ContractError(f"paired sets must match in shape: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b), axis=1).mean())


def rmse(a, b) -> float:
    """Per-segment root mean squared error, averaged over segments."""
    a, b = _as_segment_matrix(a), _as_segment_matrix(b)
    if a.shape != b.shape:
        raise ContractError(f"paired sets must match in shape: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2, axis=1)).mean())


def _decimate_curve(x: np.ndarray, fs: float) -> np.ndarray:
    n = x.size
    if n > FRECHET_MAX_POINTS:
        idx = np.unique(np.round(np.linspace(0, n - 1, FRECHET_MAX_POINTS)).astype(int))
    else:
        idx = np.arange(n)
    return np.column_stack([idx / fs, x[idx]])


def frechet_distance(a, b, fs: float = TARGET_FS) -> float:
    """Discrete Fréchet distance between two time-value curves."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ContractError("curves must be non-empty")
    pa, pb = _decimate_curve(a, fs), _decimate_curve(b, fs)
    d = np.sqrt(
        (pa[:, 0:1] - pb[None, :, 0].reshape(1, -1)) ** 2
        + (pa[:, 1:2] - pb[None, :, 1].reshape(1, -1)) ** 2
    )
    n, m = d.shape
    ca = np.full((n, m), np.inf)
    ca[0, 0] = d[0, 0]
    # anti-diagonal sweep: all three DP predecessors live on earlier diagonals
    for k in range(1, n + m - 1):
        i = np.arange(max(0, k - m + 1), min(n, k + 1))
        j = k - i
        best = np.full(i.size, np.inf)
        up = i > 0
        best[up] = np.minimum(best[up], ca[i[up] - 1, j[up]])
        left = j > 0
        best[left] = np.minimum(best[left], ca[i[left], j[left] - 1])
        diag = up & left
        best[diag] = np.minimum(best[diag], ca[i[diag] - 1, j[diag] - 1])
        ca[i, j] = np.maximum(d[i, j], best)
    return float(ca[n - 1, m - 1])


def frechet_distance_mean(a_set, b_set, fs: float = TARGET_FS) -> float:
    """Dataset-level Fréchet distance: mean over paired curves."""
    a_set, b_set = _as_segment_matrix(a_set), _as_segment_matrix(b_set)
    if a_set.shape[0] != b_set.shape[0]:
        raise ContractError("paired sets must have the same number of segments")
    return float(np.mean([frechet_distance(x, y, fs) for x, y in zip(a_set, b_set)]))


def _sqrt_trace_of_product(sa: np.ndarray, sb: np.ndarray) -> float:
    wa, va = np.linalg.eigh(sa)
    ra = (va * np.sqrt(np.clip(wa, 0.0, None))) @ va.T
    m = ra @ sb @ ra
    m = (m + m.T) / 2.0
    wm = np.linalg.eigvalsh(m)
    return float(np.sum(np.sqrt(np.clip(wm, 0.0, None))))


def fid(a, b) -> float:
    """Fréchet distance between Gaussian fits of two embedding sets."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ContractError("embedding sets must be 2-D with matching feature dimension")
    if a.shape[1] < 2:
        raise ContractError("feature dimension must be >= 2")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ContractError("embedding sets must be finite")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ContractError("need at least 2 rows per set to fit a covariance")
    d = a.shape[1]
    if a.shape[0] < d + 1 or b.shape[0] < d + 1:
        warnings.warn("fewer rows than feature dim + 1: covariance shrinkage dominates the FID")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    sa = np.cov(a, rowvar=False) + FID_SHRINKAGE * np.eye(d)
    sb = np.cov(b, rowvar=False) + FID_SHRINKAGE * np.eye(d)
    value = float(np.sum((mu_a - mu_b) ** 2) + np.trace(sa) + np.trace(sb) - 2.0 * _sqrt_trace_of_product(sa, sb))
    if not np.isfinite(value):
        raise NumericError("FID evaluation produced a non-finite value")
    # tiny negative residue is numeric noise around zero
    return max(value, 0.0) if value > -1e-6 else value


def mae_hr(real, gen, fs: float = TARGET_FS) -> tuple[float, int]:
    """Mean |HR_real - HR_gen| over pairs where both HRs are defined.

    Returns (value, skipped_pair_count).
    """
    real, gen = _as_segment_matrix(real), _as_segment_matrix(gen)
    if real.shape[0] != gen.shape[0]:
        raise ContractError("paired sets must have the same number of segments")
    diffs = []
    skipped = 0
    for xr, xg in zip(real, gen):
        try:
            hr_r = heart_rate(detect_qrs(xr, fs), fs)
            hr_g = heart_rate(detect_qrs(xg, fs), fs)
        except MetricError:
            skipped += 1
            continue
        diffs.append(abs(hr_r - hr_g))
    if not diffs:
        raise MetricError("no pair had a defined heart rate on both sides")
    return float(np.mean(diffs)), skipped


def alignment_diagnostics(pooled_ppg, pooled_ecg) -> dict:
    """Latent-alignment diagnostics on paired pooled posterior means.

    Inputs are [B, D] arrays of time-pooled means, one row per segment.
    """
    a = np.asarray(pooled_ppg, dtype=np.float64)
    b = np.asarray(pooled_ecg, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape or a.shape[0] == 0:
        raise ContractError("expected matching non-empty [B, D] batches")
    centroid_gap = float(np.linalg.norm(a.mean(axis=0) - b.mean(axis=0)))
    mean_pair_dist = float(np.mean(np.linalg.norm(a - b, axis=1)))
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    retrieval = float(np.mean(np.argmin(d2, axis=1) == np.arange(a.shape[0])))
    return {
        "centroid_gap": centroid_gap,
        "mean_pair_dist": mean_pair_dist,
        "cross_modal_retrieval_at_1": retrieval,
    }


@dataclass
class MetricsReport:
    mae: float
    rmse: float
    fd: float
    fid: float
    mae_hr: float
    n_segments: int
    T: int
    seed: int
    skipped_hr_pairs: int = 0
    extractor_id: str = ""

    def __post_init__(self) -> None:
        for name in ("mae", "rmse", "fd", "fid", "mae_hr"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ContractError(f"metric {name} must be finite and non-negative, got {v}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))
