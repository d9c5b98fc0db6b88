"""Deterministic random streams.

All stochastic code draws from Philox, a counter-based generator keyed by
(seed, stream). Streams never overlap, so per-segment work can be generated
independently and in parallel while staying bit-reproducible.

Stream ids for synthetic data pack (segment index, channel):
    stream = segment_index * 8 + channel
so each segment owns eight sub-streams. Torch-side randomness (parameter
init, batch sampling, training noise) uses `torch.Generator` seeded
explicitly; see `torch_generator`.
"""

from __future__ import annotations

import numpy as np
import torch

# channel tags inside a segment's stream block
CH_BEATS = 0
CH_ECG_NOISE = 1
CH_PPG_NOISE = 2
CH_CORRUPT = 3

_SEGMENT_BLOCK = 8


def stream_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for (seed, stream)."""
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative")
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))


def segment_rng(seed: int, segment_index: int, channel: int) -> np.random.Generator:
    """Generator for one segment's sub-stream (beats, noise, ...)."""
    if not 0 <= channel < _SEGMENT_BLOCK:
        raise ValueError(f"channel must be in [0, {_SEGMENT_BLOCK})")
    return stream_rng(seed, segment_index * _SEGMENT_BLOCK + channel)


def torch_generator(seed: int) -> torch.Generator:
    """CPU torch generator with an explicit seed."""
    g = torch.Generator(device="cpu")
    g.manual_seed(int(seed))
    return g
