"""Probe classifier: a small 1-D conv net for AF-vs-normal on ECG segments.

Doubles as the pluggable feature extractor: `embed` returns the pooled
penultimate activations (32-dim), which back the embedding-set FID.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
from scipy.stats import rankdata

from .errors import ContractError, MetricError, TrainingError
from .rng import torch_generator

EMBED_DIM = 32


class ProbeNet(nn.Module):
    """Three conv blocks and a pooled linear head."""

    def __init__(self, embed_dim: int = EMBED_DIM):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv1d(1, 16, kernel_size=9, stride=2, padding=4),
            nn.ReLU(),
            nn.MaxPool1d(2),
            nn.Conv1d(16, 32, kernel_size=15, stride=2, padding=7),
            nn.ReLU(),
            nn.MaxPool1d(2),
            nn.Conv1d(32, embed_dim, kernel_size=15, stride=2, padding=7),
            nn.ReLU(),
        )
        self.head = nn.Linear(embed_dim, 1)

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim == 2:
            x = x[:, None, :]
        return self.features(x).mean(dim=-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.embed(x)).squeeze(-1)


def _to_tensor(segments) -> torch.Tensor:
    arr = np.asarray(segments, dtype=np.float32)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ContractError("segments must be [N, L]")
    return torch.from_numpy(arr)


def train_probe(
    segments,
    labels,
    *,
    iters: int = 400,
    batch: int = 64,
    lr: float = 1e-3,
    seed: int = 0,
) -> ProbeNet:
    """Train the binary AF probe on real ECG segments."""
    x = _to_tensor(segments)
    y = torch.as_tensor(np.asarray(labels, dtype=np.float32))
    if x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ContractError("segments and labels must be non-empty and aligned")
    if len(torch.unique(y)) < 2:
        raise MetricError("probe training needs both classes present")
    torch.manual_seed(seed)
    net = ProbeNet()
    gen = torch_generator(seed + 1)
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    loss_fn = nn.BCEWithLogitsLoss()
    n = x.shape[0]
    net.train()
    for step in range(iters):
        idx = torch.randint(0, n, (min(batch, n),), generator=gen)
        logits = net(x[idx])
        loss = loss_fn(logits, y[idx])
        if not torch.isfinite(loss):
            raise TrainingError(step, "probe loss became non-finite")
        opt.zero_grad()
        loss.backward()
        opt.step()
    net.eval()
    return net


@torch.no_grad()
def probe_scores(net: ProbeNet, segments) -> np.ndarray:
    net.eval()
    return net(_to_tensor(segments)).numpy()


@torch.no_grad()
def embed(net: ProbeNet, segments) -> np.ndarray:
    """Deterministic feature vectors for an embedding-set metric."""
    net.eval()
    return net.embed(_to_tensor(segments)).numpy().astype(np.float64)


def auroc(scores, labels) -> float:
    """Rank-statistic AUROC over all positive-negative pairs (ties get half credit)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC undefined for single-class inputs")
    ranks = rankdata(scores, method="average")
    pos_rank_sum = float(np.sum(ranks[labels == 1]))
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate_probe(net: ProbeNet, segments, labels) -> float:
    return auroc(probe_scores(net, segments), labels)
