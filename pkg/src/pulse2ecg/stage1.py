"""Stage 1: shared cross-modal encoder, modality decoders, composite loss.

One encoder handles both PPG and ECG with identical parameters and emits a
diagonal-Gaussian posterior per latent position. Each modality has its own
decoder: a residual upsampling path for fine structure plus a decomposable
head (level, quadratic trend, seasonal harmonics) for the global shape,
summed. Latents are scaled by 0.18215 everywhere downstream.

Loss conventions: reconstruction and cross-modal terms are sums of squares
over samples, averaged over the batch; KL and alignment terms are summed
over latent positions, averaged over the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractError, TrainingError
from .rng import torch_generator
from .types import ECG, PPG, SegmentPair

LATENT_SCALE = 0.18215
LOG_SIGMA_CLAMP = 10.0


@dataclass
class Stage1Config:
    alpha: float = 1e-4
    tau: float = 0.07
    w_align: float = 1.0
    w_nce: float = 1.0
    w_cross: float = 1.0
    lr: float = 2e-5
    batch: int = 128
    iters: int = 5000
    seed: int = 0
    segment_len: int = 1280
    latent_channels: int = 4
    widths: tuple = (32, 64, 64, 128, 128)
    attn_heads: int = 4
    seasonal_harmonics: int = 4

    def __post_init__(self) -> None:
        self.widths = tuple(self.widths)
        if self.alpha <= 0 and self.alpha != 0.0:
            raise ContractError("alpha must be non-negative")
        if self.tau <= 0:
            raise ContractError("tau must be positive")
        if self.segment_len % (2 ** len(self.widths)) != 0:
            raise ContractError("segment_len must be divisible by the total downsampling factor")

    @property
    def latent_len(self) -> int:
        return self.segment_len // (2 ** len(self.widths))


@dataclass
class GaussianPosterior:
    """Per-position diagonal-Gaussian latent parameters."""

    mu: torch.Tensor
    sigma: torch.Tensor

    def __post_init__(self) -> None:
        self.mu = torch.as_tensor(self.mu)
        self.sigma = torch.as_tensor(self.sigma)
        if self.mu.shape != self.sigma.shape:
            raise ContractError("mu and sigma must have identical shapes")
        if not bool((self.sigma > 0).all()):
            raise ContractError("sigma must be strictly positive")


@dataclass
class LatentSeq:
    """A sampled latent sequence with the 0.18215 scale already applied."""

    z: torch.Tensor
    scale: float = LATENT_SCALE

    def __post_init__(self) -> None:
        self.z = torch.as_tensor(self.z)


def sample_latent(p: GaussianPosterior, generator: torch.Generator | None = None) -> LatentSeq:
    """Reparameterized draw: (mu + sigma * eps) * scale."""
    eps = torch.randn(p.mu.shape, generator=generator, dtype=p.mu.dtype)
    return LatentSeq((p.mu + p.sigma * eps) * LATENT_SCALE)


def _groups(channels: int) -> int:
    g = min(8, channels)
    while channels % g:
        g -= 1
    return g


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.norm = nn.GroupNorm(_groups(channels), channels)
        self.conv = nn.Conv1d(channels, channels, 3, padding=1)

    def forward(self, x):
        return x + self.conv(F.silu(self.norm(x)))


class SelfAttention1d(nn.Module):
    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.norm = nn.LayerNorm(channels)
        self.attn = nn.MultiheadAttention(channels, heads, batch_first=True)

    def forward(self, x):
        t = self.norm(x.transpose(1, 2))
        a, _ = self.attn(t, t, t, need_weights=False)
        return x + a.transpose(1, 2)


class SharedEncoder(nn.Module):
    """1-D conv residual backbone with five x2 downsampling stages."""

    def __init__(self, cfg: Stage1Config):
        super().__init__()
        self.stem = nn.Conv1d(1, cfg.widths[0], 5, padding=2)
        stages = []
        prev = cfg.widths[0]
        for w in cfg.widths:
            stages.append(nn.Conv1d(prev, w, 4, stride=2, padding=1))
            stages.append(ResidualBlock(w))
            prev = w
        self.stages = nn.Sequential(*stages)
        self.attn = SelfAttention1d(prev, cfg.attn_heads)
        self.out_norm = nn.GroupNorm(_groups(prev), prev)
        self.head_mu = nn.Conv1d(prev, cfg.latent_channels, 1)
        self.head_log_sigma = nn.Conv1d(prev, cfg.latent_channels, 1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.stages(self.stem(x))
        h = F.silu(self.out_norm(self.attn(h)))
        mu = self.head_mu(h).transpose(1, 2)
        log_sigma = torch.clamp(self.head_log_sigma(h), -LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)
        return mu, torch.exp(log_sigma).transpose(1, 2)


class DecomposableHead(nn.Module):
    """Level + quadratic trend + seasonal harmonics from the flattened latent."""

    def __init__(self, cfg: Stage1Config):
        super().__init__()
        k = cfg.seasonal_harmonics
        self.coeffs = nn.Linear(cfg.latent_len * cfg.latent_channels, 1 + 2 + 2 * k)
        t = torch.linspace(0.0, 1.0, cfg.segment_len + 1)[:-1]
        rows = [t, t**2]
        for h in range(1, k + 1):
            rows.append(torch.sin(2 * math.pi * h * t))
            rows.append(torch.cos(2 * math.pi * h * t))
        self.register_buffer("basis", torch.stack(rows))

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        c = self.coeffs(z.flatten(1))
        return c[:, :1] + c[:, 1:] @ self.basis.to(z.dtype)


class Decoder(nn.Module):
    """Residual upsampling path plus the decomposable head, summed."""

    def __init__(self, cfg: Stage1Config):
        super().__init__()
        widths = cfg.widths
        self.in_proj = nn.Conv1d(cfg.latent_channels, widths[-1], 1)
        stages = []
        prev = widths[-1]
        for w in reversed(widths):
            stages.append(ResidualBlock(prev))
            stages.append(nn.Upsample(scale_factor=2, mode="nearest"))
            stages.append(nn.Conv1d(prev, w, 3, padding=1))
            prev = w
        self.stages = nn.Sequential(*stages)
        self.out_norm = nn.GroupNorm(_groups(prev), prev)
        self.out_conv = nn.Conv1d(prev, 1, 5, padding=2)
        self.head = DecomposableHead(cfg)

    def forward(self, z: torch.Tensor, return_parts: bool = False):
        h = self.in_proj(z.transpose(1, 2))
        fine = self.out_conv(F.silu(self.out_norm(self.stages(h)))).squeeze(1)
        parts = self.head(z)
        if return_parts:
            return fine, parts
        return fine + parts


class Stage1Model(nn.Module):
    def __init__(self, cfg: Stage1Config):
        super().__init__()
        self.cfg = cfg
        self.encoder = SharedEncoder(cfg)
        self.decoder_ppg = Decoder(cfg)
        self.decoder_ecg = Decoder(cfg)

    def _as_batch(self, x) -> torch.Tensor:
        t = torch.as_tensor(np.asarray(x, dtype=np.float32)) if not torch.is_tensor(x) else x
        if t.ndim == 1:
            t = t[None, :]
        if t.ndim != 2 or t.shape[-1] != self.cfg.segment_len:
            raise ContractError(f"expected segments of length {self.cfg.segment_len}, got {tuple(t.shape)}")
        return t

    def encode(self, x) -> GaussianPosterior:
        t = self._as_batch(x)
        mu, sigma = self.encoder(t[:, None, :])
        return GaussianPosterior(mu, sigma)

    def decode(self, z, modality: str) -> torch.Tensor:
        if isinstance(z, LatentSeq):
            z = z.z
        if z.ndim == 2:
            z = z[None]
        decoder = self.decoder_ppg if modality == PPG else self.decoder_ecg
        return decoder(z)

    def decode_ppg(self, z) -> torch.Tensor:
        return self.decode(z, PPG)

    def decode_ecg(self, z) -> torch.Tensor:
        return self.decode(z, ECG)


def _kl_elements(mu_p, sigma_p, mu_q, sigma_q) -> torch.Tensor:
    return (
        torch.log(sigma_q / sigma_p)
        + (sigma_p**2 + (mu_p - mu_q) ** 2) / (2.0 * sigma_q**2)
        - 0.5
    )


def _check_posteriors(p: GaussianPosterior, q: GaussianPosterior) -> None:
    if p.mu.shape != q.mu.shape:
        raise ContractError("posterior shapes must match")


def kl_diag_gauss(p: GaussianPosterior, q: GaussianPosterior) -> torch.Tensor:
    """KL(p || q) between diagonal Gaussians, summed over all positions."""
    _check_posteriors(p, q)
    return _kl_elements(p.mu, p.sigma, q.mu, q.sigma).sum()


def loss_align(p_a: GaussianPosterior, p_b: GaussianPosterior) -> torch.Tensor:
    """Mean-consistency plus symmetric-KL alignment, summed over positions."""
    _check_posteriors(p_a, p_b)
    mean_term = ((p_a.mu - p_b.mu) ** 2).sum()
    kl_ab = _kl_elements(p_a.mu, p_a.sigma, p_b.mu, p_b.sigma).sum()
    kl_ba = _kl_elements(p_b.mu, p_b.sigma, p_a.mu, p_a.sigma).sum()
    return mean_term + 0.5 * (kl_ab + kl_ba)


def loss_infonce(zbar_ecg: torch.Tensor, zbar_ppg: torch.Tensor, tau: float) -> torch.Tensor:
    """Symmetric InfoNCE over pooled latents with dot-product similarity."""
    zbar_ecg = torch.as_tensor(zbar_ecg)
    zbar_ppg = torch.as_tensor(zbar_ppg)
    if zbar_ecg.ndim != 2 or zbar_ecg.shape != zbar_ppg.shape or zbar_ecg.shape[0] == 0:
        raise ContractError("expected matching non-empty [B, D] batches")
    sim = zbar_ecg @ zbar_ppg.T / tau
    labels = torch.arange(sim.shape[0])
    loss_e2p = F.cross_entropy(sim, labels)
    loss_p2e = F.cross_entropy(sim.T, labels)
    return 0.5 * (loss_e2p + loss_p2e)


def _sum_sq(delta: torch.Tensor) -> torch.Tensor:
    per_segment = (delta**2).sum(dim=-1)
    return per_segment.mean() if per_segment.ndim else per_segment


def loss_cross(z_ppg, z_ecg, x_ppg, x_ecg, *, decode_ppg, decode_ecg) -> torch.Tensor:
    """Cross-modal decodability: each latent must reconstruct the other modality."""
    if isinstance(z_ppg, LatentSeq):
        z_ppg = z_ppg.z
    if isinstance(z_ecg, LatentSeq):
        z_ecg = z_ecg.z
    return _sum_sq(decode_ecg(z_ppg) - torch.as_tensor(x_ecg)) + _sum_sq(
        decode_ppg(z_ecg) - torch.as_tensor(x_ppg)
    )


def _kl_std_normal_batchmean(p: GaussianPosterior) -> torch.Tensor:
    el = -torch.log(p.sigma) + (p.sigma**2 + p.mu**2) / 2.0 - 0.5
    summed = el.sum(dim=(-2, -1))
    return summed.mean() if summed.ndim else summed


def _align_batchmean(p_a: GaussianPosterior, p_b: GaussianPosterior) -> torch.Tensor:
    mean_term = ((p_a.mu - p_b.mu) ** 2).sum(dim=(-2, -1))
    kl_ab = _kl_elements(p_a.mu, p_a.sigma, p_b.mu, p_b.sigma).sum(dim=(-2, -1))
    kl_ba = _kl_elements(p_b.mu, p_b.sigma, p_a.mu, p_a.sigma).sum(dim=(-2, -1))
    total = mean_term + 0.5 * (kl_ab + kl_ba)
    return total.mean() if total.ndim else total


def loss_stage1(
    x_ppg: torch.Tensor,
    x_ecg: torch.Tensor,
    model,
    cfg: Stage1Config,
    generator: torch.Generator | None = None,
) -> tuple[torch.Tensor, dict]:
    """Composite objective; returns (total, per-term breakdown)."""
    x_ppg = torch.as_tensor(x_ppg)
    x_ecg = torch.as_tensor(x_ecg)
    batched = x_ppg.ndim == 2 and x_ppg.shape == x_ecg.shape
    if batched:
        # one shared-encoder pass and one pass per decoder (reconstruction and
        # cross-modal latents concatenated) — identical math, fewer dispatches
        b = x_ppg.shape[0]
        post_all = model.encode(torch.cat([x_ppg, x_ecg]))
        post_p = GaussianPosterior(post_all.mu[:b], post_all.sigma[:b])
        post_e = GaussianPosterior(post_all.mu[b:], post_all.sigma[b:])
    else:
        post_p = model.encode(x_ppg)
        post_e = model.encode(x_ecg)

    eps_p = torch.randn(post_p.mu.shape, generator=generator, dtype=post_p.mu.dtype)
    eps_e = torch.randn(post_e.mu.shape, generator=generator, dtype=post_e.mu.dtype)
    z_p = (post_p.mu + post_p.sigma * eps_p) * LATENT_SCALE
    z_e = (post_e.mu + post_e.sigma * eps_e) * LATENT_SCALE

    if batched:
        dec_p = model.decode(torch.cat([z_p, z_e]), PPG)
        dec_e = model.decode(torch.cat([z_e, z_p]), ECG)
        rec_p = _sum_sq(dec_p[:b] - x_ppg)
        rec_e = _sum_sq(dec_e[:b] - x_ecg)
        cross = _sum_sq(dec_e[b:] - x_ecg) + _sum_sq(dec_p[b:] - x_ppg)
    else:
        rec_p = _sum_sq(model.decode(z_p, PPG) - x_ppg)
        rec_e = _sum_sq(model.decode(z_e, ECG) - x_ecg)
        cross = loss_cross(
            z_p,
            z_e,
            x_ppg,
            x_ecg,
            decode_ppg=lambda z: model.decode(z, PPG),
            decode_ecg=lambda z: model.decode(z, ECG),
        )
    kl_p = _kl_std_normal_batchmean(post_p)
    kl_e = _kl_std_normal_batchmean(post_e)
    align = _align_batchmean(post_p, post_e)
    nce = loss_infonce(z_e.mean(dim=-2), z_p.mean(dim=-2), cfg.tau)

    total = (
        rec_p
        + rec_e
        + cfg.alpha * (kl_p + kl_e)
        + cfg.w_align * align
        + cfg.w_nce * nce
        + cfg.w_cross * cross
    )
    breakdown = {
        "rec_ppg": float(rec_p.detach()),
        "rec_ecg": float(rec_e.detach()),
        "kl_ppg": float(kl_p.detach()),
        "kl_ecg": float(kl_e.detach()),
        "align": float(align.detach()),
        "infonce": float(nce.detach()),
        "cross": float(cross.detach()),
        "total": float(total.detach()),
    }
    return total, breakdown


def dataset_tensors(dataset) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack a list of SegmentPair (or a (ppg, ecg) array pair) into tensors."""
    if isinstance(dataset, tuple) and len(dataset) == 2:
        ppg, ecg = dataset
    else:
        if len(dataset) == 0:
            raise ContractError("dataset is empty")
        if not isinstance(dataset[0], SegmentPair):
            raise ContractError("expected SegmentPair elements or a (ppg, ecg) array tuple")
        ppg = np.stack([p.ppg.samples for p in dataset])
        ecg = np.stack([p.ecg.samples for p in dataset])
    ppg_t = torch.as_tensor(np.asarray(ppg, dtype=np.float32))
    ecg_t = torch.as_tensor(np.asarray(ecg, dtype=np.float32))
    if ppg_t.ndim != 2 or ppg_t.shape != ecg_t.shape or ppg_t.shape[0] == 0:
        raise ContractError("dataset must stack to matching non-empty [N, L] arrays")
    return ppg_t, ecg_t


def train_stage1(dataset, cfg: Stage1Config, log_every: int = 0) -> tuple[Stage1Model, np.ndarray]:
    """AdamW training loop; deterministic given cfg.seed."""
    ppg, ecg = dataset_tensors(dataset)
    n = ppg.shape[0]
    torch.manual_seed(cfg.seed)
    model = Stage1Model(cfg)
    gen = torch_generator(cfg.seed + 1)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr)
    history = np.zeros(cfg.iters)
    model.train()
    for step in range(cfg.iters):
        idx = torch.randint(0, n, (min(cfg.batch, n),), generator=gen)
        try:
            total, _ = loss_stage1(ppg[idx], ecg[idx], model, cfg, gen)
        except ContractError as exc:
            # mid-training invariant violations (NaN posteriors) are divergence
            raise TrainingError(step, f"model state became invalid at step {step}: {exc}") from exc
        if not torch.isfinite(total):
            raise TrainingError(step)
        opt.zero_grad()
        total.backward()
        opt.step()
        history[step] = float(total.detach())
        if log_every and step % log_every == 0:
            print(f"stage1 step {step}: loss {history[step]:.4f}")
    model.eval()
    return model, history


def encode_latents(
    model: Stage1Model,
    segments,
    *,
    sampled: bool = False,
    generator: torch.Generator | None = None,
    batch: int = 256,
) -> torch.Tensor:
    """Scaled latents for a segment set: posterior means by default."""
    x = torch.as_tensor(np.asarray(segments, dtype=np.float32))
    if x.ndim == 1:
        x = x[None]
    outs = []
    with torch.no_grad():
        for i in range(0, x.shape[0], batch):
            post = model.encode(x[i : i + batch])
            if sampled:
                outs.append(sample_latent(post, generator).z)
            else:
                outs.append(post.mu * LATENT_SCALE)
    return torch.cat(outs)


def pooled_posterior_means(model: Stage1Model, segments, batch: int = 256) -> np.ndarray:
    """Time-pooled posterior means, one [C] row per segment."""
    x = torch.as_tensor(np.asarray(segments, dtype=np.float32))
    if x.ndim == 1:
        x = x[None]
    outs = []
    with torch.no_grad():
        for i in range(0, x.shape[0], batch):
            outs.append(model.encode(x[i : i + batch]).mu.mean(dim=-2))
    return torch.cat(outs).numpy().astype(np.float64)


def save_stage1(path, model: Stage1Model, seed: int = 0, iteration: int = 0) -> None:
    from dataclasses import asdict

    from .checkpoint import write_pfe1

    tensors = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    meta = {"stage": 1, "config": asdict(model.cfg), "seed": seed, "iter": iteration}
    write_pfe1(path, tensors, meta)


def load_stage1(path) -> Stage1Model:
    from .checkpoint import read_pfe1, require_stage

    tensors, meta = read_pfe1(path)
    require_stage(meta, 1, path)
    cfg = Stage1Config(**meta["config"])
    model = Stage1Model(cfg)
    state = {k: torch.from_numpy(v.copy()) for k, v in tensors.items()}
    model.load_state_dict(state)
    model.eval()
    return model
