"""Stage 2: conditional rectified flow over latents.

A transformer vector field is trained to predict the constant drift
y - z along straight noise-to-target lines in latent space, conditioned on
the PPG latent through cross-attention in every block. Sampling integrates
the learned field with an explicit Euler solver. Inference uses EMA
weights.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractError, TrainingError
from .rng import torch_generator
from .stage1 import LATENT_SCALE, LatentSeq, Stage1Model, encode_latents
from .types import ECG


@dataclass
class FlowConfig:
    d_model: int = 128
    n_heads: int = 4
    n_blocks: int = 4
    d_ff: int = 256
    time_dim: int = 64
    latent_len: int = 40
    latent_channels: int = 4
    k_times: int = 4
    lr: float = 1e-4
    clip_norm: float = 1.0
    ema_decay: float = 0.995
    ema_every: int = 10
    batch: int = 32
    iters: int = 4000
    seed: int = 0
    use_sampled_latents: bool = False


@dataclass
class SamplerConfig:
    T: int = 10

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ContractError("sampler step count T must be >= 1")

    @property
    def dt(self) -> float:
        return 1.0 / self.T


@dataclass
class FlowBatch:
    """One interpolant draw: x_t = (1-t) z + t y, v_star = y - z."""

    z: torch.Tensor
    y: torch.Tensor
    c: torch.Tensor
    t: torch.Tensor
    x_t: torch.Tensor
    v_star: torch.Tensor

    @classmethod
    def make(cls, z, y, c, t) -> "FlowBatch":
        z, y, c = torch.as_tensor(z), torch.as_tensor(y), torch.as_tensor(c)
        t = torch.as_tensor(t, dtype=z.dtype)
        return cls(z=z, y=y, c=c, t=t, x_t=interpolate(z, y, t), v_star=target_field(z, y))


def _expand_t(t, like: torch.Tensor) -> torch.Tensor:
    t = torch.as_tensor(t, dtype=like.dtype)
    if t.ndim == 0:
        t = t.expand(like.shape[0]) if like.ndim == 3 else t
    return t


def interpolate(z, y, t) -> torch.Tensor:
    """Straight-line interpolant (1 - t) z + t y."""
    z, y = torch.as_tensor(z), torch.as_tensor(y)
    if z.shape != y.shape:
        raise ContractError("z and y must have matching shapes")
    t = torch.as_tensor(t, dtype=z.dtype)
    if bool((t < 0).any()) or bool((t > 1).any()):
        raise ContractError("t must lie in [0, 1]")
    while t.ndim < z.ndim:
        t = t.unsqueeze(-1)
    return (1.0 - t) * z + t * y


def target_field(z, y) -> torch.Tensor:
    """Constant drift of the straight trajectory: y - z."""
    z, y = torch.as_tensor(z), torch.as_tensor(y)
    if z.shape != y.shape:
        raise ContractError("z and y must have matching shapes")
    return y - z


class SinusoidalTimeEmbedding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        half = dim // 2
        freqs = torch.exp(-math.log(10000.0) * torch.arange(half) / max(half - 1, 1))
        self.register_buffer("freqs", freqs)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        ang = 1000.0 * t[:, None] * self.freqs.to(t.dtype)[None, :]
        return torch.cat([torch.sin(ang), torch.cos(ang)], dim=-1)


class FlowBlock(nn.Module):
    def __init__(self, cfg: FlowConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = nn.MultiheadAttention(cfg.d_model, cfg.n_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = nn.MultiheadAttention(cfg.d_model, cfg.n_heads, batch_first=True)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.mlp = nn.Sequential(
            nn.Linear(cfg.d_model, cfg.d_ff), nn.SiLU(), nn.Linear(cfg.d_ff, cfg.d_model)
        )

    def forward(self, tok: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        h = self.norm1(tok)
        tok = tok + self.self_attn(h, h, h, need_weights=False)[0]
        h = self.norm2(tok)
        tok = tok + self.cross_attn(h, cond, cond, need_weights=False)[0]
        tok = tok + self.mlp(self.norm3(tok))
        return tok


class FlowField(nn.Module):
    """Conditional vector field v(x_t, t, c) with cross-attention to c."""

    def __init__(self, cfg: FlowConfig):
        super().__init__()
        self.cfg = cfg
        self.token_embed = nn.Conv1d(cfg.latent_channels, cfg.d_model, 3, padding=1)
        self.cond_embed = nn.Conv1d(cfg.latent_channels, cfg.d_model, 3, padding=1)
        self.pos_tokens = nn.Parameter(0.02 * torch.randn(cfg.latent_len, cfg.d_model))
        self.pos_cond = nn.Parameter(0.02 * torch.randn(cfg.latent_len, cfg.d_model))
        self.time_features = SinusoidalTimeEmbedding(cfg.time_dim)
        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.time_dim, cfg.d_model), nn.SiLU(), nn.Linear(cfg.d_model, cfg.d_model)
        )
        self.blocks = nn.ModuleList(FlowBlock(cfg) for _ in range(cfg.n_blocks))
        self.out_norm = nn.LayerNorm(cfg.d_model)
        self.out_proj = nn.Linear(cfg.d_model, cfg.latent_channels)

    def forward(self, x_t, t, c) -> torch.Tensor:
        x_t = torch.as_tensor(x_t)
        c = torch.as_tensor(c)
        squeeze = x_t.ndim == 2
        if squeeze:
            x_t = x_t[None]
        if c.ndim == 2:
            c = c[None].expand(x_t.shape[0], -1, -1)
        if x_t.shape != c.shape:
            raise ContractError(f"x_t {tuple(x_t.shape)} and c {tuple(c.shape)} must match")
        t = _expand_t(t, x_t)
        tok = self.token_embed(x_t.transpose(1, 2)).transpose(1, 2) + self.pos_tokens.to(x_t.dtype)
        tok = tok + self.time_mlp(self.time_features(t)).unsqueeze(1)
        cond = self.cond_embed(c.transpose(1, 2)).transpose(1, 2) + self.pos_cond.to(c.dtype)
        for block in self.blocks:
            tok = block(tok, cond)
        out = self.out_proj(self.out_norm(tok))
        return out[0] if squeeze else out


def loss_stage2(
    y: torch.Tensor,
    c: torch.Tensor,
    model,
    k_times: int = 4,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Drift-regression objective, one noise draw and k_times time draws per pair."""
    y = torch.as_tensor(y)
    c = torch.as_tensor(c)
    if y.ndim != 3 or y.shape[0] == 0:
        raise ContractError("y must be a non-empty [B, P, C] batch")
    if k_times < 1:
        raise ContractError("k_times must be >= 1")
    z = torch.randn(y.shape, generator=generator, dtype=y.dtype)
    v_star = target_field(z, y)
    terms = []
    for _ in range(k_times):
        t = torch.rand(y.shape[0], generator=generator, dtype=y.dtype)
        x_t = interpolate(z, y, t)
        v = model(x_t, t, c)
        terms.append(((v - v_star) ** 2).sum(dim=(-2, -1)))
    return torch.stack(terms).mean()


class EmaState:
    """Shadow copy of model parameters, geometrically averaged."""

    def __init__(self, model: nn.Module, decay: float = 0.995):
        self.decay = decay
        self.shadow = {k: v.detach().clone() for k, v in model.state_dict().items()}

    @torch.no_grad()
    def update(self, model: nn.Module) -> None:
        for k, v in model.state_dict().items():
            if v.dtype.is_floating_point:
                self.shadow[k].mul_(self.decay).add_(v.detach(), alpha=1.0 - self.decay)
            else:
                self.shadow[k] = v.detach().clone()

    def ema_model(self, model: nn.Module) -> nn.Module:
        out = copy.deepcopy(model)
        out.load_state_dict(self.shadow)
        out.eval()
        return out


def euler_sample(
    c: torch.Tensor,
    model,
    sampler: SamplerConfig | int,
    generator: torch.Generator | None = None,
    x0: torch.Tensor | None = None,
) -> torch.Tensor:
    """Explicit Euler integration of the learned field from noise to latent."""
    if isinstance(sampler, int):
        sampler = SamplerConfig(sampler)
    c = torch.as_tensor(c)
    if x0 is None:
        x0 = torch.randn(c.shape, generator=generator, dtype=c.dtype)
    x = torch.as_tensor(x0)
    with torch.no_grad():
        for k in range(sampler.T):
            x = x + sampler.dt * torch.as_tensor(model(x, k * sampler.dt, c))
    return x


def train_stage2(
    dataset,
    stage1: Stage1Model,
    cfg: FlowConfig,
    log_every: int = 0,
) -> tuple[FlowField, EmaState, np.ndarray]:
    """Adam with gradient clipping and periodic EMA updates; stage 1 stays frozen."""
    from .stage1 import dataset_tensors

    ppg, ecg = dataset_tensors(dataset)
    stage1.eval()
    gen_enc = torch_generator(cfg.seed + 2) if cfg.use_sampled_latents else None
    c_all = encode_latents(stage1, ppg, sampled=cfg.use_sampled_latents, generator=gen_enc)
    y_all = encode_latents(stage1, ecg, sampled=cfg.use_sampled_latents, generator=gen_enc)

    torch.manual_seed(cfg.seed)
    flow = FlowField(cfg)
    ema = EmaState(flow, cfg.ema_decay)
    gen = torch_generator(cfg.seed + 1)
    opt = torch.optim.Adam(flow.parameters(), lr=cfg.lr)
    history = np.zeros(cfg.iters)
    n = c_all.shape[0]
    flow.train()
    for step in range(cfg.iters):
        idx = torch.randint(0, n, (min(cfg.batch, n),), generator=gen)
        loss = loss_stage2(y_all[idx], c_all[idx], flow, cfg.k_times, gen)
        if not torch.isfinite(loss):
            raise TrainingError(step)
        opt.zero_grad()
        loss.backward()
        nn.utils.clip_grad_norm_(flow.parameters(), cfg.clip_norm)
        opt.step()
        if (step + 1) % cfg.ema_every == 0:
            ema.update(flow)
        history[step] = float(loss)
        if log_every and step % log_every == 0:
            print(f"stage2 step {step}: loss {history[step]:.4f}")
    flow.eval()
    return flow, ema, history


def translate(
    x_ppg,
    stage1: Stage1Model,
    flow: nn.Module,
    sampler: SamplerConfig | int = 10,
    generator: torch.Generator | None = None,
) -> np.ndarray:
    """PPG segment(s) -> synthesized ECG segment(s) via the latent flow."""
    x = np.asarray(x_ppg, dtype=np.float32)
    single = x.ndim == 1
    c = encode_latents(stage1, x)
    z_hat = euler_sample(c, flow, sampler, generator)
    with torch.no_grad():
        out = stage1.decode(z_hat, ECG).numpy().astype(np.float64)
    return out[0] if single else out


def save_stage2(path, flow: FlowField, ema: EmaState, seed: int = 0, iteration: int = 0) -> None:
    from dataclasses import asdict

    from .checkpoint import write_pfe1

    tensors = {k: v.detach().cpu().numpy() for k, v in flow.state_dict().items()}
    for k, v in ema.shadow.items():
        tensors[f"ema.{k}"] = v.detach().cpu().numpy()
    meta = {"stage": 2, "config": asdict(flow.cfg), "seed": seed, "iter": iteration}
    write_pfe1(path, tensors, meta)


def load_stage2(path) -> tuple[FlowField, EmaState]:
    from .checkpoint import read_pfe1, require_stage

    tensors, meta = read_pfe1(path)
    require_stage(meta, 2, path)
    cfg = FlowConfig(**meta["config"])
    flow = FlowField(cfg)
    raw = {k: torch.from_numpy(v.copy()) for k, v in tensors.items() if not k.startswith("ema.")}
    flow.load_state_dict(raw)
    flow.eval()
    ema = EmaState(flow, cfg.ema_decay)
    for k, v in tensors.items():
        if k.startswith("ema."):
            ema.shadow[k[4:]] = torch.from_numpy(v.copy())
    return flow, ema
