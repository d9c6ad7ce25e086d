"""Intention head, CVAE pieces, and the Best / Prob sampling strategies."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as nnf
from torch import nn

from .config import ConfigError, RunConfig
from .raster import decode_separable
from .relnet import RelationalEncoder

LOGVAR_BOUND = 10.0


class IntentionHead(nn.Module):
    def __init__(self, edge: int, hidden: int, G: int):
        super().__init__()
        self.lin1 = nn.Linear(edge, hidden)
        self.lin2 = nn.Linear(hidden, G)

    def forward(self, F: torch.Tensor) -> torch.Tensor:
        """Logits over the G goal zones."""
        return self.lin2(torch.relu(self.lin1(F)))


def estimate_intention(F: torch.Tensor, head: IntentionHead) -> torch.Tensor:
    return torch.softmax(head(F), dim=-1)


class PosteriorEncoder(nn.Module):
    """Q(z | H, c): sum-pooled target heatmaps through two strided convs."""

    POOL = 4

    def __init__(self, delta: int, H: int, W: int, cond: int, latent: int,
                 channels: int = 16, hidden: int = 64):
        super().__init__()
        self.delta, self.H, self.W, self.cond = delta, H, W, cond
        self.conv1 = nn.Conv2d(delta, channels, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, stride=2, padding=1)
        h, w = H // self.POOL, W // self.POOL
        for _ in range(2):
            h, w = (h + 1) // 2, (w + 1) // 2
        self.lin1 = nn.Linear(channels * h * w + cond, hidden)
        self.lin2 = nn.Linear(hidden, 2 * latent)
        self.latent = latent

    def forward(self, heatmaps: torch.Tensor, c: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if heatmaps.shape[1:] != (self.delta, self.H, self.W) or c.shape[-1] != self.cond:
            raise ConfigError(f"posterior input mismatch: heatmaps {tuple(heatmaps.shape)}, "
                              f"condition {tuple(c.shape)}")
        return self.forward_pooled(nnf.avg_pool2d(heatmaps, self.POOL) * (self.POOL ** 2), c)

    def forward_pooled(self, x: torch.Tensor, c: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Same as ``forward`` on heatmaps already sum-pooled by ``POOL``."""
        x = torch.relu(self.conv1(x))
        x = torch.relu(self.conv2(x))
        h = torch.relu(self.lin1(torch.cat([x.flatten(1), c], dim=-1)))
        out = self.lin2(h)
        mu, raw = out[..., :self.latent], out[..., self.latent:]
        # smooth clamp keeps gradients alive near the bound
        return mu, LOGVAR_BOUND * torch.tanh(raw / LOGVAR_BOUND)


def posterior_encode(heatmaps, c, encoder: PosteriorEncoder):
    return encoder(heatmaps, c)


def sample_posterior(mu: torch.Tensor, logvar: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
    if noise.shape != mu.shape:
        raise ValueError(f"noise shape {tuple(noise.shape)} != latent shape {tuple(mu.shape)}")
    return mu + torch.exp(0.5 * logvar) * noise


class HeatmapDecoder(nn.Module):
    """Trajectory predictor emitting per-step log-likelihood grids.

    Each step is rendered as a Gaussian kernel whose center is offset from the
    last observed position, normalized by a pixel softmax. The kernel is
    separable, so the log-softmax factorizes over rows and columns.

    The kernel parameters are ``base(c) + (h(u, c) - h(-u, c)) / 2``: odd in
    the masked latent ``u``, so averaging over z ~ N(0, I) and setting z = 0
    give the same parameters, and z = 0 decodes the prior mode.
    """

    OFFSET_SCALE = 10.0

    def __init__(self, in_dim: int, delta: int, H: int, W: int, res: float, hidden: int = 64,
                 cond: int | None = None):
        super().__init__()
        self.delta, self.H, self.W, self.res = delta, H, W, res
        self.cond = in_dim if cond is None else cond
        self.base = nn.Sequential(
            nn.Linear(self.cond, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, 3 * delta),
        )
        self.odd = nn.Sequential(
            nn.Linear(in_dim, hidden), nn.ReLU(),
            nn.Linear(hidden, 3 * delta),
        ) if in_dim > self.cond else None
        self.register_buffer("xs", (torch.arange(W, dtype=torch.float32) + 0.5) * res, persistent=False)
        self.register_buffer("ys", (torch.arange(H, dtype=torch.float32) + 0.5) * res, persistent=False)

    def raw(self, inp: torch.Tensor) -> torch.Tensor:
        k = inp.shape[-1] - self.cond
        c = inp[..., k:]
        out = self.base(c)
        if self.odd is not None:
            u = inp[..., :k]
            out = out + 0.5 * (self.odd(inp) - self.odd(torch.cat([-u, c], dim=-1)))
        return out

    def prior(self, past: torch.Tensor) -> torch.Tensor:
        """Constant-velocity centers (..., delta, 2) from the past track."""
        last = past[..., -1, :]
        if past.shape[-2] < 2:
            return last.unsqueeze(-2).expand(*last.shape[:-1], self.delta, 2)
        v = last - past[..., -2, :]
        k = torch.arange(1, self.delta + 1, dtype=past.dtype).unsqueeze(-1)
        return last.unsqueeze(-2) + k * v.unsqueeze(-2)

    def params(self, inp: torch.Tensor, past: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Kernel centers as a residual on constant velocity, and kernel widths."""
        out = self.raw(inp).view(*inp.shape[:-1], self.delta, 3)
        center = self.prior(past) + self.OFFSET_SCALE * out[..., :2]
        scale = self.res * (0.5 + nnf.softplus(out[..., 2] + 1.0))
        return center, scale

    def log_factors(self, u: torch.Tensor, past: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Row and column log-marginals, (..., delta, H) and (..., delta, W)."""
        center, scale = self.params(u, past)
        xs, ys = self.xs.to(u.dtype), self.ys.to(u.dtype)
        inv = 1.0 / (2 * scale.unsqueeze(-1) ** 2)
        lx = -((xs - center[..., 0:1]) ** 2) * inv
        ly = -((ys - center[..., 1:2]) ** 2) * inv
        return ly - torch.logsumexp(ly, dim=-1, keepdim=True), lx - torch.logsumexp(lx, dim=-1, keepdim=True)

    def log_probs(self, u: torch.Tensor, past: torch.Tensor) -> torch.Tensor:
        ly, lx = self.log_factors(u, past)
        return ly.unsqueeze(-1) + lx.unsqueeze(-2)  # (..., delta, H, W)


@dataclass
class Observation:
    """One target in one scene, as tensors in the local frame."""

    frames: torch.Tensor  # (tau, H, W, 3)
    map: torch.Tensor  # (H, W, 1)
    past: torch.Tensor  # (tau, 2)


class GoalConditionedPredictor(nn.Module):
    """Relational encoder + intention head + CVAE decoder.

    With ``no_intention`` the intention head and posterior encoder are dropped
    and the decoder maps (F, q) to one deterministic sequence.
    """

    def __init__(self, cfg: RunConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = RelationalEncoder(cfg)
        with torch.no_grad():
            # F sums 600 messages; keep its initial scale near unit
            self.encoder.theta.lin2.weight.mul_(1.0 / math.sqrt(600))
            self.encoder.theta.lin2.bias.mul_(1.0 / math.sqrt(600))
        self.generative = not cfg.no_intention
        if self.generative:
            cond = cfg.m + cfg.G
            self.intention = IntentionHead(cfg.edge, cfg.hidden, cfg.G)
            self.posterior = PosteriorEncoder(cfg.delta, cfg.H, cfg.W, cond, cfg.latent,
                                              channels=cfg.conv, hidden=cfg.hidden)
            self.project = nn.Linear(cfg.latent, cfg.edge, bias=False)
        else:
            cond = cfg.m
        # the non-generative decoder reads (F, q) directly through its base net
        base_in = cond if self.generative else cfg.edge + cond
        self.decoder = HeatmapDecoder(cfg.edge + cond, cfg.delta, cfg.H, cfg.W, cfg.res, cfg.hidden,
                                      cond=base_in)

    @property
    def use_map(self) -> bool:
        return not self.cfg.no_map

    def condition(self, q: torch.Tensor, goal: torch.Tensor | None) -> torch.Tensor:
        if not self.generative:
            return q
        return torch.cat([q, nnf.one_hot(goal - 1, self.cfg.G).to(q.dtype)], dim=-1)

    def encode(self, frames, map_, past):
        r = self.encoder.scene_edges(frames, map_ if self.use_map else None)
        return self.encoder.target_feature(r, past)

    def intention_logits(self, F: torch.Tensor) -> torch.Tensor:
        if not self.generative:
            raise RuntimeError("model was built without an intention estimator")
        return self.intention(F)

    def _decoder_input(self, z, F, c) -> torch.Tensor:
        if not self.generative:
            return torch.cat([F, c], dim=-1)
        return torch.cat([self.project(z) * F, c], dim=-1)

    def decode_log_probs(self, z, F, c, past) -> torch.Tensor:
        return self.decoder.log_probs(self._decoder_input(z, F, c), past)

    def decode_log_factors(self, z, F, c, past):
        return self.decoder.log_factors(self._decoder_input(z, F, c), past)


def predict_heatmaps(z, F, c, past, model: GoalConditionedPredictor) -> torch.Tensor:
    """Normalized (..., delta, H, W) likelihood grids."""
    return model.decode_log_probs(z, F, c, past).exp()


def apportion(probs, S: int) -> np.ndarray:
    """Largest-remainder split of S samples over zones; ties go to the lower zone."""
    p = np.asarray(probs, dtype=float)
    quota = S * p / p.sum()
    counts = np.floor(quota + 1e-9).astype(int)
    rem = quota - counts
    left = S - counts.sum()
    order = sorted(range(len(p)), key=lambda k: (-round(rem[k], 12), k))
    for k in order[:left]:
        counts[k] += 1
    return counts


@dataclass
class Sample:
    """One predicted heatmap sequence, kept as separable log factors."""

    log_rows: torch.Tensor  # (delta, H)
    log_cols: torch.Tensor  # (delta, W)
    zone: int  # conditioning zone, 0 for a non-generative model

    @property
    def heatmaps(self) -> torch.Tensor:
        return (self.log_rows.unsqueeze(-1) + self.log_cols.unsqueeze(-2)).exp()

    def points(self, res: float, origin=(0.0, 0.0)) -> np.ndarray:
        return decode_separable(self.log_rows.numpy(), self.log_cols.numpy(), origin, res)


@torch.no_grad()
def generate(model: GoalConditionedPredictor, obs: Observation, strategy: str = "prob",
             S: int = 20, seed: int = 0, probs: torch.Tensor | None = None,
             force_zero: bool = False) -> list[Sample]:
    """S heatmap sequences with their conditioning zone.

    ``best`` conditions every sample on the argmax zone; ``prob`` splits the
    samples by largest-remainder apportionment of S * S_g. Latents are drawn
    from N(0, I) in sample order, so equal allocations give equal outputs.
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    F, q = model.encode(obs.frames[None], obs.map[None], obs.past[None])
    past = obs.past[None]
    if not model.generative:
        c = model.condition(q, None)
        ly, lx = model.decode_log_factors(None, F, c, past)
        return [Sample(ly[0], lx[0], 0) for _ in range(S)]
    if probs is None:
        probs = torch.softmax(model.intention_logits(F), dim=-1)[0]
    p = probs.detach().cpu().numpy().astype(float)
    if strategy == "best":
        counts = np.zeros(len(p), dtype=int)
        counts[int(np.argmax(p))] = S
    elif strategy == "prob":
        counts = apportion(p, S)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    zones = np.repeat(np.arange(1, len(p) + 1), counts)
    gen = torch.Generator().manual_seed(int(seed))
    z = torch.randn(S, model.cfg.latent, generator=gen).to(F.dtype)
    if force_zero:
        z.zero_()
    goal = torch.as_tensor(zones, dtype=torch.long)
    c = model.condition(q.expand(S, -1), goal)
    ly, lx = model.decode_log_factors(z, F.expand(S, -1), c, past.expand(S, -1, -1))
    return [Sample(ly[s], lx[s], int(zones[s])) for s in range(S)]


@torch.no_grad()
def single_modal_predict(model: GoalConditionedPredictor, obs: Observation) -> Sample:
    """Argmax intention with z = 0."""
    return generate(model, obs, strategy="best", S=1, force_zero=True)[0]
