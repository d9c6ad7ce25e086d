"""Relational encoding: grid nodes, pairwise edges, per-target aggregation."""

from __future__ import annotations

from itertools import permutations

import torch
import torch.nn.functional as nnf
from torch import nn

from .config import ConfigError, RunConfig

GRID_SIDE = 5


def pair_index(n: int = GRID_SIDE * GRID_SIDE) -> tuple[torch.Tensor, torch.Tensor]:
    """All ordered pairs (i, j) with i != j, in lexicographic order."""
    ij = torch.tensor(list(permutations(range(n), 2)), dtype=torch.long)
    return ij[:, 0], ij[:, 1]


def stack_channels(frames: torch.Tensor, map_: torch.Tensor | None = None) -> torch.Tensor:
    """(B, tau, H, W, 3) frames and (B, H, W, 1) map -> (B, 3 tau + 1, H, W)."""
    B, tau, H, W, _ = frames.shape
    x = frames.permute(0, 1, 4, 2, 3).reshape(B, 3 * tau, H, W)
    m = x.new_zeros(B, 1, H, W) if map_ is None else map_.permute(0, 3, 1, 2)
    return torch.cat([x, m], dim=1)


class NodeExtractor(nn.Module):
    """Strided conv stack pooled onto a 5x5 grid of d-dimensional nodes.

    Input channels are the tau frames (3 channels each) plus one map channel;
    a withheld map is fed as zeros.
    """

    def __init__(self, tau: int, d: int, H: int, W: int, hidden: int = 16, bias: bool = True):
        super().__init__()
        self.tau, self.H, self.W = tau, H, W
        self.conv1 = nn.Conv2d(3 * tau + 1, hidden, 3, stride=2, padding=1, bias=bias)
        self.conv2 = nn.Conv2d(hidden, d, 3, stride=2, padding=1, bias=bias)

    def forward(self, frames: torch.Tensor, map_: torch.Tensor | None = None) -> torch.Tensor:
        # frames (B, tau, H, W, 3); map (B, H, W, 1)
        if frames.dim() != 5 or frames.shape[1:] != (self.tau, self.H, self.W, 3):
            raise ConfigError(f"expected frames (B, {self.tau}, {self.H}, {self.W}, 3), "
                              f"got {tuple(frames.shape)}")
        return self.from_channels(stack_channels(frames, map_))

    def from_channels(self, x: torch.Tensor) -> torch.Tensor:
        """Nodes from a packed (B, 3 tau + 1, H, W) input, see ``stack_channels``."""
        h = torch.relu(self.conv1(x))
        h = torch.relu(self.conv2(h))
        h = nnf.adaptive_avg_pool2d(h, GRID_SIDE)
        return h.flatten(2).transpose(1, 2)  # (B, 25, d), row-major


class EdgePhi(nn.Module):
    def __init__(self, d: int, edge: int):
        super().__init__()
        self.lin1 = nn.Linear(2 * d, edge)
        self.lin2 = nn.Linear(edge, edge)

    def forward(self, vij: torch.Tensor) -> torch.Tensor:
        return torch.relu(self.lin2(torch.relu(self.lin1(vij))))


class EdgeTheta(nn.Module):
    def __init__(self, edge: int, m: int):
        super().__init__()
        self.lin1 = nn.Linear(edge + m, edge)
        self.lin2 = nn.Linear(edge, edge)

    def forward(self, r: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
        # r (..., P, edge), q (..., m) broadcast over pairs
        qb = q.unsqueeze(-2).expand(*r.shape[:-1], q.shape[-1])
        return self.lin2(torch.relu(self.lin1(torch.cat([r, qb], dim=-1))))


class MotionEncoder(nn.Module):
    """GRU over normalized past positions and per-frame displacements."""

    def __init__(self, tau: int, m: int, anchor: tuple[float, float], scale: float):
        super().__init__()
        self.tau = tau
        self.gru = nn.GRU(4, m, batch_first=True)
        self.register_buffer("anchor", torch.tensor(anchor, dtype=torch.float32))
        self.scale = float(scale)

    def forward(self, past: torch.Tensor) -> torch.Tensor:
        if past.shape[-2] != self.tau:
            raise ValueError(f"expected {self.tau} past positions, got {past.shape[-2]}")
        pos = (past - self.anchor.to(past.dtype)) / self.scale
        step = torch.diff(past, dim=-2, prepend=past[..., :1, :])
        _, h = self.gru(torch.cat([pos, step], dim=-1))
        return h[-1]


def extract_nodes(frames, map_, extractor: NodeExtractor) -> torch.Tensor:
    return extractor(frames, map_)


def edge_phi(v_i: torch.Tensor, v_j: torch.Tensor, phi: EdgePhi) -> torch.Tensor:
    return phi(torch.cat([v_i, v_j], dim=-1))


def edge_theta(r_ij: torch.Tensor, q: torch.Tensor, theta: EdgeTheta) -> torch.Tensor:
    return theta(r_ij, q)


def aggregate(messages: torch.Tensor) -> torch.Tensor:
    """Element-wise sum over the pair axis (second to last)."""
    return messages.sum(dim=-2)


def encode_motion(past: torch.Tensor, encoder: MotionEncoder) -> torch.Tensor:
    return encoder(past)


class RelationalEncoder(nn.Module):
    def __init__(self, cfg: RunConfig):
        super().__init__()
        self.nodes = NodeExtractor(cfg.tau, cfg.d, cfg.H, cfg.W, hidden=cfg.conv)
        self.phi = EdgePhi(cfg.d, cfg.edge)
        self.theta = EdgeTheta(cfg.edge, cfg.m)
        anchor = (0.25 * cfg.W * cfg.res, 0.5 * cfg.H * cfg.res)
        self.motion = MotionEncoder(cfg.tau, cfg.m, anchor, scale=0.5 * cfg.W * cfg.res)
        i, j = pair_index()
        self.register_buffer("pair_i", i, persistent=False)
        self.register_buffer("pair_j", j, persistent=False)

    def scene_edges(self, frames, map_=None) -> torch.Tensor:
        """Relational edges r_ij (B, 600, edge); shared by every target in a scene."""
        v = self.nodes(frames, map_)
        return edge_phi(v[:, self.pair_i], v[:, self.pair_j], self.phi)

    def scene_edges_packed(self, x: torch.Tensor) -> torch.Tensor:
        v = self.nodes.from_channels(x)
        return edge_phi(v[:, self.pair_i], v[:, self.pair_j], self.phi)

    def target_feature(self, r: torch.Tensor, past: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        q = self.motion(past)
        return aggregate(self.theta(r, q)), q

    def forward(self, frames, map_, past):
        return self.target_feature(self.scene_edges(frames, map_), past)
