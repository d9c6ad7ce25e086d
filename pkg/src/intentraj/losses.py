"""Training objectives: ELBO terms, intention cross-entropy, and penalties.

All functions take torch tensors (or anything ``torch.as_tensor`` accepts)
and reduce over the trailing axes, keeping leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import torch

LOG_FLOOR = 1e-12


class TrainingAbort(RuntimeError):
    def __init__(self, term: str, step: int | None = None):
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite loss term {term!r}{where}")
        self.term = term
        self.step = step


def _t(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(x, dtype=torch.float64)


def kl_unit_gaussian(mu, logvar) -> torch.Tensor:
    """KL(N(mu, diag(exp(logvar))) || N(0, I)), summed over the last axis."""
    mu, logvar = _t(mu), _t(logvar)
    return 0.5 * (logvar.exp() + mu ** 2 - 1.0 - logvar).sum(-1)


def recon_loglik(predicted, target) -> torch.Tensor:
    """sum_t sum_j target * log(predicted + 1e-12) over (delta, H, W)."""
    predicted, target = _t(predicted), _t(target)
    if predicted.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(predicted.shape)} vs {tuple(target.shape)}")
    return (target * torch.log(predicted + LOG_FLOOR)).sum(dim=(-3, -2, -1))


def recon_loglik_from_log_probs(log_predicted, target) -> torch.Tensor:
    """Same quantity as ``recon_loglik`` computed from log-likelihood grids.

    Used in training: far-off predictions underflow to zero in probability
    space, which would flatten the gradient at the log floor.
    """
    if log_predicted.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(log_predicted.shape)} vs {tuple(target.shape)}")
    return (target * log_predicted).sum(dim=(-3, -2, -1))


def intention_ce(probs, true_g) -> torch.Tensor:
    """-log S_g for the true zone (1-based)."""
    probs = _t(probs)
    G = probs.shape[-1]
    g = torch.as_tensor(true_g, dtype=torch.long)
    if torch.any(g < 1) or torch.any(g > G):
        raise ValueError(f"zone ids must lie in 1..{G}")
    p = probs.gather(-1, (g - 1).unsqueeze(-1)).squeeze(-1)
    return -torch.log(torch.clamp(p, min=LOG_FLOOR))


def intention_ce_from_logits(logits, true_g) -> torch.Tensor:
    g = torch.as_tensor(true_g, dtype=torch.long)
    return -torch.log_softmax(logits, dim=-1).gather(-1, (g - 1).unsqueeze(-1)).squeeze(-1)


def default_threshold(shape) -> float:
    """Half the uniform per-pixel likelihood, 1 / (2J)."""
    H, W = shape[-2], shape[-1]
    return 1.0 / (2.0 * H * W)


def penetration(predicted, D, eps_b: float | None = None, hard: bool = True) -> torch.Tensor:
    """(1/delta) sum_t sum_j D_j * B(H_tj).

    ``hard`` uses the step threshold; otherwise a sigmoid with scale eps_b,
    shifted so that zero likelihood contributes zero.
    """
    predicted, D = _t(predicted), _t(D).to(_t(predicted).dtype)
    eps = default_threshold(predicted.shape) if eps_b is None else eps_b
    if hard:
        b = (predicted > eps).to(predicted.dtype)
    else:
        b = torch.sigmoid((predicted - eps) / eps) - torch.sigmoid(torch.tensor(-1.0, dtype=predicted.dtype))
    delta = predicted.shape[-3]
    return (D * b).sum(dim=(-3, -2, -1)) / delta


def range_penalty(a, x, b) -> torch.Tensor:
    a, x, b = _t(a), _t(x), _t(b)
    lo, hi = torch.minimum(a, b), torch.maximum(a, b)
    return torch.clamp(lo - x, min=0.0) + torch.clamp(x - hi, min=0.0)


def inconsistency(v) -> torch.Tensor:
    """Mean range penalty of each interior speed against its neighbours.

    ``v`` holds delta + 1 speeds for t0 .. t0+delta.
    """
    v = _t(v)
    delta = v.shape[-1] - 1
    if delta < 2:
        raise ValueError("inconsistency needs delta >= 2")
    return range_penalty(v[..., :-2], v[..., 1:-1], v[..., 2:]).sum(-1) / (delta - 1)


def dispersion(d) -> torch.Tensor:
    """Population variance of the per-step errors."""
    d = _t(d)
    if d.shape[-1] < 1:
        raise ValueError("dispersion needs delta >= 1")
    return ((d - d.mean(-1, keepdim=True)) ** 2).mean(-1)


def _norm(v: torch.Tensor) -> torch.Tensor:
    # sqrt with a floor keeps the gradient finite for coincident points
    return torch.sqrt((v ** 2).sum(-1) + LOG_FLOOR)


def velocities_from_points(last, points, previous=None) -> torch.Tensor:
    """Per-frame speeds |Y_{t0+1} - X_t0|, |Y_{t0+2} - Y_{t0+1}|, ...

    With ``previous`` (the observation before ``last``) the observed speed
    |X_t0 - X_{t0-1}| is prepended, giving the delta + 1 series that
    ``inconsistency`` expects.
    """
    last, points = _t(last), _t(points)
    seq = torch.cat([last.unsqueeze(-2), points], dim=-2)
    if previous is not None:
        seq = torch.cat([_t(previous).unsqueeze(-2), seq], dim=-2)
    step = seq[..., 1:, :] - seq[..., :-1, :]
    if step.requires_grad:
        return _norm(step)
    return torch.linalg.vector_norm(step, dim=-1)


def distance_errors(pred_points, true_points) -> torch.Tensor:
    diff = _t(pred_points) - _t(true_points)
    return _norm(diff) if diff.requires_grad else torch.linalg.vector_norm(diff, dim=-1)


def soft_argmax(probs: torch.Tensor, res: float, origin=(0.0, 0.0)) -> torch.Tensor:
    """Probability-weighted cell-center coordinates, (..., delta, 2)."""
    H, W = probs.shape[-2:]
    xs = origin[0] + (torch.arange(W, dtype=probs.dtype) + 0.5) * res
    ys = origin[1] + (torch.arange(H, dtype=probs.dtype) + 0.5) * res
    px = (probs.sum(-2) * xs).sum(-1)
    py = (probs.sum(-1) * ys).sum(-1)
    return torch.stack([px, py], dim=-1)


@dataclass
class LossBreakdown:
    elbo_recon: torch.Tensor
    kl: torch.Tensor
    ce: torch.Tensor
    penetration: torch.Tensor
    inconsistency: torch.Tensor
    dispersion: torch.Tensor
    weights: tuple[float, float, float] = (1.0, 0.1, 0.01)
    total: torch.Tensor | None = None

    TERMS = ("elbo_recon", "kl", "ce", "penetration", "inconsistency", "dispersion")

    def log_line(self, step: int, ms: float) -> str:
        parts = [f"step={step}"]
        for name in self.TERMS + ("total",):
            val = getattr(self, name)
            parts.append(f"{name}={float(_t(val).detach()):.6g}")
        parts.append(f"ms={ms:.0f}")
        return " ".join(parts)


def total_loss(parts: LossBreakdown | dict, zeta: float = 1.0, eta: float = 0.1, mu: float = 0.01,
               step: int | None = None) -> torch.Tensor:
    """(kl - recon) + ce + zeta * pen + eta * incon + mu * disp."""
    if isinstance(parts, LossBreakdown):
        vals = {f.name: getattr(parts, f.name) for f in fields(parts)}
    else:
        vals = dict(parts)
    for name in LossBreakdown.TERMS:
        if not torch.all(torch.isfinite(_t(vals[name]))):
            raise TrainingAbort(name, step)
    out = (_t(vals["kl"]) - _t(vals["elbo_recon"])) + _t(vals["ce"]) \
        + zeta * _t(vals["penetration"]) + eta * _t(vals["inconsistency"]) \
        + mu * _t(vals["dispersion"])
    if isinstance(parts, LossBreakdown):
        parts.total = out
        parts.weights = (zeta, eta, mu)
    return out
