"""Displacement metrics, intention mAP, penetration audit, Const-Vel baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import average_precision_score

HORIZONS = (10, 20, 30, 40)  # frames at 10 Hz -> 1, 2, 3, 4 s


def _dist(pred, truth) -> np.ndarray:
    pred, truth = np.asarray(pred, float), np.asarray(truth, float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return np.linalg.norm(pred - truth, axis=-1)


def _check_horizon(h: int, delta: int) -> None:
    if h < 1:
        raise ValueError("horizon must be >= 1")
    if h > delta:
        raise ValueError(f"horizon {h} exceeds the {delta} predicted steps")


def ade(pred, truth, horizon: int | None = None) -> float:
    d = _dist(pred, truth)
    h = len(d) if horizon is None else horizon
    _check_horizon(h, len(d))
    return float(d[:h].mean())


def fde(pred, truth, horizon: int | None = None) -> float:
    d = _dist(pred, truth)
    h = len(d) if horizon is None else horizon
    _check_horizon(h, len(d))
    return float(d[h - 1])


def min_ade_over_samples(samples, truth, horizon: int | None = None) -> tuple[float, int]:
    """Smallest ADE over samples and the (first) index attaining it."""
    samples = np.asarray(samples, float)
    if samples.ndim != 3 or len(samples) < 1:
        raise ValueError("samples must be (S >= 1, delta, 2)")
    scores = np.array([ade(s, truth, horizon) for s in samples])
    k = int(np.argmin(scores))
    return float(scores[k]), k


def min_fde_over_samples(samples, truth, horizon: int | None = None) -> tuple[float, int]:
    scores = np.array([fde(s, truth, horizon) for s in np.asarray(samples, float)])
    k = int(np.argmin(scores))
    return float(scores[k]), k


def intention_map(dists, truths) -> float:
    """Macro average precision over the zones present in ``truths`` (1-based)."""
    scores = np.asarray(dists, float)
    truths = np.asarray(truths, int)
    if scores.ndim != 2 or len(scores) == 0 or len(scores) != len(truths):
        raise ValueError("need a nonempty (N, G) score matrix matching N truths")
    aps = [average_precision_score(truths == g, scores[:, g - 1]) for g in np.unique(truths)]
    return float(np.mean(aps))


def intention_accuracy(dists, truths) -> float:
    scores = np.asarray(dists, float)
    return float(np.mean(np.argmax(scores, axis=1) + 1 == np.asarray(truths, int)))


def penetration_rate(trajectories, D, origin=(0.0, 0.0), res: float = 0.5) -> float:
    """Fraction of points whose cell is non-drivable (D == 1).

    Points outside the grid count as non-drivable.
    """
    pts = np.asarray(trajectories, float).reshape(-1, 2)
    if len(pts) == 0:
        return 0.0
    H, W = np.asarray(D).shape
    col = np.floor((pts[:, 0] - origin[0]) / res).astype(int)
    row = np.floor((pts[:, 1] - origin[1]) / res).astype(int)
    inside = (row >= 0) & (row < H) & (col >= 0) & (col < W)
    off = np.ones(len(pts), dtype=bool)
    off[inside] = np.asarray(D)[row[inside], col[inside]] == 1
    return float(off.mean())


def const_vel_predict(past, delta: int) -> np.ndarray:
    """Extrapolate the last observed per-frame displacement for ``delta`` steps."""
    past = np.asarray(past, float)
    if len(past) < 2:
        raise ValueError("constant velocity needs at least two observations")
    v = past[-1] - past[-2]
    return past[-1] + np.arange(1, delta + 1)[:, None] * v


@dataclass
class EvalReport:
    protocol: str  # "single" or "multi"
    S: int
    ade: dict[int, float] = field(default_factory=dict)  # horizon frames -> m
    fde: dict[int, float] = field(default_factory=dict)
    intention_map: float | None = None
    intention_accuracy: float | None = None
    penetration_rate: float = 0.0
    count: int = 0
    fps: int = 10

    def table(self) -> str:
        head = "protocol".ljust(12) + "".join(f"{h / self.fps:.1f} s".rjust(16) for h in sorted(self.ade))
        label = self.protocol if self.protocol == "single" else f"multi-{self.S}"
        row = label.ljust(12) + "".join(
            f"{self.ade[h]:.2f} / {self.fde[h]:.2f}".rjust(16) for h in sorted(self.ade))
        lines = [head, row, f"penetration_rate {self.penetration_rate:.4f}", f"count {self.count}"]
        if self.intention_map is not None:
            lines.append(f"intention_map {self.intention_map:.4f}")
            lines.append(f"intention_accuracy {self.intention_accuracy:.4f}")
        return "\n".join(lines)

    def records(self) -> str:
        """Machine-readable ``key = value`` lines."""
        out = [f"protocol = {self.protocol}", f"S = {self.S}", f"count = {self.count}"]
        for h in sorted(self.ade):
            out.append(f"ade_{h / self.fps:g}s = {self.ade[h]:.2f}")
            out.append(f"fde_{h / self.fps:g}s = {self.fde[h]:.2f}")
        out.append(f"penetration_rate = {self.penetration_rate:.6f}")
        if self.intention_map is not None:
            out.append(f"intention_map = {self.intention_map:.6f}")
            out.append(f"intention_accuracy = {self.intention_accuracy:.6f}")
        return "\n".join(out) + "\n"


def summarize(pred_sets, truths, protocol: str, S: int, horizons=HORIZONS,
              fde_from_min_ade: bool = True) -> tuple[dict, dict]:
    """Mean ADE/FDE per horizon over agents.

    ``pred_sets`` is a list of (S_k, delta, 2) arrays. Under the multi-sample
    protocol FDE comes from the min-ADE sample unless ``fde_from_min_ade`` is
    False, in which case the independent min-FDE is used.
    """
    ades = {h: [] for h in horizons}
    fdes = {h: [] for h in horizons}
    for preds, truth in zip(pred_sets, truths):
        preds = np.asarray(preds, float)
        for h in horizons:
            a, k = min_ade_over_samples(preds, truth, h)
            ades[h].append(a)
            if fde_from_min_ade:
                fdes[h].append(fde(preds[k], truth, h))
            else:
                fdes[h].append(min_fde_over_samples(preds, truth, h)[0])
    return ({h: float(np.mean(v)) for h, v in ades.items()},
            {h: float(np.mean(v)) for h, v in fdes.items()})
