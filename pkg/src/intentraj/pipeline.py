"""Training loop and held-out evaluation around the predictor."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt_io
from . import data as data_io
from . import evalkit
from . import losses as L
from .config import ConfigError, RunConfig
from .predictor import GoalConditionedPredictor, Observation, generate
from .relnet import stack_channels


@dataclass
class Batchable:
    """All (scene, target) pairs of a scene list as stacked tensors."""

    inputs: torch.Tensor  # (U, 3 tau + 1, H, W) packed frames + map
    D: torch.Tensor  # (U, H, W)
    scene: torch.Tensor  # (N,) index into the scene axis
    past: torch.Tensor  # (N, tau, 2)
    future: torch.Tensor  # (N, delta, 2)
    rows: torch.Tensor  # (N, delta, H)
    cols: torch.Tensor  # (N, delta, W)
    goal: torch.Tensor  # (N,)
    maneuver: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.scene)

    @classmethod
    def from_scenes(cls, scenes) -> "Batchable":
        f32 = lambda a: torch.from_numpy(np.ascontiguousarray(a, dtype=np.float32))
        tg = [(k, t) for k, s in enumerate(scenes) for t in s.targets]
        if not tg:
            raise ValueError("no targets in the given scenes")
        frames = f32(np.stack([s.frames for s in scenes]))
        maps = f32(np.stack([s.map for s in scenes]))
        return cls(
            inputs=stack_channels(frames, maps).contiguous(),
            D=f32(np.stack([s.D for s in scenes])),
            scene=torch.tensor([k for k, _ in tg]),
            past=f32(np.stack([t.past for _, t in tg])),
            future=f32(np.stack([t.future for _, t in tg])),
            rows=f32(np.stack([t.rows for _, t in tg])),
            cols=f32(np.stack([t.cols for _, t in tg])),
            goal=torch.tensor([t.goal for _, t in tg]),
            maneuver=[t.maneuver for _, t in tg],
        )


def _pooled_target(rows, cols, pool: int) -> torch.Tensor:
    # sum-pooling an outer product is the outer product of sum-pooled factors
    r = rows.unflatten(-1, (-1, pool)).sum(-1)
    c = cols.unflatten(-1, (-1, pool)).sum(-1)
    return r.unsqueeze(-1) * c.unsqueeze(-2)


def compute_losses(model: GoalConditionedPredictor, data: Batchable, idx: torch.Tensor,
                   noise_gen: torch.Generator | None = None) -> L.LossBreakdown:
    """Batch-mean loss terms for the examples ``idx``."""
    cfg = model.cfg
    zeta, eta, mu_w = cfg.weights
    scenes, inverse = torch.unique(data.scene[idx], return_inverse=True)
    x = data.inputs[scenes]
    if not model.use_map:
        x = torch.cat([x[:, :-1], torch.zeros_like(x[:, -1:])], dim=1)
    r = model.encoder.scene_edges_packed(x)
    past = data.past[idx]
    F, q = model.encoder.target_feature(r[inverse], past)
    last = past[:, -1]
    rows, cols, goal = data.rows[idx], data.cols[idx], data.goal[idx]
    zero = F.new_zeros(())
    if model.generative:
        ce = L.intention_ce_from_logits(model.intention_logits(F), goal).mean()
        c = model.condition(q, goal)
        mu, logvar = model.posterior.forward_pooled(
            _pooled_target(rows, cols, model.posterior.POOL), c)
        eps = torch.randn(mu.shape, generator=noise_gen, dtype=mu.dtype)
        z = mu + torch.exp(0.5 * logvar) * eps
        kl = L.kl_unit_gaussian(mu, logvar).mean()
    else:
        ce = kl = zero
        c, z = model.condition(q, None), None
    ly, lx = model.decode_log_factors(z, F, c, past)
    # separable target: sum_j T_j log P_j = sum_r rows*ly + sum_c cols*lx
    recon = ((rows * ly).sum((-2, -1)) + (cols * lx).sum((-2, -1))).mean()

    py, px = ly.exp(), lx.exp()
    xs, ys = model.decoder.xs, model.decoder.ys
    pts = torch.stack([(px * xs).sum(-1), (py * ys).sum(-1)], dim=-1)
    v = L.velocities_from_points(last, pts, previous=past[:, -2] if cfg.tau >= 2 else None)

    def penalties():
        k = cfg.pen_every
        sub = slice(k - 1, None, k)
        h = py[:, sub].unsqueeze(-1) * px[:, sub].unsqueeze(-2)
        eps_b = L.default_threshold(h.shape)
        pen = L.penetration(h, data.D[data.scene[idx]].unsqueeze(1), eps_b, hard=False).mean()
        incon = L.inconsistency(v).mean() if v.shape[-1] >= 3 else zero
        disp = L.dispersion(L.distance_errors(pts, data.future[idx])).mean()
        return pen, incon, disp

    if zeta or eta or mu_w:
        pen, incon, disp = penalties()
    else:
        with torch.no_grad():
            pen, incon, disp = penalties()
    return L.LossBreakdown(recon, kl, ce, pen, incon, disp)


def _log(fh, line: str) -> None:
    if fh is not None:
        fh.write(line + "\n")
        fh.flush()


def make_model(cfg: RunConfig) -> GoalConditionedPredictor:
    torch.manual_seed(cfg.seed)
    return GoalConditionedPredictor(cfg)


@dataclass
class TrainResult:
    model: GoalConditionedPredictor
    checkpoint: ckpt_io.Checkpoint
    history: list[float]  # total loss per step
    epoch_loss: list[float]  # full-pass mean total before training and after each epoch


def _epoch_total(model, data: Batchable, bs: int, gen_seed: int) -> float:
    gen = torch.Generator().manual_seed(gen_seed)
    zeta, eta, mu = model.cfg.weights
    tot, n = 0.0, 0
    with torch.no_grad():
        for s in range(0, len(data), bs):
            idx = torch.arange(s, min(s + bs, len(data)))
            parts = compute_losses(model, data, idx, gen)
            tot += float(L.total_loss(parts, zeta, eta, mu)) * len(idx)
            n += len(idx)
    return tot / n


def train(cfg: RunConfig, dataset, log=None, track_epochs: bool = False) -> TrainResult:
    """Adam on the total loss over every (scene, target) pair of the train split.

    ``dataset`` is a dataset directory or a list of already built scenes.
    ``log`` is a path (appended to) or an open text handle.
    """
    torch.use_deterministic_algorithms(True)
    if isinstance(dataset, (str, Path)):
        man = data_io.read_manifest(dataset)
        data_io.check_compatible(man, cfg)
        train_sc, _ = data_io.split(data_io.load_scenarios(dataset))
        scenes = data_io.build_scenes(train_sc, cfg)
    else:
        scenes = list(dataset)
    batches = Batchable.from_scenes(scenes)
    model = make_model(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    noise = torch.Generator().manual_seed(cfg.seed + 1)
    zeta, eta, mu = cfg.weights

    fh = open(log, "a") if isinstance(log, (str, Path)) else log
    history, epoch_loss = [], []
    step = 0
    try:
        _log(fh, cfg.echo())
        if track_epochs:
            epoch_loss.append(_epoch_total(model, batches, cfg.batch_size, cfg.seed + 2))
        for _ in range(cfg.epochs):
            order = rng.permutation(len(batches))
            for s in range(0, len(order), cfg.batch_size):
                t = time.perf_counter()
                idx = torch.from_numpy(order[s:s + cfg.batch_size])
                parts = compute_losses(model, batches, idx, noise)
                total = L.total_loss(parts, zeta, eta, mu, step=step)
                if not torch.isfinite(total):
                    raise L.TrainingAbort("total", step)
                opt.zero_grad()
                total.backward()
                opt.step()
                step += 1
                history.append(float(total.detach()))
                _log(fh, parts.log_line(step, 1000 * (time.perf_counter() - t)))
            if track_epochs:
                epoch_loss.append(_epoch_total(model, batches, cfg.batch_size, cfg.seed + 2))
    finally:
        if fh is not None and fh is not log:
            fh.close()
    model.eval()
    return TrainResult(model, ckpt_io.from_model(model, cfg, step, opt), history, epoch_loss)


# -- evaluation ------------------------------------------------------------------

@dataclass
class TargetPrediction:
    scene_seed: int
    agent_id: int
    maneuver: str
    goal: int
    truth: np.ndarray  # (delta, 2)
    samples: np.ndarray  # (S, delta, 2)
    intention: np.ndarray | None  # (G,) softmax, None without an intention head
    D: np.ndarray


def predict_targets(model: GoalConditionedPredictor | None, scenes, protocol: str = "multi",
                    S: int = 20, strategy: str = "prob", seed: int = 0,
                    baseline: str | None = None) -> list[TargetPrediction]:
    if protocol not in ("single", "multi"):
        raise ValueError(f"unknown protocol {protocol!r}")
    if baseline not in (None, "const-vel"):
        raise ValueError(f"unknown baseline {baseline!r}")
    out = []
    k = 0
    for sc in scenes:
        frames = torch.from_numpy(sc.frames)
        map_ = torch.from_numpy(sc.map)
        for tg in sc.targets:
            intention = None
            if baseline == "const-vel":
                delta = len(tg.future)
                samples = evalkit.const_vel_predict(tg.past, delta)[None]
            else:
                obs = Observation(frames, map_, torch.from_numpy(tg.past.astype(np.float32)))
                res = model.cfg.res
                if protocol == "single":
                    draws = generate(model, obs, "best", 1, seed=seed + k, force_zero=True)
                else:
                    draws = generate(model, obs, strategy, S, seed=seed + k)
                samples = np.stack([d.points(res) for d in draws])
                if model.generative:
                    with torch.no_grad():
                        F, _ = model.encode(obs.frames[None], obs.map[None], obs.past[None])
                        intention = torch.softmax(model.intention_logits(F), -1)[0].numpy()
            out.append(TargetPrediction(sc.seed, tg.agent_id, tg.maneuver, tg.goal, tg.future,
                                        samples, intention, sc.D))
            k += 1
    return out


def report_from(preds: list[TargetPrediction], protocol: str, S: int, res: float,
                horizons=evalkit.HORIZONS) -> evalkit.EvalReport:
    if not preds:
        raise ValueError("nothing to evaluate")
    delta = len(preds[0].truth)
    hs = tuple(h for h in horizons if h <= delta) or (delta,)
    ade, fde = evalkit.summarize([p.samples for p in preds], [p.truth for p in preds],
                                 protocol, S, hs)
    pts, off = 0, 0.0
    for p in preds:
        n = p.samples.shape[0] * p.samples.shape[1]
        off += evalkit.penetration_rate(p.samples, p.D, (0.0, 0.0), res) * n
        pts += n
    rep = evalkit.EvalReport(protocol, S if protocol == "multi" else 1, ade, fde,
                             penetration_rate=off / pts, count=len(preds))
    if preds[0].intention is not None:
        dists = np.stack([p.intention for p in preds])
        truths = np.array([p.goal for p in preds])
        rep.intention_map = evalkit.intention_map(dists, truths)
        rep.intention_accuracy = evalkit.intention_accuracy(dists, truths)
    return rep


def evaluate(checkpoint, dataset, protocol: str = "multi", S: int = 20, strategy: str = "prob",
             seed: int = 0, baseline: str | None = None, cfg: RunConfig | None = None):
    """Report over the held-out split of ``dataset`` (directory or built scenes).

    ``checkpoint`` may be a path, a ``Checkpoint``, a model, or None with the
    const-vel baseline.
    """
    model = None
    if baseline is None:
        if isinstance(checkpoint, (str, Path)):
            checkpoint = ckpt_io.load(checkpoint)
        if isinstance(checkpoint, ckpt_io.Checkpoint):
            model = ckpt_io.restore_model(checkpoint)
        elif isinstance(checkpoint, GoalConditionedPredictor):
            model = checkpoint.eval()
        else:
            raise ConfigError("evaluation needs a checkpoint unless a baseline is selected")
        cfg = model.cfg
    if isinstance(dataset, (str, Path)):
        man = data_io.read_manifest(dataset)
        if cfg is None:
            cfg = RunConfig(tau=man["tau"], delta=man["delta"], H=man["H"], W=man["W"], res=man["res"])
        data_io.check_compatible(man, cfg)
        _, held = data_io.split(data_io.load_scenarios(dataset))
        scenes = data_io.build_scenes(held, cfg)
        res = cfg.res
    else:
        scenes = list(dataset)
        res = cfg.res if cfg is not None else 0.5
    preds = predict_targets(model, scenes, protocol, S, strategy, seed, baseline)
    return report_from(preds, protocol, S, res)
