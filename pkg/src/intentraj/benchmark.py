"""Synthetic benchmark: full model, three ablations, and the Const-Vel baseline."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_io
from . import evalkit
from .config import RunConfig
from .pipeline import TargetPrediction, predict_targets, report_from, train
from .scenegen import TURNING, GenConfig

VARIANTS = ("full", "no_intention", "no_map", "no_penalty")


@dataclass
class BenchmarkResult:
    reports: dict[str, dict] = field(default_factory=dict)  # variant/protocol -> metrics
    turning_ade3: dict[str, float] = field(default_factory=dict)
    n_turning: int = 0
    seconds: float = 0.0
    epochs: int = 0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def _report_dict(rep: evalkit.EvalReport) -> dict:
    return {"ade": {str(k): v for k, v in rep.ade.items()},
            "fde": {str(k): v for k, v in rep.fde.items()},
            "penetration_rate": rep.penetration_rate, "count": rep.count,
            "intention_accuracy": rep.intention_accuracy, "intention_map": rep.intention_map}


def _turning_ade(preds: list[TargetPrediction], horizon: int) -> float:
    vals = [evalkit.ade(p.samples[0], p.truth, horizon) for p in preds if p.maneuver in TURNING]
    return float(np.mean(vals))


def run(count: int = 250, seed: int = 0, cfg: RunConfig | None = None, root=None,
        variants=VARIANTS, log_dir=None, echo=print) -> BenchmarkResult:
    cfg = cfg or RunConfig.small()
    t_start = time.perf_counter()
    gen = GenConfig(count=count, seed=seed)
    if root is None:
        scenarios = [data_io.generate_scenario(s, gen, stratum=i)
                     for i, s in enumerate(data_io.scenario_seeds(gen))]
    else:
        root = Path(root)
        if not (root / "manifest").exists():
            data_io.generate_dataset(root, cfg, gen)
        scenarios = data_io.load_scenarios(root)
    train_sc, held_sc = data_io.split(scenarios)
    train_scenes = data_io.build_scenes(train_sc, cfg)
    held_scenes = data_io.build_scenes(held_sc, cfg)
    echo(f"scenes train={len(train_scenes)} held={len(held_scenes)} "
         f"build_s={time.perf_counter() - t_start:.1f}")

    out = BenchmarkResult(epochs=cfg.epochs)
    horizon3 = 30
    cv = predict_targets(None, held_scenes, "single", baseline="const-vel")
    out.reports["const_vel/single"] = _report_dict(report_from(cv, "single", 1, cfg.res))
    out.turning_ade3["const_vel"] = _turning_ade(cv, horizon3)
    out.n_turning = sum(p.maneuver in TURNING for p in cv)

    for name in variants:
        t0 = time.perf_counter()
        vcfg = cfg if name == "full" else cfg.replace(**{name: True})
        log = None if log_dir is None else Path(log_dir) / f"train_{name}.log"
        model = train(vcfg, train_scenes, log=log).model
        single = predict_targets(model, held_scenes, "single", seed=seed)
        multi = predict_targets(model, held_scenes, "multi", S=20, strategy="prob", seed=seed)
        out.reports[f"{name}/single"] = _report_dict(report_from(single, "single", 1, cfg.res))
        out.reports[f"{name}/multi"] = _report_dict(report_from(multi, "multi", 20, cfg.res))
        out.turning_ade3[name] = _turning_ade(single, horizon3)
        echo(f"variant {name} train_eval_s={time.perf_counter() - t0:.1f} "
             f"ade4_single={out.reports[f'{name}/single']['ade']['40']:.2f} "
             f"ade4_multi={out.reports[f'{name}/multi']['ade']['40']:.2f} "
             f"pen_multi={out.reports[f'{name}/multi']['penetration_rate']:.4f}")
    out.seconds = time.perf_counter() - t_start
    return out


def gates(res: BenchmarkResult) -> dict[str, tuple[bool, str]]:
    """Pass/fail per benchmark gate with a one-line explanation."""
    g = {}
    full_t, cv_t = res.turning_ade3["full"], res.turning_ade3["const_vel"]
    gain = 1.0 - full_t / cv_t
    g["5a"] = (gain >= 0.20, f"turning ADE@3s {full_t:.2f} vs const-vel {cv_t:.2f} "
                             f"({100 * gain:.1f}% better, n={res.n_turning})")
    acc = res.reports["full/single"]["intention_accuracy"]
    g["5b"] = (acc >= 0.60, f"held-out intention accuracy {acc:.3f}")
    s, m = res.reports["full/single"]["ade"], res.reports["full/multi"]["ade"]
    ok = all(m[h] <= s[h] for h in s)
    g["5c"] = (ok, "minADE-20 vs single: " + ", ".join(f"{h}: {m[h]:.2f}<={s[h]:.2f}" for h in s))
    abl = {k: res.reports[f"{k}/single"]["ade"]["40"] for k in VARIANTS[1:] if f"{k}/single" in res.reports}
    worst = max(abl, key=abl.get) if abl else None
    g["5d"] = (worst == "no_intention", "ADE@4s single " + ", ".join(f"{k}={v:.2f}" for k, v in abl.items()))
    pf = res.reports["full/multi"]["penetration_rate"]
    pn = res.reports["no_penalty/multi"]["penetration_rate"]
    g["6"] = (pf < pn, f"held-out penetration_rate full={pf:.4f} no_penalty={pn:.4f}")
    return g
