"""Command line entry point: ``intentraj gen|train|eval|predict|plot``.

Exit status: 0 on success, 2 on usage or configuration errors, 1 on runtime
failures. Every numeric default not given on the command line comes from
``RunConfig`` (or ``RunConfig.small()`` with ``--preset small``).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt_io
from . import data as data_io
from . import raster
from .config import ABLATIONS, ConfigError, RunConfig, config_types, parse_kv_lines
from .pipeline import evaluate, train
from .predictor import Observation, generate
from .scenegen import GenConfig

PRESETS = {"default": RunConfig, "small": RunConfig.small}
# grid keys a `gen` config may set alongside generator keys
GEN_GRID_KEYS = ("tau", "delta", "H", "W", "res", "mode", "G")


def _add_common(p: argparse.ArgumentParser, config: bool = True) -> None:
    p.add_argument("--data", type=Path, default=None,
                   help=f"dataset directory (default: ${data_io.DATA_ENV})")
    if config:
        p.add_argument("--config", type=Path, help="file of 'key = value' lines")
        p.add_argument("--preset", choices=sorted(PRESETS), default="default")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intentraj", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic scenario dataset")
    _add_common(p)
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train a model on the train split")
    _add_common(p)
    p.add_argument("--ablate", action="append", choices=ABLATIONS, default=[])
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="checkpoint path (default: <data>/model.ckpt)")
    p.add_argument("--log", type=Path, help="log path (default: <checkpoint>.log)")

    p = sub.add_parser("eval", help="evaluate on the held-out split")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--baseline", choices=["const-vel"])
    p.add_argument("--protocol", choices=["single", "multi"], default="multi")
    p.add_argument("--S", type=int, default=20)
    p.add_argument("--strategy", choices=["prob", "best"], default="prob")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", type=Path, help="also write the key = value lines here")

    p = sub.add_parser("predict", help="decode trajectories for one scenario")
    _add_common(p, config=False)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--scenario", type=int, required=True, help="scenario seed")
    p.add_argument("--S", type=int, default=20)
    p.add_argument("--strategy", choices=["prob", "best"], default="prob")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", type=Path, help="PNG with observed, true and predicted tracks")

    p = sub.add_parser("plot", help="render a scenario raster or a target heatmap")
    _add_common(p)
    p.add_argument("--scenario", type=int, required=True, help="scenario seed")
    p.add_argument("--what", choices=["raster", "map", "heatmap"], default="raster")
    p.add_argument("--target", type=int, default=0, help="target index for --what heatmap")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--tensor", type=Path, help="also write the raster tensor file")
    return parser


def _data_root(args) -> Path:
    root = args.data or data_io.default_root()
    if root is None:
        raise ConfigError(f"no dataset directory: pass --data or set {data_io.DATA_ENV}")
    return Path(root)


def _run_config(args, allowed=None) -> tuple[RunConfig, dict]:
    """Preset, then config file; returns the config and any non-RunConfig keys."""
    cfg = PRESETS[args.preset]()
    if not getattr(args, "config", None):
        return cfg, {}
    kinds = dict(config_types(RunConfig) if allowed is None else allowed)
    values = parse_kv_lines(Path(args.config).read_text(), kinds)
    run_keys = set(config_types(RunConfig)) if allowed is None else set(GEN_GRID_KEYS)
    extra = {k: v for k, v in values.items() if k not in run_keys}
    try:
        cfg = cfg.replace(**{k: v for k, v in values.items() if k in run_keys})
    except TypeError as err:
        raise ConfigError(str(err)) from None
    return cfg, extra


def cmd_gen(args) -> int:
    kinds = {**data_io.gen_config_types(), **{k: config_types(RunConfig)[k] for k in GEN_GRID_KEYS}}
    cfg, extra = _run_config(args, kinds)
    gen = GenConfig(**extra)
    if args.count is not None:
        gen.count = args.count
    if args.seed is not None:
        gen.seed = args.seed
    if gen.count < 1:
        raise ConfigError("count must be >= 1")
    root = _data_root(args)
    paths = data_io.generate_dataset(root, cfg, gen)
    print(f"wrote {len(paths)} scenarios to {root}")
    return 0


def cmd_train(args) -> int:
    cfg, _ = _run_config(args)
    changes = {name: True for name in args.ablate}
    if args.epochs is not None:
        changes["epochs"] = args.epochs
    if args.seed is not None:
        changes["seed"] = args.seed
    cfg = cfg.replace(**changes)
    root = _data_root(args)
    out = args.out or root / "model.ckpt"
    log = args.log or out.with_name(out.name + ".log")
    result = train(cfg, root, log=log)
    ckpt_io.save(result.checkpoint, out)
    last = result.history[-1] if result.history else float("nan")
    print(f"steps={result.checkpoint.step} final_total={last:.6g} checkpoint={out} log={log}")
    return 0


def cmd_eval(args) -> int:
    root = _data_root(args)
    cfg = None
    if args.baseline is None:
        if args.checkpoint is None:
            raise ConfigError("eval needs --checkpoint unless --baseline is given")
        ckpt = ckpt_io.load(args.checkpoint)
    else:
        ckpt = None
        if args.config or args.preset != "default":
            cfg, _ = _run_config(args)
    rep = evaluate(ckpt, root, args.protocol, args.S, args.strategy, args.seed, args.baseline, cfg)
    print(rep.table())
    print()
    print(rep.records(), end="")
    if args.report:
        args.report.write_text(rep.records())
    return 0


def _find_scenario(root: Path, seed: int):
    path = root / data_io.record_name(seed)
    if not path.is_file():
        raise ConfigError(f"no scenario {seed} in {root}")
    return data_io.parse_record(path.read_text())


def cmd_predict(args) -> int:
    root = _data_root(args)
    ckpt = ckpt_io.load(args.checkpoint)
    data_io.check_compatible(data_io.read_manifest(root), ckpt.config)
    model = ckpt_io.restore_model(ckpt)
    cfg = model.cfg
    scene = data_io.build_scene(_find_scenario(root, args.scenario), cfg)
    frames, map_ = torch.from_numpy(scene.frames), torch.from_numpy(scene.map)
    lines = []
    for k, tg in enumerate(scene.targets):
        obs = Observation(frames, map_, torch.from_numpy(tg.past.astype(np.float32)))
        draws = generate(model, obs, args.strategy, args.S, seed=args.seed + k)
        for s, d in enumerate(draws):
            pts = d.points(cfg.res)
            coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
            print(f"target={tg.agent_id} sample={s} zone={d.zone} {coords}")
        lines.append((tg.past, "white"))
        lines.append((tg.future, "lime"))
        lines.extend((d.points(cfg.res), "red") for d in draws)
    if args.plot:
        raster.plot_grid(scene.frames[-1], args.plot, mask=scene.D, points=lines, res=cfg.res,
                         title=f"scenario {args.scenario}")
        print(f"plot={args.plot}")
    return 0


def cmd_plot(args) -> int:
    root = _data_root(args)
    cfg, _ = _run_config(args)
    scene = data_io.build_scene(_find_scenario(root, args.scenario), cfg)
    if args.what == "raster":
        grid = scene.frames[-1]
    elif args.what == "map":
        grid = scene.map
    else:
        if not 0 <= args.target < len(scene.targets):
            raise ConfigError(f"scenario has {len(scene.targets)} targets")
        tg = scene.targets[args.target]
        grid = np.einsum("th,tw->hw", tg.rows, tg.cols)
    raster.plot_grid(grid, args.out, mask=scene.D, res=cfg.res,
                     title=f"scenario {args.scenario} {args.what}")
    if args.tensor:
        raster.save_tensor(args.tensor, scene.frames, (0.0, 0.0), cfg.res, cfg.tau)
    print(f"plot={args.out}")
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "predict": cmd_predict,
            "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as err:
        parser.print_usage(sys.stderr)
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - report and map to the runtime status
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
