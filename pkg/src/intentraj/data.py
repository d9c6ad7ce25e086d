"""Dataset directory format, (scene, target) examples, and the hashed split.

A dataset is a directory holding a ``manifest`` and one ``scenario_<seed>.txt``
record per scenario. Records are plain text with a fixed field order; floats
are written with ``repr`` so a re-run of ``gen`` is byte-identical.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from shapely.geometry import Polygon

from . import raster
from .config import ConfigError, RunConfig, parse_kv_lines
from .scenegen import (FPS, AgentTrack, Arm, GenConfig, Scenario, WorldLayout,
                       generate_scenario)

FORMAT_VERSION = 1
DATA_ENV = "INTENTRAJ_DATA"
MANIFEST_KEYS = {"version": int, "G": int, "H": int, "W": int, "res": float, "fps": int,
                 "tau": int, "delta": int, "count": int, "seed": int,
                 "world_size": int, "world_res": float}


def default_root() -> Path | None:
    root = os.environ.get(DATA_ENV)
    return Path(root) if root else None


# -- record encoding ----------------------------------------------------------

def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def rle_encode(mask: np.ndarray) -> list[int]:
    """Row-major run lengths, starting with a run of zeros (possibly empty)."""
    flat = np.asarray(mask, dtype=np.uint8).ravel()
    runs, current, count = [], 0, 0
    for v in flat:
        if v == current:
            count += 1
        else:
            runs.append(count)
            current, count = int(v), 1
    runs.append(count)
    return runs


def rle_decode(runs, shape) -> np.ndarray:
    vals = np.arange(len(runs)) % 2
    flat = np.repeat(vals, runs).astype(np.uint8)
    if flat.size != shape[0] * shape[1]:
        raise ValueError("run lengths do not cover the mask")
    return flat.reshape(shape)


def format_record(sc: Scenario) -> str:
    lay = sc.layout
    out = [f"scenario {FORMAT_VERSION}", f"seed {sc.seed}", f"ego {sc.ego_id}",
           f"layout {lay.size} {lay.res!r} {lay.box_half!r} {lay.texture_seed}",
           f"arms {len(lay.arms)}"]
    out += [f"arm {a.heading!r} {a.lane_width!r} {a.lane_count}" for a in lay.arms]
    out.append("drivable " + " ".join(map(str, rle_encode(lay.drivable))))
    out.append(f"zones {len(lay.zone_polygons)}")
    for k, poly in enumerate(lay.zone_polygons, start=1):
        coords = np.asarray(poly.exterior.coords)[:-1]
        out.append(f"zone {k} {len(coords)} {_floats(coords.ravel())}")
    out.append(f"tracks {len(sc.tracks)}")
    for tr in sc.tracks:
        out.append(f"track {tr.agent_id} {tr.maneuver} {tr.goal_zone} {len(tr.states)}")
        out.append(_floats(tr.states.ravel()))
    return "\n".join(out) + "\n"


def parse_record(text: str) -> Scenario:
    lines = iter(text.splitlines())

    def expect(tag: str) -> list[str]:
        parts = next(lines).split()
        if not parts or parts[0] != tag:
            raise ValueError(f"expected {tag!r}, got {parts[:1]}")
        return parts[1:]

    try:
        if int(expect("scenario")[0]) != FORMAT_VERSION:
            raise ValueError("unsupported record version")
        seed = int(expect("seed")[0])
        ego = int(expect("ego")[0])
        size, res, box_half, tex = expect("layout")
        size, res = int(size), float(res)
        arms = []
        for _ in range(int(expect("arms")[0])):
            h, w, n = expect("arm")
            arms.append(Arm(float(h), float(w), int(n)))
        drivable = rle_decode([int(v) for v in expect("drivable")], (size, size))
        zones = []
        for k in range(int(expect("zones")[0])):
            parts = expect("zone")
            n = int(parts[1])
            xy = np.array(parts[2:], dtype=float).reshape(n, 2)
            zones.append(Polygon(xy))
        tracks = []
        for _ in range(int(expect("tracks")[0])):
            aid, man, goal, T = expect("track")
            states = np.array(next(lines).split(), dtype=float).reshape(int(T), 5)
            tracks.append(AgentTrack(int(aid), states, man, int(goal)))
    except (StopIteration, IndexError) as err:
        raise ValueError(f"truncated scenario record: {err}") from None
    layout = WorldLayout(size, res, arms, drivable, zones, float(box_half), int(tex))
    return Scenario(layout, tracks, ego, seed)


def record_name(seed: int) -> str:
    return f"scenario_{seed:08d}.txt"


# -- dataset directory ----------------------------------------------------------

def write_manifest(root: Path, cfg: RunConfig, gen: GenConfig) -> None:
    vals = {"version": FORMAT_VERSION, "G": cfg.G, "H": cfg.H, "W": cfg.W, "res": cfg.res,
            "fps": FPS, "tau": cfg.tau, "delta": cfg.delta, "count": gen.count, "seed": gen.seed,
            "world_size": gen.world_size, "world_res": gen.world_res}
    (root / "manifest").write_text("".join(f"{k} = {v}\n" for k, v in vals.items()))


def read_manifest(root) -> dict:
    path = Path(root) / "manifest"
    if not path.is_file():
        raise ConfigError(f"no manifest in {root}")
    man = parse_kv_lines(path.read_text(), MANIFEST_KEYS)
    if man.get("version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported dataset version {man.get('version')}")
    return man


def scenario_seeds(gen: GenConfig) -> list[int]:
    return [gen.seed * 100_003 + i for i in range(gen.count)]


def generate_dataset(root, cfg: RunConfig, gen: GenConfig) -> list[Path]:
    """Write ``gen.count`` scenarios; scenario i is stratified by i."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    write_manifest(root, cfg, gen)
    paths = []
    for i, seed in enumerate(scenario_seeds(gen)):
        sc = generate_scenario(seed, gen, stratum=i)
        path = root / record_name(seed)
        path.write_text(format_record(sc))
        paths.append(path)
    return paths


def check_compatible(man: dict, cfg: RunConfig) -> None:
    for key in ("tau", "delta", "H", "W"):
        if man[key] != getattr(cfg, key):
            raise ConfigError(f"dataset {key}={man[key]} but config {key}={getattr(cfg, key)}")
    if man["res"] != cfg.res:
        raise ConfigError(f"dataset res={man['res']} but config res={cfg.res}")
    if cfg.mode == "intersection" and man["G"] != cfg.G:
        raise ConfigError(f"dataset G={man['G']} but config G={cfg.G}")


def load_scenarios(root) -> list[Scenario]:
    root = Path(root)
    return [parse_record(p.read_text()) for p in sorted(root.glob("scenario_*.txt"))]


def is_train(seed: int) -> bool:
    """80/20 split keyed on a hash of the scenario seed."""
    digest = hashlib.sha256(str(int(seed)).encode()).hexdigest()
    return int(digest, 16) % 5 != 0


def split(scenarios):
    train = [s for s in scenarios if is_train(s.seed)]
    held = [s for s in scenarios if not is_train(s.seed)]
    return train, held


# -- examples -----------------------------------------------------------------

@dataclass
class Target:
    """One agent to predict, in the local frame of its scene."""

    agent_id: int
    maneuver: str
    goal: int  # 1..G
    past: np.ndarray  # (tau, 2)
    future: np.ndarray  # (delta, 2)
    rows: np.ndarray  # (delta, H) target heatmap row factors
    cols: np.ndarray  # (delta, W)


@dataclass
class Scene:
    seed: int
    frames: np.ndarray  # (tau, H, W, 3) float32
    map: np.ndarray  # (H, W, 1) float32
    D: np.ndarray  # (H, W) uint8, 1 = not drivable
    targets: list[Target]
    t0: int


def grid_zone(xy, cfg: RunConfig) -> int:
    """5x5 region id (1..25, row-major) of a local position."""
    side = 5
    col = int(np.clip(np.floor(xy[0] / (cfg.W * cfg.res / side)), 0, side - 1))
    row = int(np.clip(np.floor(xy[1] / (cfg.H * cfg.res / side)), 0, side - 1))
    return row * side + col + 1


def _inside(xy, cfg: RunConfig) -> bool:
    return bool(np.all((xy[:, 0] >= 0) & (xy[:, 0] < cfg.W * cfg.res)
                       & (xy[:, 1] >= 0) & (xy[:, 1] < cfg.H * cfg.res)))


def build_scene(sc: Scenario, cfg: RunConfig, t0: int | None = None) -> Scene:
    """Rasterize one scenario and collect every agent whose window fits the grid."""
    t0 = cfg.tau - 1 if t0 is None else t0
    shape = cfg.shape
    sr = raster.build_scene_raster(sc, t0, cfg.tau, shape, cfg.res)
    D = raster.drivable_local(sc.layout, sr.frame, shape, cfg.res)
    targets = []
    for tr in sc.tracks:
        try:
            xy = tr.window(t0 - cfg.tau + 1, t0 + cfg.delta + 1)
        except IndexError:
            continue
        local = sr.frame.to_local(xy)
        if not _inside(local, cfg):
            continue
        past, future = local[:cfg.tau], local[cfg.tau:]
        rc = [raster.encode_marginals(p, cfg.sigma, shape, (0.0, 0.0), cfg.res) for p in future]
        goal = tr.goal_zone if cfg.mode == "intersection" else grid_zone(future[-1], cfg)
        targets.append(Target(tr.agent_id, tr.maneuver, goal, past, future,
                              np.stack([r for r, _ in rc]), np.stack([c for _, c in rc])))
    return Scene(sc.seed, sr.frames.astype(np.float32), sr.map.astype(np.float32), D, targets, t0)


def build_scenes(scenarios, cfg: RunConfig) -> list[Scene]:
    return [build_scene(sc, cfg) for sc in scenarios]


def gen_config_types() -> dict:
    return {f.name: f.type for f in fields(GenConfig) if f.name != "maneuver_weights"}
