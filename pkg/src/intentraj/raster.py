"""Top-down rasters, the static map, and the heatmap codec.

Grids are indexed ``[row, col]`` with rows along +y and columns along +x.
``origin`` is the coordinate of the lower-left corner of cell (0, 0), so the
center of cell (r, c) sits at ``origin + ((c + 0.5) * res, (r + 0.5) * res)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import shapely

from .scenegen import Scenario, WorldLayout, render_synthetic_frames, road_points

HEIGHT_CAP = 3.0
DENSITY_SATURATION = 64


class DegenerateHeatmapError(ValueError):
    pass


def density_channel(count):
    """``min(1, log(N + 1) / log 64)``; accepts scalars or arrays."""
    count = np.asarray(count, dtype=float)
    if np.any(count < 0):
        raise ValueError("point counts must be nonnegative")
    out = np.minimum(1.0, np.log1p(count) / math.log(DENSITY_SATURATION))
    return float(out) if out.ndim == 0 else out


def rasterize_frame(points, origin=(0.0, 0.0), res: float = 0.5, shape=(160, 160),
                    height_cap: float = HEIGHT_CAP) -> np.ndarray:
    """Project (x, y, height, intensity) points to an H x W x 3 grid.

    Height and intensity keep the per-cell maximum; points outside the grid
    are dropped and empty cells stay zero.
    """
    if res <= 0:
        raise ValueError("res must be positive")
    H, W = shape
    grid = np.zeros((H, W, 3))
    pts = np.asarray(points, dtype=float).reshape(-1, 4)
    if len(pts) == 0:
        return grid
    col = np.floor((pts[:, 0] - origin[0]) / res).astype(np.int64)
    row = np.floor((pts[:, 1] - origin[1]) / res).astype(np.int64)
    ok = (row >= 0) & (row < H) & (col >= 0) & (col < W)
    row, col, pts = row[ok], col[ok], pts[ok]
    flat = row * W + col
    height = np.clip(pts[:, 2], 0.0, height_cap) / height_cap
    inten = np.clip(pts[:, 3], 0.0, 1.0)
    h = np.zeros(H * W)
    i = np.zeros(H * W)
    np.maximum.at(h, flat, height)
    np.maximum.at(i, flat, inten)
    n = np.bincount(flat, minlength=H * W)
    grid[..., 0] = h.reshape(H, W)
    grid[..., 1] = i.reshape(H, W)
    grid[..., 2] = density_channel(n).reshape(H, W)
    return grid


@dataclass(frozen=True)
class LocalFrame:
    """Rigid transform placing the ego pose at ``anchor`` facing +x."""

    x: float
    y: float
    heading: float
    anchor: tuple[float, float]

    def to_local(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        c, s = math.cos(self.heading), math.sin(self.heading)
        dx = xy[..., 0] - self.x
        dy = xy[..., 1] - self.y
        out = xy.copy()
        out[..., 0] = c * dx + s * dy + self.anchor[0]
        out[..., 1] = -s * dx + c * dy + self.anchor[1]
        return out

    def to_world(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        c, s = math.cos(self.heading), math.sin(self.heading)
        lx = xy[..., 0] - self.anchor[0]
        ly = xy[..., 1] - self.anchor[1]
        out = xy.copy()
        out[..., 0] = c * lx - s * ly + self.x
        out[..., 1] = s * lx + c * ly + self.y
        return out

    def heading_to_local(self, heading):
        h = np.asarray(heading, dtype=float) - self.heading
        return np.mod(h + math.pi, 2 * math.pi) - math.pi


def default_anchor(shape, res: float) -> tuple[float, float]:
    H, W = shape
    return (0.25 * W * res, 0.5 * H * res)


def local_frame(scenario: Scenario, t_ref: int, shape=(160, 160), res: float = 0.5) -> LocalFrame:
    """Ego-anchored frame at ``t_ref``; ``IndexError`` if the ego is absent."""
    x, y, h = scenario.ego.pose_at(t_ref)
    return LocalFrame(x, y, h, default_anchor(shape, res))


def world_to_local(data, frame: LocalFrame) -> np.ndarray:
    """Transform points ``(N, >=2)`` or track states ``(T, 5)`` to the local frame.

    For 5-column track states the heading column is rotated too.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 2 and data.shape[1] == 5:
        out = data.copy()
        out[:, 1:3] = frame.to_local(data[:, 1:3])
        out[:, 3] = frame.heading_to_local(data[:, 3])
        return out
    out = data.copy()
    out[..., :2] = frame.to_local(data[..., :2])
    return out


@dataclass
class SceneRaster:
    frames: np.ndarray  # (tau, H, W, 3)
    map: np.ndarray  # (H, W, 1)
    origin: tuple[float, float]
    res: float
    t0: int
    frame: LocalFrame

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise ValueError(f"frames must be (tau, H, W, 3), got {self.frames.shape}")
        if self.map.shape != self.frames.shape[1:3] + (1,):
            raise ValueError("map and frames must share H and W")

    @property
    def tau(self) -> int:
        return self.frames.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]


def build_map(scenario: Scenario, t0: int, tau: int, shape=(160, 160), res: float = 0.5) -> np.ndarray:
    """Intensity of the static road surface in the local frame at ``t0-tau+1``."""
    frame = local_frame(scenario, t0 - tau + 1, shape, res)
    pts = world_to_local(road_points(scenario.layout), frame)
    return rasterize_frame(pts, (0.0, 0.0), res, shape)[..., 1:2]


def build_scene_raster(scenario: Scenario, t0: int, tau: int, shape=(160, 160),
                       res: float = 0.5) -> SceneRaster:
    frame = local_frame(scenario, t0 - tau + 1, shape, res)
    frames = [rasterize_frame(world_to_local(p, frame), (0.0, 0.0), res, shape)
              for p in render_synthetic_frames(scenario, t0, tau)]
    return SceneRaster(np.stack(frames), build_map(scenario, t0, tau, shape, res),
                       (0.0, 0.0), res, t0, frame)


def drivable_local(layout: WorldLayout, frame: LocalFrame, shape=(160, 160),
                   res: float = 0.5) -> np.ndarray:
    """Drivable mask D resampled into the local grid (1 = not drivable)."""
    H, W = shape
    cx, cy = np.meshgrid((np.arange(W) + 0.5) * res, (np.arange(H) + 0.5) * res)
    world = frame.to_world(np.stack([cx, cy], axis=-1))
    inside = shapely.contains_xy(layout.road, world[..., 0].ravel(), world[..., 1].ravel())
    return (~inside).reshape(H, W).astype(np.uint8)


def cell_of(coord, origin=(0.0, 0.0), res: float = 0.5) -> tuple[int, int]:
    col = int(math.floor((coord[0] - origin[0]) / res))
    row = int(math.floor((coord[1] - origin[1]) / res))
    return row, col


def cell_center(row: int, col: int, origin=(0.0, 0.0), res: float = 0.5) -> tuple[float, float]:
    return origin[0] + (col + 0.5) * res, origin[1] + (row + 0.5) * res


def encode_heatmap(coord, sigma: float, shape=(160, 160), origin=(0.0, 0.0),
                   res: float = 0.5) -> np.ndarray:
    """Normalized isotropic Gaussian bump at ``coord`` (sigma in meters)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    H, W = shape
    row, col = cell_of(coord, origin, res)
    if not (0 <= row < H and 0 <= col < W):
        raise IndexError(f"coordinate {tuple(coord)} outside the grid")
    xs = origin[0] + (np.arange(W) + 0.5) * res
    ys = origin[1] + (np.arange(H) + 0.5) * res
    gx = -((xs - coord[0]) ** 2) / (2 * sigma ** 2)
    gy = -((ys - coord[1]) ** 2) / (2 * sigma ** 2)
    logit = gy[:, None] + gx[None, :]
    g = np.exp(logit - logit.max())
    return g / g.sum()


def encode_marginals(coord, sigma: float, shape=(160, 160), origin=(0.0, 0.0),
                     res: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Row and column factors of ``encode_heatmap``; their outer product is the grid."""
    H, W = shape
    row, col = cell_of(coord, origin, res)
    if not (0 <= row < H and 0 <= col < W):
        raise IndexError(f"coordinate {tuple(coord)} outside the grid")
    xs = origin[0] + (np.arange(W) + 0.5) * res
    ys = origin[1] + (np.arange(H) + 0.5) * res
    gx = np.exp(-((xs - coord[0]) ** 2) / (2 * sigma ** 2))
    gy = np.exp(-((ys - coord[1]) ** 2) / (2 * sigma ** 2))
    return gy / gy.sum(), gx / gx.sum()


def decode_separable(rows, cols, origin=(0.0, 0.0), res: float = 0.5) -> np.ndarray:
    """Argmax decoding of grids given as outer products ``rows[t] x cols[t]``.

    For nonnegative factors the row-major argmax of the product is the pair of
    first argmaxes, so this matches ``decode_heatmap`` on the full grid.
    """
    rows, cols = np.asarray(rows), np.asarray(cols)
    r = np.argmax(rows, axis=-1)
    c = np.argmax(cols, axis=-1)
    return np.stack([origin[0] + (c + 0.5) * res, origin[1] + (r + 0.5) * res], axis=-1)


def decode_heatmap(grid, origin=(0.0, 0.0), res: float = 0.5) -> tuple[float, float]:
    """Center of the argmax cell (first in row-major order on ties)."""
    grid = np.asarray(grid)
    if not np.any(grid > 0):
        raise DegenerateHeatmapError("heatmap has no positive cell")
    row, col = np.unravel_index(int(np.argmax(grid)), grid.shape)
    return cell_center(row, col, origin, res)


@dataclass
class HeatmapSequence:
    maps: np.ndarray  # (delta, H, W)
    agent_id: int = -1

    def __post_init__(self):
        m = np.asarray(self.maps)
        if m.ndim != 3:
            raise ValueError("heatmap sequence must be (delta, H, W)")
        if np.any(m < 0):
            raise ValueError("likelihoods must be nonnegative")
        if not np.all(m.reshape(len(m), -1).max(axis=1) > 0):
            raise DegenerateHeatmapError("every step needs a positive cell")
        sums = m.reshape(len(m), -1).sum(axis=1)
        if not np.allclose(sums, 1.0, atol=1e-5):
            raise ValueError(f"heatmaps must sum to 1, got {sums.min():.6f}..{sums.max():.6f}")

    @property
    def delta(self) -> int:
        return len(self.maps)

    def decode(self, origin=(0.0, 0.0), res: float = 0.5) -> np.ndarray:
        return np.array([decode_heatmap(m, origin, res) for m in self.maps])


# -- tensor container ---------------------------------------------------------

_MAGIC = "RASTER1"


def save_tensor(path, data: np.ndarray, origin=(0.0, 0.0), res: float = 0.5, tau: int = 1) -> None:
    """Header line ``RASTER1 H W C tau ox oy res`` then row-major float32 (LE).

    ``data`` is ``(tau, H, W, C)`` or ``(H, W, C)``; heatmap sequences are
    stored as ``(H, W, delta)``.
    """
    arr = np.asarray(data, dtype="<f4")
    if arr.ndim == 3:
        arr = arr[None]
    t, H, W, C = arr.shape
    header = f"{_MAGIC} {H} {W} {C} {t} {origin[0]!r} {origin[1]!r} {res!r}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(arr).tobytes())


def load_tensor(path) -> tuple[np.ndarray, dict]:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    fields = raw[:nl].decode("ascii").split()
    if fields[0] != _MAGIC:
        raise ValueError(f"{path}: not a raster tensor file")
    H, W, C, t = (int(v) for v in fields[1:5])
    ox, oy, res = (float(v) for v in fields[5:8])
    arr = np.frombuffer(raw[nl + 1:], dtype="<f4")
    if arr.size != t * H * W * C:
        raise ValueError(f"{path}: expected {t * H * W * C} floats, found {arr.size}")
    return arr.reshape(t, H, W, C).copy(), {"H": H, "W": W, "C": C, "tau": t,
                                            "origin": (ox, oy), "res": res}


def plot_grid(grid, path, mask=None, title: str | None = None, points=None,
              origin=(0.0, 0.0), res: float = 0.5) -> None:
    """Write a PNG of ``grid`` with non-drivable cells (mask == 1) in gray.

    ``points`` is a list of ``(xy_meters, color)`` polylines drawn on top.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    g = np.asarray(grid, dtype=float)
    if g.ndim == 3:
        g = g.max(axis=-1) if g.shape[-1] > 1 else g[..., 0]
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(g, origin="lower", cmap="viridis", interpolation="nearest")
    if mask is not None:
        overlay = np.zeros(mask.shape + (4,))
        overlay[mask == 1] = (0.5, 0.5, 0.5, 0.6)
        ax.imshow(overlay, origin="lower", interpolation="nearest")
    if points is not None:
        for pts, color in points:
            pts = np.asarray(pts)
            ax.plot((pts[:, 0] - origin[0]) / res - 0.5, (pts[:, 1] - origin[1]) / res - 0.5,
                    ".-", ms=2, lw=0.5, color=color)
    if title:
        ax.set_title(title)
    ax.set_axis_off()
    fig.savefig(path, dpi=100, bbox_inches="tight")
    plt.close(fig)
