"""Synthetic four-way intersections and kinematic agent tracks.

Worlds are centered at the intersection center (world origin). Arms are
stored in zone order: arm ``k`` feeds zone ``k + 1``, enumerated clockwise
starting from the ego's approach arm. Zone ``G`` (= 5) is the interior box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import Point, Polygon, box
from shapely.ops import unary_union

FPS = 10
DT = 1.0 / FPS

MANEUVERS = ("straight", "left", "right", "uturn", "stop-then-go", "parked")
TURNING = ("left", "right", "uturn")

ZONE_DISTANCE = 20.0  # arm distance where outbound zones begin
MIN_TURN_RADIUS = 1.5
EXTENT_MARGIN = 1.0


class LayoutError(ValueError):
    pass


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class Arm:
    heading: float  # direction pointing away from the center, rad
    lane_width: float
    lane_count: int = 1

    @property
    def half_width(self) -> float:
        return self.lane_width * self.lane_count

    @property
    def axis(self) -> np.ndarray:
        return np.array([math.cos(self.heading), math.sin(self.heading)])

    @property
    def normal(self) -> np.ndarray:
        # left normal of the outward axis; inbound traffic drives on this side
        return np.array([-math.sin(self.heading), math.cos(self.heading)])

    def point(self, s: float, lateral: float) -> np.ndarray:
        return s * self.axis + lateral * self.normal


@dataclass
class WorldLayout:
    size: int
    res: float
    arms: list[Arm]
    drivable: np.ndarray  # uint8, 1 = NOT drivable
    zone_polygons: list[Polygon]
    box_half: float
    texture_seed: int

    @property
    def G(self) -> int:
        return len(self.zone_polygons)

    @property
    def extent(self) -> float:
        return self.size * self.res

    @property
    def origin(self) -> tuple[float, float]:
        half = self.extent / 2
        return (-half, -half)

    @property
    def road(self):
        return unary_union([_arm_polygon(a, self.extent) for a in self.arms])

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        ox, oy = self.origin
        c = (np.arange(self.size) + 0.5) * self.res
        xs, ys = np.meshgrid(ox + c, oy + c)
        return xs, ys

    def in_extent(self, xy, margin: float = 0.0) -> bool:
        half = self.extent / 2 - margin
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return bool(np.all(np.abs(xy) <= half))

    def is_drivable(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return shapely.contains_xy(self.road, xy[:, 0], xy[:, 1])


@dataclass
class AgentTrack:
    agent_id: int
    states: np.ndarray  # (T, 5): t, x, y, heading, speed
    maneuver: str
    goal_zone: int

    @property
    def frames(self) -> np.ndarray:
        return self.states[:, 0].astype(int)

    @property
    def xy(self) -> np.ndarray:
        return self.states[:, 1:3]

    def pose_at(self, t: int) -> tuple[float, float, float]:
        idx = np.flatnonzero(self.frames == t)
        if idx.size == 0:
            raise IndexError(f"agent {self.agent_id} has no state at frame {t}")
        s = self.states[idx[0]]
        return float(s[1]), float(s[2]), float(s[3])

    def window(self, start: int, stop: int) -> np.ndarray:
        """Positions for frames ``start..stop-1``; raises if any is missing."""
        f = self.frames
        if start < f[0] or stop - 1 > f[-1]:
            raise IndexError(f"frames {start}..{stop - 1} outside track {f[0]}..{f[-1]}")
        return self.xy[start - f[0]:stop - f[0]]


@dataclass
class Scenario:
    layout: WorldLayout
    tracks: list[AgentTrack]
    ego_id: int
    seed: int

    def track(self, agent_id: int) -> AgentTrack:
        for tr in self.tracks:
            if tr.agent_id == agent_id:
                return tr
        raise KeyError(agent_id)

    @property
    def ego(self) -> AgentTrack:
        return self.track(self.ego_id)

    @property
    def n_frames(self) -> int:
        return max(len(t.states) for t in self.tracks) if self.tracks else 0


def _arm_polygon(arm: Arm, extent: float) -> Polygon:
    far = extent  # comfortably past the square's corner
    hw = arm.half_width
    corners = [arm.point(-hw, -hw), arm.point(far, -hw), arm.point(far, hw), arm.point(-hw, hw)]
    return Polygon(corners)


def _angle_diff(a: float, b: float) -> float:
    return (a - b + math.pi) % (2 * math.pi) - math.pi


def make_intersection(
    headings,
    lane_width: float = 3.5,
    seed: int = 0,
    ego_arm: int = 0,
    lane_count: int = 1,
    size: int = 160,
    res: float = 0.5,
) -> WorldLayout:
    """Build a four-way intersection with five goal zones.

    ``headings`` are outward arm directions; ``ego_arm`` indexes the arm the
    ego approaches on, which becomes zone 1. The other arms follow clockwise.
    """
    headings = [float(h) % (2 * math.pi) for h in headings]
    if len(headings) != 4:
        raise LayoutError("an intersection needs exactly four arms")
    if lane_width <= 0:
        raise LayoutError("lane_width must be positive")
    for i in range(4):
        for j in range(i + 1, 4):
            if abs(_angle_diff(headings[i], headings[j])) < 1e-9:
                raise LayoutError("arm headings must be distinct modulo 2*pi")

    ref = headings[ego_arm]
    order = sorted(range(4), key=lambda k: (ref - headings[k]) % (2 * math.pi))
    arms = [Arm(headings[k], lane_width, lane_count) for k in order]

    hw = lane_width * lane_count
    box_half = hw + 1.5
    extent = size * res
    if ZONE_DISTANCE + 2 * hw > extent / 2:
        raise LayoutError("extent too small for the zone layout")

    square = box(-extent / 2, -extent / 2, extent / 2, extent / 2)
    zones = []
    for arm in arms:
        far = extent
        poly = Polygon([arm.point(ZONE_DISTANCE, -hw), arm.point(far, -hw),
                        arm.point(far, hw), arm.point(ZONE_DISTANCE, hw)])
        zones.append(poly.intersection(square))
    a0 = arms[0]
    zones.append(Polygon([a0.point(-box_half, -box_half), a0.point(box_half, -box_half),
                          a0.point(box_half, box_half), a0.point(-box_half, box_half)]))
    for i in range(len(zones)):
        for j in range(i + 1, len(zones)):
            if zones[i].intersects(zones[j]):
                raise LayoutError(f"arms overlap: zones {i + 1} and {j + 1} intersect")
    # each arm must leave the interior box before reaching its neighbours
    for i in range(4):
        sep = abs(_angle_diff(arms[i].heading, arms[(i + 1) % 4].heading))
        if box_half * math.sin(min(sep, math.pi / 2)) < hw:
            raise LayoutError("arms too close: no interior box")

    layout = WorldLayout(size=size, res=res, arms=arms, drivable=np.zeros((size, size), np.uint8),
                         zone_polygons=zones, box_half=box_half, texture_seed=int(seed))
    xs, ys = layout.cell_centers()
    inside = shapely.contains_xy(layout.road, xs.ravel(), ys.ravel()).reshape(size, size)
    layout.drivable = (~inside).astype(np.uint8)
    return layout


def zone_assign(position, layout: WorldLayout) -> int:
    """Zone id (1..G) containing ``position``; nearest zone when in none.

    Equidistant candidates resolve to the lowest id.
    """
    p = Point(float(position[0]), float(position[1]))
    for zid, poly in enumerate(layout.zone_polygons, start=1):
        if poly.covers(p):
            return zid
    dists = np.array([poly.distance(p) for poly in layout.zone_polygons])
    return int(np.flatnonzero(dists <= dists.min() + 1e-9)[0]) + 1


# -- paths -----------------------------------------------------------------


class _Path:
    """Piecewise line/arc path parameterised by arc length."""

    def __init__(self):
        self.segments: list[tuple] = []
        self.lengths: list[float] = []

    def add_line(self, p0, direction, length):
        d = np.asarray(direction, float)
        d = d / np.linalg.norm(d)
        self.segments.append(("line", np.asarray(p0, float), d))
        self.lengths.append(float(length))

    def add_arc(self, center, radius, start_angle, sweep):
        self.segments.append(("arc", np.asarray(center, float), radius, start_angle, sweep))
        self.lengths.append(abs(sweep) * radius)

    @property
    def length(self) -> float:
        return sum(self.lengths)

    def evaluate(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s, float)
        pos = np.empty(s.shape + (2,))
        head = np.empty(s.shape)
        starts = np.concatenate([[0.0], np.cumsum(self.lengths)])
        # below 0 / beyond the end extrapolate along the first / last segment
        seg_idx = np.clip(np.searchsorted(starts, s, side="right") - 1, 0, len(self.segments) - 1)
        for k, seg in enumerate(self.segments):
            m = seg_idx == k
            if not np.any(m):
                continue
            u = s[m] - starts[k]
            if seg[0] == "line":
                _, p0, d = seg
                pos[m] = p0 + u[:, None] * d
                head[m] = math.atan2(d[1], d[0])
            else:
                _, c, r, a0, sweep = seg
                sign = 1.0 if sweep > 0 else -1.0
                ang = a0 + sign * u / r
                pos[m] = c + r * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
                head[m] = ang + sign * math.pi / 2
        return pos, np.mod(head + math.pi, 2 * math.pi) - math.pi


def _cross(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _line_intersection(p, d, q, e):
    """Return (a, b) with p + a d = q + b e, or None for parallel lines."""
    m = np.array([[d[0], -e[0]], [d[1], -e[1]]])
    det = np.linalg.det(m)
    if abs(det) < 1e-12:
        return None
    a, b = np.linalg.solve(m, q - p)
    return float(a), float(b)


EXIT_OFFSET = {"straight": 2, "left": 1, "right": 3, "uturn": 0, "stop-then-go": 2}


def _build_path(layout: WorldLayout, maneuver: str, entry_arm: int, lateral: float,
                approach: float) -> tuple[_Path, float]:
    """Path from arm distance ``approach`` on the inbound lane; returns the
    path and the arc length where the inbound lane meets the stop line."""
    arm_in = layout.arms[entry_arm]
    arm_out = layout.arms[(entry_arm + EXIT_OFFSET[maneuver]) % 4]
    o = arm_in.lane_width / 2
    far = layout.extent
    d_in = -arm_in.axis
    start = arm_in.point(approach, o + lateral)
    s_stop_line = approach - layout.box_half
    d_out = arm_out.axis
    out_anchor = arm_out.point(0.0, -(arm_out.lane_width / 2))
    path = _Path()

    if maneuver == "uturn":
        # semicircle between the inbound lane and the same arm's outbound lane
        center = arm_in.point(layout.box_half, lateral / 2)
        r = o + lateral / 2
        if r < MIN_TURN_RADIUS:
            raise GenerationError(f"u-turn radius {r:.2f} m below {MIN_TURN_RADIUS} m")
        t1 = arm_in.point(layout.box_half, o + lateral)
        path.add_line(start, d_in, s_stop_line)
        path.add_arc(center, r, math.atan2(*(t1 - center)[::-1]), math.pi)
        path.add_line(arm_in.point(layout.box_half, -o), arm_in.axis, far)
        return path, s_stop_line

    hit = _line_intersection(start, d_in, out_anchor, d_out)
    if hit is None:
        # opposite arms share one axis: keep the inbound lateral offset
        off = _cross(d_in, out_anchor - start)
        if np.dot(d_in, d_out) < 0 or abs(off) > arm_in.lane_width:
            raise GenerationError("parallel lanes do not connect")
        path.add_line(start, d_in, 2 * far)
        return path, s_stop_line

    a, _ = hit
    x = start + a * d_in
    alpha = math.atan2(_cross(d_in, d_out), float(np.dot(d_in, d_out)))
    if abs(alpha) < 1e-9:
        path.add_line(start, d_in, 2 * far)
        return path, s_stop_line
    along_stop = approach - layout.box_half
    tangent_len = a - along_stop
    if tangent_len <= 0:
        raise GenerationError("turn geometry places the corner behind the stop line")
    radius = tangent_len / math.tan(abs(alpha) / 2)
    if radius < MIN_TURN_RADIUS:
        raise GenerationError(f"turn radius {radius:.2f} m too tight")
    t1 = x - tangent_len * d_in
    t2 = x + tangent_len * d_out
    sign = 1.0 if alpha > 0 else -1.0
    left = np.array([-d_in[1], d_in[0]])
    center = t1 + sign * radius * left
    a0 = math.atan2(*(t1 - center)[::-1])
    path.add_line(start, d_in, along_stop)
    path.add_arc(center, radius, a0, sign * abs(alpha))
    path.add_line(t2, d_out, far)
    return path, s_stop_line


# -- speed profiles ---------------------------------------------------------


@dataclass
class SpeedProfile:
    """Longitudinal motion along the maneuver path.

    ``start_distance`` is the arm distance from the center at frame 0.
    ``lateral`` shifts the inbound lane line toward the curb (+) or center (-).
    """

    speed: float
    start_distance: float = 20.0
    wait_frames: int = 0
    lateral: float = 0.0
    brake: float = 3.0
    accel: float = 2.0


def _stop_and_go_distance(p: SpeedProfile, stop_at: float, n_frames: int) -> np.ndarray:
    t = np.arange(n_frames) * DT
    v = p.speed
    brake = max(p.brake, v * v / (2 * max(stop_at, 1e-6)))
    t_brake = max(0.0, (stop_at - v * v / (2 * brake)) / v)
    t_stop = t_brake + v / brake
    t_go = t_stop + p.wait_frames * DT
    s = np.where(t <= t_brake, v * t, 0.0)
    m = (t > t_brake) & (t <= t_stop)
    tb = t[m] - t_brake
    s[m] = v * t_brake + v * tb - 0.5 * brake * tb ** 2
    m = (t > t_stop) & (t <= t_go)
    s[m] = stop_at
    m = t > t_go
    tg = t[m] - t_go
    t_acc = v / p.accel
    s[m] = stop_at + np.where(tg <= t_acc, 0.5 * p.accel * tg ** 2,
                              0.5 * p.accel * t_acc ** 2 + v * (tg - t_acc))
    return s


def _sample_profile(maneuver: str, rng: np.random.Generator, layout: WorldLayout,
                    horizon: float = 6.0) -> SpeedProfile:
    half = layout.extent / 2
    if maneuver == "straight":
        v = rng.uniform(7.0, 10.0)
    elif maneuver == "left":
        v = rng.uniform(5.0, 7.5)
    elif maneuver == "right":
        v = rng.uniform(4.0, 6.0)
    elif maneuver == "uturn":
        v = rng.uniform(3.0, 4.5)
    elif maneuver == "stop-then-go":
        v = rng.uniform(5.0, 8.0)
    else:
        return SpeedProfile(0.0, start_distance=rng.uniform(6.0, half - 6.0))
    lateral = {"left": -0.5, "right": 0.5}.get(maneuver, 0.0) + rng.normal(0.0, 0.1)
    # leave room to clear the box and reach the exit zone before the horizon ends
    crossing = {"left": 10.0, "right": 5.0, "uturn": 6.0}.get(maneuver, 10.0)
    latest = horizon - (crossing + 12.0) / v
    t_turn = rng.uniform(0.5, max(0.6, min(3.5, latest)))
    start = min(layout.box_half + v * t_turn, half - 3.0)
    wait = int(rng.integers(5, 40)) if maneuver == "stop-then-go" else 0
    return SpeedProfile(v, start_distance=start, wait_frames=wait, lateral=lateral)


def _speeds_from_positions(xy: np.ndarray) -> np.ndarray:
    step = np.linalg.norm(np.diff(xy, axis=0), axis=1) / DT
    if step.size == 0:
        return np.zeros(len(xy))
    return np.concatenate([[step[0]], step])


def simulate_agent(
    layout: WorldLayout,
    maneuver: str,
    entry_arm: int,
    speed_profile: SpeedProfile | None = None,
    seed: int = 0,
    n_frames: int = 60,
    agent_id: int = 0,
    max_tries: int = 25,
) -> AgentTrack:
    """Simulate one agent; raises ``GenerationError`` when infeasible.

    With ``speed_profile`` given the maneuver is built exactly once; otherwise
    profiles are drawn from ``seed`` until one fits the layout.
    """
    if maneuver not in MANEUVERS:
        raise GenerationError(f"unknown maneuver {maneuver!r}")
    if not 0 <= entry_arm < len(layout.arms):
        raise GenerationError(f"entry arm {entry_arm} does not exist")
    rng = np.random.default_rng(seed)
    tries = 1 if speed_profile is not None else max_tries
    last_err = None
    expected = None
    if speed_profile is None and maneuver in EXIT_OFFSET and maneuver != "stop-then-go":
        expected = (entry_arm + EXIT_OFFSET[maneuver]) % 4 + 1
    for _ in range(tries):
        prof = speed_profile
        if prof is None:
            prof = _sample_profile(maneuver, rng, layout, horizon=n_frames * DT)
        try:
            track = _simulate(layout, maneuver, entry_arm, prof, n_frames, agent_id)
        except GenerationError as err:
            last_err = err
            continue
        if expected is None or track.goal_zone == expected:
            return track
        last_err = GenerationError(f"ended in zone {track.goal_zone}, not {expected}")
    raise GenerationError(f"{maneuver} from arm {entry_arm}: {last_err}")


def _simulate(layout, maneuver, entry_arm, prof: SpeedProfile, n_frames, agent_id) -> AgentTrack:
    arm = layout.arms[entry_arm]
    frames = np.arange(n_frames, dtype=float)
    if maneuver == "parked":
        p = arm.point(prof.start_distance, arm.lane_width / 2)
        xy = np.repeat(p[None], n_frames, axis=0)
        head = np.full(n_frames, math.atan2(-arm.axis[1], -arm.axis[0]))
        speed = np.zeros(n_frames)
    else:
        path, s_stop = _build_path(layout, maneuver, entry_arm, prof.lateral, prof.start_distance)
        if maneuver == "stop-then-go":
            s = _stop_and_go_distance(prof, max(s_stop - 0.5, 0.0), n_frames)
        else:
            s = prof.speed * frames * DT
        xy, head = path.evaluate(s)
        speed = _speeds_from_positions(xy)
    if not layout.in_extent(xy, margin=EXTENT_MARGIN):
        raise GenerationError("track leaves the extent")
    if not np.all(layout.is_drivable(xy)):
        raise GenerationError("track leaves the drivable region")
    states = np.column_stack([frames, xy, head, speed])
    return AgentTrack(agent_id, states, maneuver, zone_assign(xy[-1], layout))


# -- scenarios --------------------------------------------------------------


@dataclass
class GenConfig:
    count: int = 100
    seed: int = 0
    world_size: int = 160  # layout grid cells per side
    world_res: float = 0.5
    n_frames: int = 60
    lane_width: float = 3.5
    skew_deg: float = 12.0
    min_agents: int = 2
    max_agents: int = 5
    v_max: float = 12.0
    maneuver_weights: dict = field(default_factory=lambda: {
        "straight": 0.25, "left": 0.22, "right": 0.22, "uturn": 0.08,
        "stop-then-go": 0.13, "parked": 0.10})


def generate_scenario(seed: int, cfg: GenConfig | None = None, stratum: int | None = None) -> Scenario:
    """One seeded scenario. ``stratum`` pins the first non-ego agent's
    (maneuver, entry arm) so that a dataset covers every combination."""
    cfg = cfg or GenConfig()
    rng = np.random.default_rng(seed)
    theta0 = rng.uniform(0, 2 * math.pi)
    skew = math.radians(rng.uniform(-cfg.skew_deg, cfg.skew_deg))
    cross = math.pi / 2 + skew
    headings = [theta0, theta0 - cross, theta0 + math.pi, theta0 + math.pi - cross]
    layout = make_intersection(headings, cfg.lane_width, seed=int(rng.integers(2**31)),
                               ego_arm=0, size=cfg.world_size, res=cfg.world_res)

    ego_man = ("straight", "left", "right", "stop-then-go")[int(rng.integers(4))]
    tracks = []
    for _ in range(cfg.max_agents * 10):
        prof = _sample_profile(ego_man, rng, layout)
        prof.start_distance = rng.uniform(16.0, 24.0)
        try:
            ego = _simulate(layout, ego_man, 0, prof, cfg.n_frames, 0)
        except GenerationError:
            continue
        if ego_man == "stop-then-go" or ego.goal_zone == EXIT_OFFSET[ego_man] + 1:
            tracks.append(ego)
            break
    if not tracks:
        raise GenerationError(f"seed {seed}: no feasible ego track")

    names = list(cfg.maneuver_weights)
    weights = np.array([cfg.maneuver_weights[k] for k in names])
    weights = weights / weights.sum()
    n_agents = int(rng.integers(cfg.min_agents, cfg.max_agents + 1))
    for k in range(1, n_agents):
        if k == 1 and stratum is not None:
            man = MANEUVERS[stratum % len(MANEUVERS)]
            arm = (stratum // len(MANEUVERS)) % 4
        else:
            man = names[int(rng.choice(len(names), p=weights))]
            arm = int(rng.integers(4))
        try:
            tracks.append(simulate_agent(layout, man, arm, seed=int(rng.integers(2**31)),
                                         n_frames=cfg.n_frames, agent_id=k))
        except GenerationError:
            continue
    return Scenario(layout=layout, tracks=tracks, ego_id=0, seed=int(seed))


# -- synthetic sensor -------------------------------------------------------

SENSOR_RANGE = 35.0
ROAD_KEEP = 0.7
BOX_LENGTH, BOX_WIDTH, BOX_HEIGHT = 4.5, 1.8, 1.5


def road_texture(layout: WorldLayout) -> np.ndarray:
    """Per-cell road intensity: noisy asphalt plus bright center-line paint."""
    rng = np.random.default_rng(layout.texture_seed)
    tex = 0.25 + 0.15 * rng.random((layout.size, layout.size))
    xs, ys = layout.cell_centers()
    for arm in layout.arms:
        s = xs * arm.axis[0] + ys * arm.axis[1]
        n = xs * arm.normal[0] + ys * arm.normal[1]
        paint = (np.abs(n) <= layout.res / 2) & (s >= layout.box_half)
        tex[paint] = 0.9
    return np.where(layout.drivable == 0, tex, 0.0)


def road_points(layout: WorldLayout) -> np.ndarray:
    """Dense static road-surface points (x, y, height, intensity), 2x2 per cell."""
    tex = road_texture(layout)
    rows, cols = np.nonzero(layout.drivable == 0)
    ox, oy = layout.origin
    pts = []
    for fy in (0.25, 0.75):
        for fx in (0.25, 0.75):
            x = ox + (cols + fx) * layout.res
            y = oy + (rows + fy) * layout.res
            pts.append(np.column_stack([x, y, np.zeros_like(x), tex[rows, cols]]))
    return np.concatenate(pts) if pts else np.zeros((0, 4))


def agent_points(x: float, y: float, heading: float, intensity: float) -> np.ndarray:
    """Top surface of a vehicle box sampled every 0.25 m."""
    u = np.arange(-BOX_LENGTH / 2, BOX_LENGTH / 2 + 1e-9, 0.25)
    w = np.arange(-BOX_WIDTH / 2, BOX_WIDTH / 2 + 1e-9, 0.25)
    uu, ww = np.meshgrid(u, w)
    c, s = math.cos(heading), math.sin(heading)
    px = x + c * uu - s * ww
    py = y + s * uu + c * ww
    n = px.size
    return np.column_stack([px.ravel(), py.ravel(), np.full(n, BOX_HEIGHT), np.full(n, intensity)])


def render_synthetic_frames(scenario: Scenario, t0: int, tau: int) -> list[np.ndarray]:
    """Pseudo-LiDAR points in world coordinates for frames ``t0-tau+1..t0``."""
    if tau < 1:
        raise IndexError("tau must be >= 1")
    first = min((int(t.frames[0]) for t in scenario.tracks), default=0)
    last = max((int(t.frames[-1]) for t in scenario.tracks), default=None)
    # an empty scenario has no frame range; only the start bound applies
    if t0 - tau + 1 < first or (last is not None and t0 > last):
        raise IndexError(f"frames {t0 - tau + 1}..{t0} outside scenario {first}..{last}")
    road = road_points(scenario.layout)
    out = []
    for t in range(t0 - tau + 1, t0 + 1):
        rng = np.random.default_rng([scenario.seed, t])
        keep = rng.random(len(road)) < ROAD_KEEP
        try:
            ex, ey, _ = scenario.ego.pose_at(t)
            near = np.hypot(road[:, 0] - ex, road[:, 1] - ey) <= SENSOR_RANGE
            keep &= near
        except (KeyError, IndexError):
            pass
        chunks = [road[keep]]
        for tr in scenario.tracks:
            try:
                x, y, h = tr.pose_at(t)
            except IndexError:
                continue
            chunks.append(agent_points(x, y, h, 0.5 + 0.1 * (tr.agent_id % 4)))
        out.append(np.concatenate(chunks))
    return out
