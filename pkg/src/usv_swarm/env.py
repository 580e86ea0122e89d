"""Episodic trash-collection world for a swarm of USVs.

``reset`` builds a fresh :class:`WorldState`; ``step`` advances it in place and
returns it together with a :class:`StepResult`. The reward is one scalar shared
by the whole team.

Observation layout per agent (length ``9 + lidar_beams``)::

    0  2*x/W - 1
    1  2*y/H - 1
    2  cos(heading)
    3  sin(heading)
    4  left propeller command
    5  right propeller command
    6  surge speed / max surge speed   (clamped to [-1, 1])
    7  yaw rate / max yaw rate         (clamped to [-1, 1])
    8 .. 8+K-1  lidar range / lidar_max_range, beam k at heading + 2*pi*k/K
    8+K        1.0 if any active trash lies within detect_radius else 0.0
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import VesselParams, VesselState, clamp_action, step_vessel
from .rewards import RewardWeights, compute_reward, coordination_term

MAX_PLACEMENT_ATTEMPTS = 10_000
OBS_BASE_LEN = 9


class EpisodeFinishedError(RuntimeError):
    pass


@dataclass(frozen=True)
class WorldConfig:
    arena_width: float = 40.0
    arena_height: float = 40.0
    n_agents: int = 3
    n_trash: int = 6
    trash_radius: float = 0.2
    collect_radius: float = 1.0
    detect_radius: float = 8.0
    lidar_beams: int = 16
    lidar_max_range: float = 20.0
    max_steps: int = 1000
    dt: float = 0.1
    vessel: VesselParams = field(default_factory=VesselParams)
    reward_weights: RewardWeights = field(default_factory=RewardWeights)
    seed: int = 0

    def __post_init__(self):
        positive = ("arena_width", "arena_height", "trash_radius", "collect_radius",
                    "detect_radius", "lidar_max_range", "dt")
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")
        if self.n_agents < 1:
            raise ValueError("n_agents must be at least 1")
        if self.n_trash < 0:
            raise ValueError("n_trash must be non-negative")
        if self.lidar_beams < 1 or self.max_steps < 1:
            raise ValueError("lidar_beams and max_steps must be at least 1")
        if self.collect_radius < self.trash_radius:
            raise ValueError("collect_radius must be at least trash_radius")
        h = self.vessel.hull_radius
        if 2 * h >= min(self.arena_width, self.arena_height):
            raise ValueError("arena is narrower than one hull")

    @property
    def obs_len(self) -> int:
        return OBS_BASE_LEN + self.lidar_beams

    @property
    def d_max(self) -> float:
        d = self.reward_weights.d_max
        return math.hypot(self.arena_width, self.arena_height) if d is None else d


@dataclass
class WorldState:
    config: WorldConfig
    vessels: list[VesselState]
    trash_xy: np.ndarray          # (n_trash, 2)
    trash_active: np.ndarray      # (n_trash,) bool
    rng: np.random.Generator
    step_index: int = 0
    done: bool = False
    collected_count: int = 0
    collision_count: int = 0
    wall_hit_count: int = 0

    @property
    def positions(self) -> list[tuple[float, float]]:
        return [(v.x, v.y) for v in self.vessels]

    def clone(self) -> "WorldState":
        return copy.deepcopy(self)


@dataclass
class StepResult:
    observations: list[np.ndarray]
    reward: float
    done: bool
    info: dict


def start_positions(config: WorldConfig) -> list[tuple[float, float]]:
    n = config.n_agents
    y = config.vessel.hull_radius + 0.5
    return [(config.arena_width * (i + 1) / (n + 1), y) for i in range(n)]


def reset(config: WorldConfig, seed: int | None = None) -> tuple[WorldState, list[np.ndarray]]:
    seed = config.seed if seed is None else seed
    rng = np.random.Generator(np.random.PCG64(seed))
    vessels = [VesselState(x=x, y=y, heading=math.pi / 2) for x, y in start_positions(config)]
    min_sep = 2.0 * (config.trash_radius + config.vessel.hull_radius)
    lo = config.trash_radius
    placed: list[tuple[float, float]] = []
    attempts = 0
    while len(placed) < config.n_trash:
        if attempts >= MAX_PLACEMENT_ATTEMPTS:
            raise ValueError(f"could not place {config.n_trash} trash items in a "
                             f"{config.arena_width}x{config.arena_height} arena")
        attempts += 1
        x = rng.uniform(lo, config.arena_width - lo)
        y = rng.uniform(lo, config.arena_height - lo)
        if all(math.hypot(x - px, y - py) >= min_sep for px, py in placed) and \
                all(math.hypot(x - v.x, y - v.y) >= min_sep for v in vessels):
            placed.append((x, y))
    world = WorldState(
        config=config,
        vessels=vessels,
        trash_xy=np.array(placed, dtype=np.float64).reshape(-1, 2),
        trash_active=np.ones(config.n_trash, dtype=bool),
        rng=rng,
    )
    return world, build_observations(world)


def _clip_to_arena(v: VesselState, config: WorldConfig, agent: int, hits: list):
    h = config.vessel.hull_radius
    x, y = v.x, v.y
    walls = []
    if x < h:
        x = h
        walls.append("west")
    elif x > config.arena_width - h:
        x = config.arena_width - h
        walls.append("east")
    if y < h:
        y = h
        walls.append("south")
    elif y > config.arena_height - h:
        y = config.arena_height - h
        walls.append("north")
    if not walls:
        return v
    hits.extend((agent, w) for w in walls)
    # surge-only hull: any motion into the wall is stopped outright
    return VesselState(x, y, v.heading, 0.0, v.r, v.prop_left, v.prop_right)


def detect_collisions(world: WorldState) -> list[tuple[int, int]]:
    limit = 2.0 * world.config.vessel.hull_radius
    vs = world.vessels
    pairs = []
    for i in range(len(vs)):
        for j in range(i + 1, len(vs)):
            if math.hypot(vs[i].x - vs[j].x, vs[i].y - vs[j].y) < limit:
                pairs.append((i, j))
    return pairs


def pairwise_distances(positions) -> list[float]:
    out = []
    for i in range(len(positions)):
        for j in range(i + 1, len(positions)):
            out.append(math.hypot(positions[i][0] - positions[j][0],
                                  positions[i][1] - positions[j][1]))
    return out


def step(world: WorldState, joint_action) -> tuple[WorldState, StepResult]:
    """Advance every vessel by one tick. Mutates and returns ``world``."""
    cfg = world.config
    if world.done:
        raise EpisodeFinishedError("episode already finished; call reset()")
    actions = np.asarray(joint_action, dtype=np.float64)
    if actions.shape != (cfg.n_agents, 2):
        raise ValueError(f"joint action must have shape ({cfg.n_agents}, 2), got {actions.shape}")
    clamped = [clamp_action(a) for a in actions]

    wall_hits: list[tuple[int, str]] = []
    world.vessels = [
        _clip_to_arena(step_vessel(v, a, cfg.vessel, cfg.dt), cfg, i, wall_hits)
        for i, (v, a) in enumerate(zip(world.vessels, clamped))
    ]

    collected, credited = [], []
    for k in np.flatnonzero(world.trash_active):
        tx, ty = world.trash_xy[k]
        dists = [math.hypot(v.x - tx, v.y - ty) for v in world.vessels]
        best = min(range(len(dists)), key=lambda i: (dists[i], i))
        if dists[best] <= cfg.collect_radius:
            world.trash_active[k] = False
            collected.append(int(k))
            credited.append(best)

    pairs = detect_collisions(world)
    positions = world.positions
    reward = compute_reward(len(collected), len(pairs) + len(wall_hits), positions,
                            cfg.reward_weights, d_max=cfg.d_max)

    world.step_index += 1
    world.collected_count += len(collected)
    world.collision_count += len(pairs)
    world.wall_hit_count += len(wall_hits)
    world.done = bool(not world.trash_active.any() or world.step_index >= cfg.max_steps)

    info = {
        "collected_ids": collected,
        "collected_by": credited,
        "collision_pairs": pairs,
        "wall_hits": wall_hits,
        "pairwise_distances": pairwise_distances(positions),
        "coordination": coordination_term(positions, cfg.d_max),
    }
    observations = build_observations(world)
    return world, StepResult(observations, reward, world.done, info)


def _ray_disc_hits(ox, oy, dx, dy, cx, cy, radius):
    """Entry distance along each ray into each disc; inf on a miss, 0 from inside.

    Origins ``ox, oy`` have shape (A, 1, 1), directions (A, K, 1), disc centers
    (A, 1, M) so every agent/beam/disc triple is evaluated elementwise.
    """
    fx = ox - cx
    fy = oy - cy
    c = fx * fx + fy * fy - radius * radius
    b = dx * fx + dy * fy
    disc = b * b - c
    with np.errstate(invalid="ignore"):
        t = -b - np.sqrt(disc)
    out = np.where((disc >= 0) & (t >= 0), t, np.inf)
    return np.where(c <= 0, 0.0, out)


def _ray_wall_hits(ox, oy, dx, dy, width, height):
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(dx > 0, (width - ox) / dx, np.where(dx < 0, -ox / dx, np.inf))
        ty = np.where(dy > 0, (height - oy) / dy, np.where(dy < 0, -oy / dy, np.inf))
    return np.maximum(np.minimum(tx, ty), 0.0)


def beam_angles(heading, n_beams: int) -> np.ndarray:
    return np.asarray(heading)[..., None] + 2.0 * np.pi * np.arange(n_beams) / n_beams


def _scan(world: WorldState, agents) -> np.ndarray:
    cfg = world.config
    xs = np.array([v.x for v in world.vessels])
    ys = np.array([v.y for v in world.vessels])
    hs = np.array([v.heading for v in world.vessels])
    agents = np.asarray(agents)
    ox = xs[agents][:, None, None]
    oy = ys[agents][:, None, None]
    ang = beam_angles(hs[agents], cfg.lidar_beams)[:, :, None]
    dx, dy = np.cos(ang), np.sin(ang)
    ranges = _ray_wall_hits(ox, oy, dx, dy, cfg.arena_width, cfg.arena_height)[:, :, 0]
    trash = world.trash_xy[world.trash_active]
    if len(trash):
        t = _ray_disc_hits(ox, oy, dx, dy, trash[None, None, :, 0], trash[None, None, :, 1],
                           cfg.trash_radius)
        ranges = np.minimum(ranges, t.min(axis=2))
    if len(world.vessels) > 1:
        h = _ray_disc_hits(ox, oy, dx, dy, xs[None, None, :], ys[None, None, :],
                           cfg.vessel.hull_radius)
        # a vessel never sees its own hull
        h[np.arange(len(agents)), :, agents] = np.inf
        ranges = np.minimum(ranges, h.min(axis=2))
    return np.minimum(ranges, cfg.lidar_max_range)


def lidar_scan(world: WorldState, agent_index: int) -> np.ndarray:
    """Exact range to the nearest trash disc, other hull or wall along each beam."""
    if not 0 <= agent_index < len(world.vessels):
        raise IndexError(f"no agent {agent_index}")
    return _scan(world, [agent_index])[0]


def trash_detected(world: WorldState, agent_index: int) -> bool:
    me = world.vessels[agent_index]
    trash = world.trash_xy[world.trash_active]
    if not len(trash):
        return False
    d = np.hypot(trash[:, 0] - me.x, trash[:, 1] - me.y)
    return bool(np.any(d <= world.config.detect_radius))


def _proprio(world: WorldState, agent_index: int) -> list[float]:
    cfg = world.config
    v = world.vessels[agent_index]
    return [
        2.0 * v.x / cfg.arena_width - 1.0,
        2.0 * v.y / cfg.arena_height - 1.0,
        math.cos(v.heading),
        math.sin(v.heading),
        v.prop_left,
        v.prop_right,
        min(max(v.u / cfg.vessel.max_surge_speed, -1.0), 1.0),
        min(max(v.r / cfg.vessel.max_yaw_rate, -1.0), 1.0),
    ]


def build_observation(world: WorldState, agent_index: int) -> np.ndarray:
    if not 0 <= agent_index < len(world.vessels):
        raise IndexError(f"no agent {agent_index}")
    lidar = lidar_scan(world, agent_index) / world.config.lidar_max_range
    flag = 1.0 if trash_detected(world, agent_index) else 0.0
    return np.concatenate([_proprio(world, agent_index), lidar, [flag]])


def build_observations(world: WorldState) -> list[np.ndarray]:
    """All agents at once; row i equals ``build_observation(world, i)`` exactly."""
    n = len(world.vessels)
    lidar = _scan(world, range(n)) / world.config.lidar_max_range
    return [np.concatenate([_proprio(world, i), lidar[i], [1.0 if trash_detected(world, i) else 0.0]])
            for i in range(n)]
