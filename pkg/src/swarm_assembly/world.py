"""Physical simulation: disc robots, synchronous ticks, motion, collisions
and the range-limited lossy broadcast channel."""

from __future__ import annotations

import copy
import json
import math
import struct
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Protocol, Sequence

import numpy as np

from .errors import ControllerError, NotInRange, UnknownRobot

TWO_PI = 2.0 * math.pi


class MotionCommand(IntEnum):
    STOP = 0
    FORWARD = 1
    TURN_LEFT_FORWARD = 2
    TURN_RIGHT_FORWARD = 3


_TURN = {
    MotionCommand.STOP: 0,
    MotionCommand.FORWARD: 0,
    MotionCommand.TURN_LEFT_FORWARD: 1,
    MotionCommand.TURN_RIGHT_FORWARD: -1,
}


def normalize_angle(theta: float) -> float:
    t = math.fmod(theta, TWO_PI)
    if t < 0:
        t += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2*pi
    return 0.0 if t >= TWO_PI else t


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(self.heading))


@dataclass(frozen=True)
class RobotBody:
    id: int
    pose: Pose
    diameter: float


@dataclass(frozen=True)
class WorldConfig:
    """Physical parameters.

    Defaults: a 3.3 cm disc that drives one body length per simulated second
    and hears neighbours up to 10 cm away.
    """

    comm_radius: float = 0.10
    message_loss_prob: float = 0.0
    speed: float = 0.00165  # m / tick
    turn_rate: float = 0.15  # rad / tick
    motion_noise_std: float = 0.0  # m / tick, per axis
    heading_noise_std: float = 0.0  # rad / tick
    sensing_noise_std: float = 0.0  # m
    tick_duration: float = 0.05  # s
    robot_diameter: float = 0.033  # m
    rng_seed: int = 0
    collision_tolerance: float = 1e-9  # m
    collision_max_iterations: int = 50

    def __post_init__(self):
        if not self.comm_radius > 0:
            raise ValueError("comm_radius must be positive")
        if not 0.0 <= self.message_loss_prob <= 1.0:
            raise ValueError("message_loss_prob must be in [0, 1]")
        if min(self.motion_noise_std, self.heading_noise_std, self.sensing_noise_std) < 0:
            raise ValueError("noise std must be non-negative")
        if not self.tick_duration > 0:
            raise ValueError("tick_duration must be positive")
        if not self.robot_diameter > 0:
            raise ValueError("robot_diameter must be positive")
        if self.speed < 0 or self.turn_rate < 0:
            raise ValueError("speed and turn_rate must be non-negative")


def substream(seed: int, robot_id: int, tick: int) -> np.random.Generator:
    """Per-robot random stream keyed by (seed, robot id, tick)."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, robot_id, tick])


@dataclass
class WorldState:
    tick: int
    ids: tuple
    poses: np.ndarray  # (n, 3): x, y, heading
    config: WorldConfig
    rng: np.random.Generator
    moving: np.ndarray = None  # bool (n,), robots commanded to move in the last tick
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.poses = np.array(self.poses, dtype=float).reshape(-1, 3)
        self.ids = tuple(int(i) for i in self.ids)
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("robot ids must be unique")
        if len(self.ids) != len(self.poses):
            raise ValueError("one pose per robot id required")
        if self.moving is None:
            self.moving = np.zeros(len(self.ids), dtype=bool)
        self._index = {rid: k for k, rid in enumerate(self.ids)}

    @classmethod
    def create(cls, poses, config: WorldConfig, ids=None) -> WorldState:
        poses = [p if isinstance(p, Pose) else Pose(*p) for p in poses]
        ids = tuple(range(len(poses))) if ids is None else tuple(ids)
        arr = np.array([[p.x, p.y, p.heading] for p in poses], dtype=float).reshape(-1, 3)
        return cls(0, ids, arr, config, np.random.default_rng(config.rng_seed))

    def __len__(self):
        return len(self.ids)

    def index(self, robot_id: int) -> int:
        try:
            return self._index[robot_id]
        except KeyError:
            raise UnknownRobot(robot_id) from None

    @property
    def robots(self) -> list[RobotBody]:
        d = self.config.robot_diameter
        return [RobotBody(rid, Pose(*self.poses[k]), d) for k, rid in enumerate(self.ids)]

    def body(self, robot_id: int) -> RobotBody:
        k = self.index(robot_id)
        return RobotBody(robot_id, Pose(*self.poses[k]), self.config.robot_diameter)

    def copy(self) -> WorldState:
        return WorldState(
            self.tick,
            self.ids,
            self.poses.copy(),
            self.config,
            copy.deepcopy(self.rng),
            self.moving.copy(),
            dict(self.diagnostics),
        )

    def serialize(self) -> bytes:
        """Canonical byte form used for determinism checks."""
        head = struct.pack("<qq", self.tick, len(self.ids))
        ids = np.asarray(self.ids, dtype="<i8").tobytes()
        rng_state = json.dumps(self.rng.bit_generator.state, sort_keys=True).encode()
        return head + ids + self.poses.astype("<f8").tobytes() + self.moving.tobytes() + rng_state


# -- sensing and communication ---------------------------------------------


def pairwise_distances(world: WorldState) -> np.ndarray:
    xy = world.poses[:, :2]
    diff = xy[:, None, :] - xy[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def adjacency(world: WorldState, dist: np.ndarray | None = None) -> list[list[int]]:
    """Neighbour indices (not ids) for every robot, ascending."""
    if dist is None:
        dist = pairwise_distances(world)
    within = dist <= world.config.comm_radius
    np.fill_diagonal(within, False)
    return [np.flatnonzero(row).tolist() for row in within]


def comm_neighbors(world: WorldState, robot_id: int) -> set[int]:
    k = world.index(robot_id)
    d = np.hypot(*(world.poses[:, :2] - world.poses[k, :2]).T)
    mask = d <= world.config.comm_radius
    mask[k] = False
    return {world.ids[j] for j in np.flatnonzero(mask)}


def _deliveries(world: WorldState, messages, neighbors) -> list[list[int]]:
    """Sender indices heard by each receiver index, after loss, by sender id."""
    p = world.config.message_loss_prob
    ids = world.ids
    sorted_ids = all(ids[k] < ids[k + 1] for k in range(len(ids) - 1))
    order = range(len(ids)) if sorted_ids else sorted(range(len(ids)), key=lambda k: ids[k])
    heard = [[] for _ in ids]
    for k in order:
        srcs = neighbors[k] if sorted_ids else sorted(neighbors[k], key=lambda j: ids[j])
        heard[k] = [j for j in srcs if messages.get(ids[j]) is not None]
    if 0.0 < p < 1.0:
        total = sum(len(h) for h in heard)
        keep = world.rng.random(total) >= p
        pos = 0
        for k in order:
            n = len(heard[k])
            heard[k] = [j for j, ok in zip(heard[k], keep[pos : pos + n]) if ok]
            pos += n
    elif p >= 1.0:
        heard = [[] for _ in ids]
    return heard


def broadcast(world: WorldState, messages, neighbors: list[list[int]] | None = None) -> dict:
    """Deliver each robot's outgoing message to its neighbours.

    ``messages`` maps robot id to a message (``None`` sends nothing). Each
    delivery is dropped independently with ``message_loss_prob``; drops are
    drawn from ``world.rng`` (advanced in place) in ascending
    (receiver, sender) order. Inboxes are lists sorted by sender id.
    """
    if neighbors is None:
        neighbors = adjacency(world)
    ids = world.ids
    heard = _deliveries(world, messages, neighbors)
    return {ids[k]: [messages[ids[j]] for j in heard[k]] for k in range(len(ids))}


def measure_distance(world: WorldState, a: int, b: int, rng: np.random.Generator | None = None) -> float:
    ka, kb = world.index(a), world.index(b)
    true = float(np.hypot(*(world.poses[ka, :2] - world.poses[kb, :2])))
    if true > world.config.comm_radius:
        raise NotInRange(f"robots {a} and {b} are {true:.4f} m apart")
    std = world.config.sensing_noise_std
    if std > 0:
        if rng is None:
            rng = substream(world.config.rng_seed, a, world.tick)
        true += rng.normal(0.0, std)
    return max(true, 0.0)


# -- motion ---------------------------------------------------------------


def apply_motion(body: RobotBody, cmd: MotionCommand, config: WorldConfig, rng=None) -> RobotBody:
    """Noisy unicycle step. STOP is an exact no-op."""
    cmd = MotionCommand(cmd)
    if cmd == MotionCommand.STOP:
        return body
    pose = body.pose
    heading = pose.heading + _TURN[cmd] * config.turn_rate
    dx = config.speed * math.cos(heading)
    dy = config.speed * math.sin(heading)
    if config.motion_noise_std > 0 or config.heading_noise_std > 0:
        if rng is None:
            raise ValueError("rng required when motion noise is enabled")
        n = rng.normal(0.0, 1.0, 3)
        heading += config.heading_noise_std * n[0]
        dx += config.motion_noise_std * n[1]
        dy += config.motion_noise_std * n[2]
    return replace(body, pose=Pose(pose.x + dx, pose.y + dy, heading))


def resolve_collisions(world: WorldState) -> WorldState:
    """Push overlapping discs apart along their centre line.

    Robots with ``moving`` False are immovable. A moving robot takes the whole
    correction against an immovable one and half of it against another mover.
    Pairs are corrected one at a time (movers by index, partners by index),
    and sweeps repeat until the worst overlap involving a mover is within
    tolerance or the iteration cap is hit. The final worst overlap over all
    pairs is stored in ``diagnostics['residual_overlap']``.
    """
    return _resolve_in_place(world.copy())


def _resolve_in_place(out: WorldState) -> WorldState:
    cfg = out.config
    d = cfg.robot_diameter
    tol = cfg.collision_tolerance
    xy = out.poses[:, :2]
    moving = out.moving
    movers = np.flatnonzero(moving)
    iterations = 0
    if len(movers):
        for iterations in range(1, cfg.collision_max_iterations + 1):
            worst = 0.0
            for i in movers:
                diff = xy[i] - xy
                dist = np.sqrt((diff**2).sum(axis=1))
                dist[i] = np.inf
                for j in np.flatnonzero(d - dist > tol):
                    v = xy[i] - xy[j]
                    r = math.hypot(v[0], v[1])
                    overlap = d - r
                    if overlap <= tol:
                        continue
                    worst = max(worst, overlap)
                    if r < 1e-15:
                        u = np.array([1.0 if out.ids[i] > out.ids[j] else -1.0, 0.0])
                    else:
                        u = v / r
                    if moving[j]:
                        xy[i] += 0.5 * overlap * u
                        xy[j] -= 0.5 * overlap * u
                    else:
                        xy[i] += overlap * u
            if worst <= tol:
                break
        out.poses[:, :2] = xy
    full = pairwise_distances(out)
    np.fill_diagonal(full, np.inf)
    residual = float(max(0.0, (d - full).max())) if len(out) > 1 else 0.0
    out.diagnostics["residual_overlap"] = residual
    out.diagnostics["collision_iterations"] = iterations
    return out


# -- tick composition -----------------------------------------------------


class Controller(Protocol):
    def outgoing(self): ...

    def act(self, inbox: list, sensing: dict, tick: int) -> MotionCommand: ...


def step(world: WorldState, controllers: Sequence[Controller] | dict) -> WorldState:
    """Advance one synchronous tick.

    Phase order: collect messages, broadcast, run controllers on inboxes and
    range readings, integrate motion, resolve collisions, bump the tick.
    ``controllers`` is indexed like ``world.ids`` or keyed by robot id.
    """
    out = world.copy()
    cfg = out.config
    ids = out.ids
    if isinstance(controllers, dict):
        ctrls = [controllers[rid] for rid in ids]
    else:
        ctrls = list(controllers)
        if len(ctrls) != len(ids):
            raise ValueError("one controller per robot required")

    messages = {}
    for rid, c in zip(ids, ctrls):
        try:
            messages[rid] = c.outgoing()
        except Exception as exc:
            raise ControllerError(rid, out.tick, exc) from exc

    dist = pairwise_distances(out)
    neighbors = adjacency(out, dist)
    heard = _deliveries(out, messages, neighbors)

    noisy_sensing = cfg.sensing_noise_std > 0
    noisy_motion = cfg.motion_noise_std > 0 or cfg.heading_noise_std > 0
    commands = []
    for k, (rid, c) in enumerate(zip(ids, ctrls)):
        src = heard[k]
        inbox = [messages[ids[j]] for j in src]
        row = dist[k]
        if noisy_sensing:
            rng = substream(cfg.rng_seed, rid, out.tick)
            sensing = {ids[j]: float(max(row[j] + rng.normal(0.0, cfg.sensing_noise_std), 0.0)) for j in src}
        else:
            sensing = {ids[j]: float(row[j]) for j in src}
        try:
            commands.append(MotionCommand(c.act(inbox, sensing, out.tick)))
        except Exception as exc:
            raise ControllerError(rid, out.tick, exc) from exc

    moving = np.array([cmd != MotionCommand.STOP for cmd in commands], dtype=bool)
    d = cfg.robot_diameter
    for k, cmd in enumerate(commands):
        if cmd == MotionCommand.STOP:
            continue
        rng = substream(cfg.rng_seed ^ 0x5EED, ids[k], out.tick) if noisy_motion else None
        body = RobotBody(ids[k], Pose(*out.poses[k]), d)
        p = apply_motion(body, cmd, cfg, rng).pose
        out.poses[k] = (p.x, p.y, p.heading)
    out.moving = moving
    out = _resolve_in_place(out)
    out.tick += 1
    return out
