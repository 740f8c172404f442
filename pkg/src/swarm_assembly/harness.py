"""Scenario configuration, initial placement, run orchestration, output
files and frame rendering.

A scenario is a flat ``key = value`` text file. Baseline runs start from a
harness-placed seed cluster and end with a harness sweep that flags the
robots left over (the two manual steps of the original system). Extended
runs start every robot in leader election and rely on the robots' own
completion detection; the harness only steps in on declared fallbacks.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .controller import ControllerConfig, ControllerState, Robot
from .errors import ConfigError, EmptyShape, MalformedInput, PlacementOverflow, ShapeError, SwarmAssemblyError
from .metrics import TERMINAL, MetricsReport, compute_report, snapshot_fill_ratio
from .protocol import SEED_CLUSTER_SIZE, Phase
from .shape import SQRT3_2, GridShape, contains, count_holes, hex_sites, load_shape_file
from .trace import Trace
from .world import Pose, WorldConfig, WorldState, step

MODES = ("baseline", "extended")
# orbit set-point and dead band used by scenarios that leave them unset, in
# diameters; a band that reaches below contact distance jams movers against
# the aggregate
ORBIT_DISTANCE = 1.03
ORBIT_BAND = 0.02
PLACEMENTS = ("aggregate", "random")


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    shape_file: str
    robot_count: int
    mode: str = "baseline"
    placement: str = "aggregate"
    world: WorldConfig = field(default_factory=WorldConfig)
    d_desired: float | None = None
    hysteresis: float | None = None
    cooldown: int = 30
    quiescence_window: int = 500
    stability_threshold: int = 3
    max_ticks: int = 200_000
    trace_stride: int = 100
    output_dir: str = "out"
    # harness knobs beyond the core fields
    cell_size: float | None = None  # defaults to the robot diameter
    completion_threshold: float = 0.95
    stall_window: int = 10_000  # baseline: ticks without a join before the sweep; 0 disables
    override_holes: bool = False
    arena: tuple | None = None  # (x0, y0, x1, y1) for random placement
    seed_positions: tuple | None = None  # four (x, y) seed sites, baseline
    pixels_per_cell: int = 20
    lattice_tolerance: float = 0.25

    def __post_init__(self):
        if self.robot_count < 1:
            raise ConfigError("robot_count must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")
        if self.max_ticks < 1:
            raise ConfigError("max_ticks must be >= 1")
        if self.trace_stride < 1:
            raise ConfigError("trace_stride must be >= 1")
        if self.stall_window < 0:
            raise ConfigError("stall_window must be >= 0")
        if self.seed_positions is not None and len(self.seed_positions) != SEED_CLUSTER_SIZE:
            raise ConfigError(f"seed_positions needs {SEED_CLUSTER_SIZE} points")

    @property
    def diameter(self) -> float:
        return self.world.robot_diameter

    @property
    def shape_cell_size(self) -> float:
        return self.diameter if self.cell_size is None else self.cell_size

    @property
    def seed(self) -> int:
        return self.world.rng_seed

    def with_seed(self, seed: int) -> ScenarioConfig:
        return dataclasses.replace(self, world=dataclasses.replace(self.world, rng_seed=int(seed)))

    def controller_config(self, seed_anchor=(0.0, 0.0)) -> ControllerConfig:
        d = self.diameter
        return ControllerConfig(
            robot_diameter=d,
            d_desired=ORBIT_DISTANCE * d if self.d_desired is None else self.d_desired,
            hysteresis=ORBIT_BAND * d if self.hysteresis is None else self.hysteresis,
            cooldown=self.cooldown,
            quiescence_window=self.quiescence_window,
            stability_threshold=self.stability_threshold,
            completion_detection=self.mode == "extended",
            seed_anchor=tuple(seed_anchor),
            lattice_tolerance=self.lattice_tolerance,
        )


_WORLD_KEYS = {f.name: f for f in fields(WorldConfig)}
_SCENARIO_KEYS = {f.name: f for f in fields(ScenarioConfig) if f.name != "world"}
_INT_KEYS = {"robot_count", "cooldown", "quiescence_window", "stability_threshold", "max_ticks", "trace_stride",
             "stall_window", "pixels_per_cell", "rng_seed", "collision_max_iterations"}
_BOOL_KEYS = {"override_holes"}
_STR_KEYS = {"shape_file", "mode", "placement", "output_dir"}


def _parse_bool(v: str) -> bool:
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _parse_points(v: str) -> tuple:
    pts = []
    for chunk in v.split(";"):
        if chunk.strip():
            x, y = (float(t) for t in chunk.split(","))
            pts.append((x, y))
    return tuple(pts)


def _convert(key: str, value: str):
    if key in _STR_KEYS:
        return value
    if key in _BOOL_KEYS:
        return _parse_bool(value)
    if key in _INT_KEYS:
        return int(value)
    if key == "arena":
        box = tuple(float(t) for t in value.split(","))
        if len(box) != 4:
            raise ValueError("arena needs x0,y0,x1,y1")
        return box
    if key == "seed_positions":
        return _parse_points(value)
    if value.lower() in ("none", ""):
        return None
    return float(value)


def parse_config(text: str, base_dir: str = ".", overrides: dict | None = None) -> ScenarioConfig:
    """Build a ScenarioConfig from ``key = value`` lines.

    Keys are the ScenarioConfig and WorldConfig field names; ``seed`` is an
    alias of ``rng_seed``. ``#`` starts a comment. A relative ``shape_file``
    is resolved against ``base_dir``. ``overrides`` (raw strings) win over
    the file.
    """
    raw: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {n}: expected 'key = value'")
        raw[key.strip()] = value.strip()
    for k, v in (overrides or {}).items():
        raw[k] = str(v)
    if "seed" in raw:
        raw["rng_seed"] = raw.pop("seed")
    world_kw, scen_kw = {}, {}
    for key, value in raw.items():
        if key not in _WORLD_KEYS and key not in _SCENARIO_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            conv = _convert(key, value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
        (world_kw if key in _WORLD_KEYS else scen_kw)[key] = conv
    for required in ("shape_file", "robot_count"):
        if required not in scen_kw:
            raise ConfigError(f"missing required key {required!r}")
    if not os.path.isabs(scen_kw["shape_file"]):
        scen_kw["shape_file"] = os.path.normpath(os.path.join(base_dir, scen_kw["shape_file"]))
    try:
        world = WorldConfig(**world_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad world parameters: {exc}") from None
    return ScenarioConfig(world=world, **scen_kw)


def load_config(path, overrides: dict | None = None) -> ScenarioConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)), overrides)


def config_to_text(config: ScenarioConfig) -> str:
    lines = []
    for f in fields(ScenarioConfig):
        if f.name == "world":
            for wf in fields(WorldConfig):
                lines.append(f"{wf.name} = {getattr(config.world, wf.name)}")
            continue
        v = getattr(config, f.name)
        if v is None:
            continue
        if f.name == "arena":
            v = ",".join(repr(x) for x in v)
        elif f.name == "seed_positions":
            v = ";".join(f"{x!r},{y!r}" for x, y in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def load_scenario_shape(config: ScenarioConfig) -> GridShape:
    try:
        return load_shape_file(config.shape_file, config.shape_cell_size)
    except OSError as exc:
        raise ShapeError(f"cannot read shape {config.shape_file}: {exc}") from None
    except (MalformedInput, EmptyShape) as exc:
        raise ShapeError(f"{config.shape_file}: {exc}") from None


# -- placement ------------------------------------------------------------------


def hex_points(count: int, diameter: float, anchor=(0.0, 0.0), keep=None) -> list[tuple[float, float]]:
    """The ``count`` hex-lattice points nearest ``anchor`` that pass ``keep``.

    Rows run along x with odd rows shifted by half a pitch; ties in distance
    are broken by polar angle, so the result is deterministic.
    """
    if count <= 0:
        return []
    ax, ay = anchor
    dy = diameter * SQRT3_2
    out = []
    radius = int(math.ceil(math.sqrt(count))) + 2
    while True:
        cand = []
        for j in range(-2 * radius, 2 * radius + 1):
            for i in range(-2 * radius, 2 * radius + 1):
                x = ax + (i + 0.5 * (j % 2)) * diameter
                y = ay + j * dy
                if keep is not None and not keep(x, y):
                    continue
                r = math.hypot(x - ax, y - ay)
                ang = math.atan2(y - ay, x - ax) % (2 * math.pi)
                cand.append((round(r / diameter, 9), round(ang, 9), x, y))
        cand.sort()
        # only trust the ordering inside the fully enumerated disc
        safe = [c for c in cand if c[0] <= 2 * radius * SQRT3_2 - 1]
        if len(safe) >= count:
            out = [(c[2], c[3]) for c in safe[:count]]
            return out
        if radius > 4 * (count + 4):
            raise PlacementOverflow("not enough admissible lattice points near the anchor")
        radius *= 2


def place_aggregate(count: int, diameter: float, rng: np.random.Generator, anchor=(0.0, 0.0), keep=None) -> list[Pose]:
    """Hex-packed blob of ``count`` touching discs around ``anchor``.

    Headings are drawn uniformly from ``rng``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    pts = hex_points(count, diameter, anchor, keep)
    return [Pose(x, y, rng.uniform(0.0, 2.0 * math.pi)) for x, y in pts]


def place_random(count: int, diameter: float, arena, rng: np.random.Generator, max_attempts: int | None = None, avoid=()) -> list[Pose]:
    """Uniform non-overlapping placement in ``arena = (x0, y0, x1, y1)``.

    Centres are drawn so whole discs stay inside the arena. Rejection
    sampling gives up after ``max_attempts`` draws (default 1000 per robot),
    and counts beyond the hexagonal packing bound fail immediately.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    x0, y0, x1, y1 = (float(v) for v in arena)
    r = diameter / 2.0
    w, h = x1 - x0 - diameter, y1 - y0 - diameter
    if w < 0 or h < 0:
        raise PlacementOverflow("arena smaller than one robot")
    # hex packing of centres in a (w + d) x (h + d) box
    bound = (math.floor(w / diameter) + 1) * (math.floor(h / (diameter * SQRT3_2)) + 1)
    if count > bound:
        raise PlacementOverflow(f"{count} robots exceed the packing bound {bound} of the arena")
    max_attempts = 1000 * count if max_attempts is None else max_attempts
    placed = [tuple(p) for p in avoid]
    out = []
    attempts = 0
    while len(out) < count:
        if attempts >= max_attempts:
            raise PlacementOverflow(f"placed {len(out)} of {count} robots in {max_attempts} attempts")
        attempts += 1
        x = x0 + r + rng.uniform(0.0, w)
        y = y0 + r + rng.uniform(0.0, h)
        if placed:
            p = np.asarray(placed)
            if (np.hypot(p[:, 0] - x, p[:, 1] - y) < diameter).any():
                continue
        placed.append((x, y))
        out.append(Pose(x, y, rng.uniform(0.0, 2.0 * math.pi)))
    return out


def default_seed_sites(shape: GridShape, diameter: float) -> tuple:
    """Four capacity sites forming the seed rhombus nearest the shape origin.

    Returned as (upper-left, upper-right, lower-left, lower-right); the first
    two sit one lattice row above the last two.
    """
    sites = hex_sites(shape, diameter)
    ox, oy = shape.origin

    def key(x, y):
        return round((x - ox) / diameter * 2), round((y - oy) / (diameter * SQRT3_2))

    have = {key(x, y) for x, y in sites}
    for x, y in sites:
        i, j = key(x, y)
        if {(i + 2, j), (i + 1, j + 1), (i + 3, j + 1)} <= have:
            h = diameter * SQRT3_2
            return ((x + diameter / 2, y + h), (x + 1.5 * diameter, y + h), (x, y), (x + diameter, y))
    raise ConfigError("shape has no room for the four-robot seed cluster")


def initial_layout(config: ScenarioConfig, shape: GridShape) -> list[Pose]:
    """Poses for robot ids ``0 .. robot_count - 1``; ids 0-3 are the seed
    cluster (baseline) or the cluster the election will pick (extended)."""
    d = config.diameter
    rng = np.random.default_rng([config.seed & 0xFFFFFFFF, 0xA11])
    seeds = config.seed_positions or default_seed_sites(shape, d)
    n_seeds = min(SEED_CLUSTER_SIZE, config.robot_count)
    poses = [Pose(x, y, rng.uniform(0.0, 2.0 * math.pi)) for x, y in seeds[:n_seeds]]
    rest = config.robot_count - n_seeds
    if rest == 0:
        return poses
    seed_xy = np.asarray([(p.x, p.y) for p in poses])
    if config.placement == "aggregate":
        low = min(seeds, key=lambda s: (s[1], s[0]))
        top = low[1] - d  # blob's top row touches the lowest seed from below
        anchor = (low[0] + d, top - 2 * d * SQRT3_2)

        def keep(x, y):
            return (
                y <= top + 1e-12
                and not contains(shape, (x, y))
                and bool((np.hypot(seed_xy[:, 0] - x, seed_xy[:, 1] - y) >= d - 1e-12).all())
            )

        others = hex_points(rest, d, anchor, keep)
        # small blobs may not reach the top row or sit under a seed; slide
        # them along the lattice until one touches
        def gap(pts):
            p = np.asarray(pts)
            return np.hypot(p[:, None, 0] - seed_xy[None, :, 0], p[:, None, 1] - seed_xy[None, :, 1]).min()

        if gap(others) > d + 1e-9:
            rows = int(round((top - max(p[1] for p in others)) / (d * SQRT3_2)))
            for shift in sorted(range(-3, 4), key=lambda k: (abs(k), k)):
                dx = rows * d / 2.0 + shift * d
                moved = [(x + dx, y + rows * d * SQRT3_2) for x, y in others]
                if all(keep(x, y) for x, y in moved) and gap(moved) <= d + 1e-9:
                    others = moved
                    break
        # ids in raster order: top row first, then left to right
        others.sort(key=lambda p: (-round(p[1] / d, 6), round(p[0] / d, 6)))
        poses += [Pose(x, y, rng.uniform(0.0, 2.0 * math.pi)) for x, y in others]
    else:
        arena = config.arena
        if arena is None:
            x0, y0, x1, y1 = shape.extent
            pad = 10 * d
            arena = (x0 - pad, y0 - pad, x1 + pad, y1 + pad)
        poses += place_random(rest, d, arena, rng, avoid=[tuple(p) for p in seed_xy])
    return poses


# -- events and results -----------------------------------------------------------


@dataclass(frozen=True)
class Event:
    tick: int
    kind: str
    payload: str = ""

    def to_line(self) -> str:
        return f"{self.tick},{self.kind},{self.payload}"

    @classmethod
    def from_line(cls, line: str) -> Event:
        parts = line.rstrip("\n").split(",", 2)
        if len(parts) < 2:
            raise MalformedInput(f"bad event line {line!r}")
        return cls(int(parts[0]), parts[1], parts[2] if len(parts) > 2 else "")


def read_events(path) -> list[Event]:
    with open(path) as fh:
        return [Event.from_line(line) for line in fh if line.strip()]


@dataclass
class RunResult:
    status: str  # Completed | MaxTicks | Error
    digest: str
    metrics: MetricsReport | None
    events: list
    trace: Trace
    world: WorldState
    robots: list
    paths: dict = field(default_factory=dict)

    def phase_counts(self) -> dict:
        out: dict[str, int] = {}
        for r in self.robots:
            out[r.phase.value] = out.get(r.phase.value, 0) + 1
        return out


TRACE_FILE = "trace.csv"
METRICS_FILE = "metrics.txt"
EVENTS_FILE = "events.log"


def _sample(trace: Trace, world: WorldState, robots):
    trace.add(world.tick, world.ids, world.poses, [r.phase for r in robots], [r.state.gradient for r in robots])


def _manual_seeding(world: WorldState, robots, leader_index: int, events, tick: int):
    """Fallback when the elected leader cannot form a cluster: the harness
    names the leader and its three nearest robots seeds at their true
    positions."""
    xy = world.poses[:, :2]
    d = np.hypot(*(xy - xy[leader_index]).T)
    order = sorted((k for k in range(len(robots)) if k != leader_index), key=lambda k: (round(d[k], 12), world.ids[k]))
    chosen = [leader_index] + order[: SEED_CLUSTER_SIZE - 1]
    for k in chosen:
        r = robots[k]
        old = r.phase
        r.set_state(dataclasses.replace(ControllerState.seed(r.id, tuple(xy[k])), seeding_failed=False))
        r.transitions.append((tick, old, Phase.SEED))
    events.append(Event(tick, "intervention", "manual_seeding ids=" + " ".join(str(world.ids[k]) for k in chosen)))


def _sweep(robots, events, tick: int):
    flagged = []
    for r in robots:
        if r.phase not in TERMINAL:
            old = r.phase
            r.set_state(dataclasses.replace(r.state, phase=Phase.SURPLUS))
            r.transitions.append((tick, old, Phase.SURPLUS))
            flagged.append(r.id)
    events.append(Event(tick, "intervention", "surplus_sweep ids=" + " ".join(map(str, flagged))))


def run(config: ScenarioConfig, write: bool = True, poses: list | None = None, shape: GridShape | None = None) -> RunResult:
    """Execute one scenario.

    ``poses`` replaces the generated initial layout (ids follow list order).
    Output files go to ``config.output_dir`` when ``write`` is set.
    """
    if shape is None:
        shape = load_scenario_shape(config)
    holes = count_holes(shape)
    if config.mode == "baseline" and holes and not config.override_holes:
        raise ConfigError(f"shape has hole_count = {holes}; baseline mode needs a hole-free shape (set override_holes)")
    d = config.diameter
    sites = hex_sites(shape, d)
    if poses is None:
        poses = initial_layout(config, shape)
    poses = [p if isinstance(p, Pose) else Pose(*p) for p in poses]
    n = len(poses)
    n_seeds = min(SEED_CLUSTER_SIZE, n)

    world = WorldState.create(poses, config.world)
    events: list[Event] = []
    if config.mode == "baseline":
        cc = config.controller_config()
        states = [ControllerState.seed(k, (poses[k].x, poses[k].y)) if k < n_seeds else ControllerState.waiting(k) for k in range(n)]
        events.append(Event(0, "intervention", "seed_placement ids=" + " ".join(str(k) for k in range(n_seeds))))
    else:
        # frame convention: the leader (lowest id) sits at the anchor
        cc = config.controller_config(seed_anchor=(poses[0].x, poses[0].y))
        states = [ControllerState.electing(k) for k in range(n)]
    robots = [Robot(s, shape, cc, sites) for s in states]

    trace = Trace()
    _sample(trace, world, robots)
    status = "MaxTicks"
    last_join = 0
    seeding_handled = False
    while world.tick < config.max_ticks:
        tick = world.tick
        try:
            world = step(world, robots)
        except SwarmAssemblyError as exc:
            events.append(Event(tick, "error", str(exc).replace("\n", " ")))
            status = "Error"
            break
        for r in robots:
            if r.transitions and r.transitions[-1][0] == tick:
                _, old, new = r.transitions[-1]
                if new is Phase.JOINED:
                    last_join = world.tick
                    events.append(Event(tick, "join", f"id={r.id}"))
                elif new is Phase.SEED:
                    events.append(Event(tick, "seed", f"id={r.id}"))
                elif new is Phase.SURPLUS:
                    events.append(Event(tick, "surplus", f"id={r.id}"))
                elif old is Phase.EDGE_FOLLOW and new is Phase.WAIT_TO_MOVE:
                    events.append(Event(tick, "lost_aggregate", f"id={r.id}"))
        if config.mode == "extended" and not seeding_handled:
            failed = [k for k, r in enumerate(robots) if r.state.seeding_failed]
            if failed:
                _manual_seeding(world, robots, failed[0], events, world.tick)
                seeding_handled = True
            elif any(r.phase is Phase.SEED for r in robots):
                seeding_handled = True
        if world.tick % config.trace_stride == 0:
            _sample(trace, world, robots)
        phases = [r.phase for r in robots]
        if all(ph in TERMINAL for ph in phases):
            if config.mode == "baseline":
                _sweep(robots, events, world.tick)  # nothing left to flag, still logged
            status = "Completed"
            break
        if config.mode == "baseline":
            unassembled = [ph for ph in phases if ph in (Phase.WAIT_TO_MOVE, Phase.EDGE_FOLLOW)]
            stalled = config.stall_window and world.tick - last_join >= config.stall_window
            filled = snapshot_fill_ratio(trace.snapshots[-1], shape, d) >= config.completion_threshold if world.tick % config.trace_stride == 0 else False
            if not unassembled or stalled or filled:
                _sweep(robots, events, world.tick)
                status = "Completed"
                break
    if trace.final.tick != world.tick:
        _sample(trace, world, robots)
    elif status == "Completed" and config.mode == "baseline":
        # the sweep changed phases after the sample was taken
        trace.drop_last()
        _sample(trace, world, robots)
    if status == "MaxTicks":
        fill = snapshot_fill_ratio(trace.final, shape, d)
        if fill >= config.completion_threshold:
            status = "Completed"
    events.append(Event(world.tick, "end", status))

    metrics = compute_report(
        trace,
        shape,
        d,
        config.world.tick_duration,
        config.mode,
        events,
        config.completion_threshold,
        periphery_stride=config.trace_stride,
    )
    digest = hashlib.sha256(world.serialize()).hexdigest()
    result = RunResult(status, digest, metrics, events, trace, world, robots)
    if write:
        result.paths = write_outputs(result, config.output_dir)
    return result


def write_outputs(result: RunResult, output_dir) -> dict:
    os.makedirs(output_dir, exist_ok=True)
    paths = {
        "trace": os.path.join(output_dir, TRACE_FILE),
        "metrics": os.path.join(output_dir, METRICS_FILE),
        "events": os.path.join(output_dir, EVENTS_FILE),
    }
    result.trace.write(paths["trace"])
    with open(paths["metrics"], "w", newline="\n") as fh:
        fh.write(result.metrics.to_text())
    with open(paths["events"], "w", newline="\n") as fh:
        fh.writelines(e.to_line() + "\n" for e in result.events)
    return paths


def report_from_files(config: ScenarioConfig, trace_path, events_path=None) -> MetricsReport:
    """Recompute the metrics of a finished run from its stored files."""
    shape = load_scenario_shape(config)
    trace = Trace.read(trace_path)
    events = read_events(events_path) if events_path and os.path.exists(events_path) else []
    return compute_report(
        trace,
        shape,
        config.diameter,
        config.world.tick_duration,
        config.mode,
        events,
        config.completion_threshold,
        periphery_stride=config.trace_stride,
    )


# -- rendering ------------------------------------------------------------------

BACKGROUND = (255, 255, 255)
SHAPE_SHADE = (205, 220, 245)
PALETTE = {
    Phase.SEED: (0, 0, 0),
    Phase.JOINED: (64, 64, 64),
    Phase.WAIT_TO_MOVE: (192, 192, 192),
    Phase.ELECTING: (150, 150, 110),
}
OUTLINE = (0, 0, 0)
HATCH = (0, 0, 0)


def render(trace: Trace, shape: GridShape, tick: int, diameter: float, pixels_per_cell: int = 20, nearest: bool = False) -> bytes:
    """Binary PPM (P6) frame of one sampled tick.

    Shape cells are shaded; robots are discs coloured by phase: seeds black,
    joined dark gray, waiting light gray, movers white with a black outline,
    surplus robots cross-hatched.
    """
    snap = trace.at(tick, nearest=nearest)
    s = shape.cell_size / pixels_per_cell
    r = diameter / 2.0
    x0, y0, x1, y1 = shape.extent
    if len(snap):
        x0 = min(x0, float(snap.xy[:, 0].min()) - r)
        y0 = min(y0, float(snap.xy[:, 1].min()) - r)
        x1 = max(x1, float(snap.xy[:, 0].max()) + r)
        y1 = max(y1, float(snap.xy[:, 1].max()) + r)
    pad = shape.cell_size
    x0, y0, x1, y1 = x0 - pad, y0 - pad, x1 + pad, y1 + pad
    width = int(math.ceil((x1 - x0) / s))
    height = int(math.ceil((y1 - y0) / s))
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    # pixel centres; row 0 is the top of the image
    px = x0 + (np.arange(width) + 0.5) * s
    py = y1 - (np.arange(height) + 0.5) * s
    ox, oy = shape.origin
    col = np.floor((px - ox) / shape.cell_size).astype(int)
    row = np.floor((py - oy) / shape.cell_size).astype(int)
    cin = (col >= 0) & (col < shape.width)
    rin = (row >= 0) & (row < shape.height)
    inside = np.zeros((height, width), dtype=bool)
    inside[np.ix_(rin, cin)] = shape.occupied[np.ix_(row[rin], col[cin])]
    img[inside] = SHAPE_SHADE
    ii, jj = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    line = max(1.0, 0.08 * diameter / s) * s
    for k in range(len(snap)):
        cx, cy = snap.xy[k]
        c0 = max(0, int((cx - r - x0) / s) - 1)
        c1 = min(width, int((cx + r - x0) / s) + 2)
        r0 = max(0, int((y1 - (cy + r)) / s) - 1)
        r1 = min(height, int((y1 - (cy - r)) / s) + 2)
        if c0 >= c1 or r0 >= r1:
            continue
        dx = px[c0:c1][None, :] - cx
        dy = py[r0:r1][:, None] - cy
        dist = np.hypot(dx, dy)
        disc = dist < r
        patch = img[r0:r1, c0:c1]
        phase = snap.phases[k]
        if phase is Phase.EDGE_FOLLOW:
            patch[disc] = BACKGROUND
            patch[disc & (dist >= r - line)] = OUTLINE
        elif phase is Phase.SURPLUS:
            patch[disc] = BACKGROUND
            a, b = ii[r0:r1, c0:c1], jj[r0:r1, c0:c1]
            period = max(4, int(round(diameter / s / 4)))
            hatch = ((a + b) % period == 0) | ((a - b) % period == 0)
            patch[disc & hatch] = HATCH
            patch[disc & (dist >= r - line)] = OUTLINE
        else:
            patch[disc] = PALETTE[phase]
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    return header + img.tobytes()
