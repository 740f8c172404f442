"""Run metrics computed from sampled traces.

Every quantity here is a pure function of a trace, the target shape and a
few physical constants, so a report can be recomputed from a stored trace
file and compared byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import MISSING, dataclass, fields

import numpy as np

from .errors import MalformedInput, NoMotionRecorded, ZeroCapacity
from .protocol import Phase
from .shape import GridShape, capacity, contains, count_holes
from .trace import Snapshot, Trace

# swimming speeds quoted for comparison, body lengths per second
REFERENCE_E_COLI = 20
REFERENCE_M_JANNASCHII = 500

BASELINE_INTERVENTIONS = 2  # manual seed placement + manual surplus removal
INCOMPLETE = -1  # assembly_ticks sentinel
DEFAULT_RAYS = 72

TERMINAL = (Phase.SEED, Phase.JOINED, Phase.SURPLUS)
ASSEMBLED = (Phase.SEED, Phase.JOINED)


def fill_ratio(phases, positions, shape: GridShape, diameter: float) -> float:
    """Assembled robots (seeds included) inside the shape over its capacity."""
    cap = capacity(shape, diameter)
    if cap == 0:
        raise ZeroCapacity("shape holds no robot-sized site")
    inside = sum(1 for ph, p in zip(phases, positions) if ph in ASSEMBLED and contains(shape, p))
    return inside / cap


def snapshot_fill_ratio(snap: Snapshot, shape: GridShape, diameter: float) -> float:
    return fill_ratio(snap.phases, snap.xy, shape, diameter)


def motility_index(trace: Trace, diameter: float, tick_duration: float) -> float:
    """Mean mover speed in body lengths per second.

    Uses every pair of consecutive samples in which a robot is edge-following
    at both ends; the displacement over the pair is spread evenly over its
    ticks, so the result is total distance over total mover-ticks.
    """
    dist = 0.0
    ticks = 0
    prev = None
    for snap in trace:
        if prev is not None:
            dt = snap.tick - prev.tick
            where = {rid: k for k, rid in enumerate(prev.ids)}
            for k, rid in enumerate(snap.ids):
                j = where.get(rid)
                if j is None or snap.phases[k] is not Phase.EDGE_FOLLOW or prev.phases[j] is not Phase.EDGE_FOLLOW:
                    continue
                dist += math.hypot(snap.xy[k, 0] - prev.xy[j, 0], snap.xy[k, 1] - prev.xy[j, 1])
                ticks += dt
        prev = snap
    if ticks == 0:
        raise NoMotionRecorded("no edge-following segment in the trace")
    return dist / ticks / diameter / tick_duration


def ray_directions(rays: int = DEFAULT_RAYS) -> np.ndarray:
    a = np.arange(rays) * (2.0 * math.pi / rays)
    return np.column_stack([np.cos(a), np.sin(a)])


def is_enclosed(center, discs, radius: float, rays: int = DEFAULT_RAYS) -> bool:
    """True when every sampled ray from ``center`` crosses one of ``discs``.

    A ray crosses a disc lying ahead of the centre when its perpendicular
    distance to the disc centre is below ``radius``; a disc covering the
    centre blocks every ray.
    """
    discs = np.asarray(discs, dtype=float).reshape(-1, 2)
    if not len(discs):
        return False
    v = discs - np.asarray(center, dtype=float)
    if (np.hypot(v[:, 0], v[:, 1]) < radius).any():
        return True
    u = ray_directions(rays)
    along = v @ u.T  # (discs, rays)
    perp = np.abs(v[:, :1] * u[:, 1] - v[:, 1:] * u[:, 0])
    crossed = (along > 0) & (perp < radius)
    return bool(crossed.any(axis=0).all())


def periphery_violations(trace: Trace, sample_stride: int = 1, radius: float = 0.0165, rays: int = DEFAULT_RAYS) -> int:
    """(sampled tick, mover) pairs where the mover is ringed by stationary discs."""
    if sample_stride < 1:
        raise ValueError("sample_stride must be >= 1")
    count = 0
    for snap in trace:
        if snap.tick % sample_stride:
            continue
        moving = [k for k, ph in enumerate(snap.phases) if ph is Phase.EDGE_FOLLOW]
        if not moving:
            continue
        still = snap.xy[[k for k, ph in enumerate(snap.phases) if ph is not Phase.EDGE_FOLLOW]]
        count += sum(is_enclosed(snap.xy[k], still, radius, rays) for k in moving)
    return count


def active_fraction_series(trace: Trace) -> list[float]:
    return [sum(ph is Phase.EDGE_FOLLOW for ph in s.phases) / len(s) if len(s) else 0.0 for s in trace]


def deadlocked_robots(trace: Trace) -> int:
    """Robots that never had a gradient and so never got to leave the start.

    A robot counts when every sample shows it waiting (or electing), apart
    from a final Surplus flag, and its gradient is never finite.
    """
    history: dict[int, list] = {}
    for s in trace:
        for k, rid in enumerate(s.ids):
            history.setdefault(int(rid), []).append((s.phases[k], s.gradient[k]))
    count = 0
    waiting = (Phase.WAIT_TO_MOVE, Phase.ELECTING)
    for recs in history.values():
        phases = [p for p, _ in recs]
        while phases and phases[-1] is Phase.SURPLUS:
            phases.pop()
        if not phases or any(p not in waiting for p in phases):
            continue
        if all(math.isinf(g) for _, g in recs):
            count += 1
    return count


def intervention_count(mode: str, events=()) -> int:
    """Baseline runs always need the two manual steps; extended runs count
    the harness actions actually logged."""
    if mode == "baseline":
        return BASELINE_INTERVENTIONS
    if mode != "extended":
        raise ValueError(f"unknown mode {mode!r}")
    return sum(1 for e in events if e.kind == "intervention")


def assembly_ticks(trace: Trace, complete: bool) -> int:
    """First sampled tick by which every robot that ever joined had joined."""
    if not complete:
        return INCOMPLETE
    first: dict[int, int] = {}
    for s in trace:
        for k, rid in enumerate(s.ids):
            if s.phases[k] is Phase.JOINED and int(rid) not in first:
                first[int(rid)] = s.tick
    return max(first.values(), default=0)


@dataclass(frozen=True)
class MetricsReport:
    fill_ratio: float
    assembly_ticks: int
    active_fraction_series: tuple
    periphery_violations: int
    deadlocked_robots: int
    body_lengths_per_second: float
    human_interventions: int
    hole_count: int
    surplus_flagged: int
    surplus_expected: int
    reference_e_coli: int = REFERENCE_E_COLI
    reference_m_jannaschii: int = REFERENCE_M_JANNASCHII

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {_fmt(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> MetricsReport:
        raw = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise MalformedInput(f"bad metrics line {line!r}")
            raw[key.strip()] = value.strip()
        kw = {}
        for f in fields(cls):
            if f.name not in raw:
                if f.default is not MISSING:
                    continue
                raise MalformedInput(f"missing metric {f.name}")
            v = raw[f.name]
            if f.name == "active_fraction_series":
                kw[f.name] = tuple(float(x) for x in v.split(",") if x.strip())
            elif f.name in ("fill_ratio", "body_lengths_per_second"):
                kw[f.name] = float(v)
            else:
                kw[f.name] = int(v)
        return cls(**kw)


def _fmt(v) -> str:
    # repr round-trips floats exactly
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def compute_report(
    trace: Trace,
    shape: GridShape,
    diameter: float,
    tick_duration: float,
    mode: str = "baseline",
    events=(),
    completion_threshold: float = 0.95,
    periphery_stride: int = 1,
    rays: int = DEFAULT_RAYS,
) -> MetricsReport:
    final = trace.final
    fill = snapshot_fill_ratio(final, shape, diameter)
    complete = fill >= completion_threshold or all(ph in TERMINAL for ph in final.phases)
    try:
        bls = motility_index(trace, diameter, tick_duration)
    except NoMotionRecorded:
        bls = math.nan
    return MetricsReport(
        fill_ratio=fill,
        assembly_ticks=assembly_ticks(trace, complete),
        active_fraction_series=tuple(active_fraction_series(trace)),
        periphery_violations=periphery_violations(trace, periphery_stride, diameter / 2.0, rays),
        deadlocked_robots=deadlocked_robots(trace),
        body_lengths_per_second=bls,
        human_interventions=intervention_count(mode, events),
        hole_count=count_holes(shape),
        surplus_flagged=sum(ph is Phase.SURPLUS for ph in final.phases),
        surplus_expected=max(0, len(final) - capacity(shape, diameter)),
    )
