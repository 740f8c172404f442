"""Sampled run traces: one record per robot per sampled tick.

On disk a trace is comma-separated text with a header line
``tick,id,x,y,heading,phase,gradient``; floats carry 6 fractional digits and
an infinite gradient is written ``INF``. In memory the float columns are kept
at exactly the precision that survives a write/read round trip, so anything
computed from a live trace is reproduced bit for bit from the stored file.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import MalformedInput, TickNotSampled
from .protocol import INF, Phase

HEADER = "tick,id,x,y,heading,phase,gradient"


def _q(v: float) -> float:
    """Quantize to the 6-decimal text form."""
    return float(f"{v:.6f}")


@dataclass
class Snapshot:
    tick: int
    ids: np.ndarray
    xy: np.ndarray  # (n, 2)
    heading: np.ndarray
    phases: list
    gradient: np.ndarray  # float, inf for INF

    def __len__(self):
        return len(self.ids)


class Trace:
    """Append-only list of snapshots keyed by tick."""

    def __init__(self):
        self.snapshots: list[Snapshot] = []
        self._by_tick: dict[int, int] = {}

    def __len__(self):
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    @property
    def ticks(self) -> list[int]:
        return [s.tick for s in self.snapshots]

    def add(self, tick: int, ids, poses, phases, gradients) -> Snapshot:
        tick = int(tick)
        if tick in self._by_tick:
            raise ValueError(f"tick {tick} already sampled")
        if self.snapshots and tick < self.snapshots[-1].tick:
            raise ValueError("snapshots must be added in tick order")
        poses = np.asarray(poses, dtype=float).reshape(-1, 3)
        q = np.vectorize(_q, otypes=[float])
        xy = q(poses[:, :2]) if len(poses) else np.zeros((0, 2))
        heading = q(poses[:, 2]) if len(poses) else np.zeros(0)
        grad = np.array([INF if g == INF else int(g) for g in gradients], dtype=float)
        snap = Snapshot(tick, np.asarray(ids, dtype=np.int64), xy.reshape(-1, 2), heading, list(phases), grad)
        self._by_tick[tick] = len(self.snapshots)
        self.snapshots.append(snap)
        return snap

    def drop_last(self) -> Snapshot:
        snap = self.snapshots.pop()
        del self._by_tick[snap.tick]
        return snap

    def at(self, tick: int, nearest: bool = False) -> Snapshot:
        k = self._by_tick.get(int(tick))
        if k is not None:
            return self.snapshots[k]
        if not nearest or not self.snapshots:
            raise TickNotSampled(f"tick {tick} is not in the trace")
        ticks = np.array(self.ticks)
        return self.snapshots[int(np.argmin(np.abs(ticks - tick)))]

    @property
    def final(self) -> Snapshot:
        if not self.snapshots:
            raise TickNotSampled("empty trace")
        return self.snapshots[-1]

    # -- text form ----------------------------------------------------------------

    def dumps(self) -> str:
        out = io.StringIO()
        out.write(HEADER + "\n")
        for s in self.snapshots:
            for k in range(len(s)):
                g = s.gradient[k]
                gs = "INF" if g == INF else str(int(g))
                out.write(
                    f"{s.tick},{s.ids[k]},{s.xy[k, 0]:.6f},{s.xy[k, 1]:.6f},{s.heading[k]:.6f},{s.phases[k].value},{gs}\n"
                )
        return out.getvalue()

    def write(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> Trace:
        lines = text.splitlines()
        if not lines or lines[0].strip() != HEADER:
            raise MalformedInput(f"trace header must be {HEADER!r}")
        rows: dict[int, list] = {}
        order = []
        for n, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise MalformedInput(f"line {n}: expected 7 fields")
            try:
                tick, rid = int(parts[0]), int(parts[1])
                x, y, h = float(parts[2]), float(parts[3]), float(parts[4])
                phase = Phase(parts[5])
                g = INF if parts[6] == "INF" else int(parts[6])
            except ValueError as exc:
                raise MalformedInput(f"line {n}: {exc}") from None
            if tick not in rows:
                rows[tick] = []
                order.append(tick)
            rows[tick].append((rid, x, y, h, phase, g))
        trace = cls()
        for tick in order:
            recs = rows[tick]
            trace.add(
                tick,
                [r[0] for r in recs],
                [(r[1], r[2], r[3]) for r in recs],
                [r[4] for r in recs],
                [r[5] for r in recs],
            )
        return trace

    @classmethod
    def read(cls, path) -> Trace:
        with open(path) as fh:
            return cls.loads(fh.read())
