"""Per-robot distributed algorithms: hop-count gradient, trilateration,
min-id leader election, seed selection and completion detection.

Every function here is a pure transition on one robot's state and the
messages it heard this tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientNeighbors, MalformedInput

INF = math.inf

SEED_CLUSTER_SIZE = 4


class Phase(Enum):
    SEED = "Seed"
    WAIT_TO_MOVE = "WaitToMove"
    EDGE_FOLLOW = "EdgeFollow"
    JOINED = "Joined"
    SURPLUS = "Surplus"
    ELECTING = "Electing"

    @property
    def stationary(self) -> bool:
        return self is not Phase.EDGE_FOLLOW


@dataclass(frozen=True)
class ElectionFields:
    candidate: int
    round: int
    done: bool = False


@dataclass(frozen=True)
class Message:
    sender: int
    gradient: float = INF
    position: tuple | None = None
    phase: Phase = Phase.WAIT_TO_MOVE
    election: ElectionFields | None = None
    joined_recently: bool = False
    # ticks since the freshest join the sender knows of (relayed hop by hop)
    join_age: int | None = None
    # leader's announcement: ((id, distance to leader), ...) in frame order
    seed_cluster: tuple | None = None


# -- gradient ---------------------------------------------------------------


def gradient_update(is_seed: bool, inbox: Iterable[Message]) -> float:
    """Hop count to the nearest seed, recomputed from this tick's inbox."""
    if is_seed:
        return 0
    best = min((m.gradient for m in inbox), default=INF)
    return INF if best == INF else int(best) + 1


# -- localization -----------------------------------------------------------


def anchors_degenerate(anchors: np.ndarray, rel_tol: float = 1e-9) -> bool:
    """True when fewer than three anchors or all of them lie on one line."""
    if len(anchors) < 3:
        return True
    centered = anchors - anchors.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    return s[0] == 0 or s[-1] <= rel_tol * s[0]


def trilaterate(anchors, distances, iterations: int = 50, damping: float = 1e-9) -> np.ndarray:
    """Least-squares position from ranges to known anchors.

    Minimises ``sum((|p - a_i| - d_i)**2)`` by damped Gauss-Newton. The
    starting point is the linear multilateration solution (differences of
    squared ranges), which removes the mirror-image local minimum that a
    centroid start falls into when the robot sits outside its anchors' hull.
    """
    a = np.asarray(anchors, dtype=float)
    d = np.asarray(distances, dtype=float)
    A = 2.0 * (a[1:] - a[0])
    b = (d[0] ** 2 - d[1:] ** 2) + (a[1:] ** 2).sum(axis=1) - (a[0] ** 2).sum()
    p = np.linalg.lstsq(A, b, rcond=None)[0]
    lam = damping
    for _ in range(iterations):
        diff = p - a
        rng = np.sqrt((diff**2).sum(axis=1))
        rng = np.where(rng < 1e-15, 1e-15, rng)
        r = rng - d
        J = diff / rng[:, None]
        H = J.T @ J
        g = J.T @ r
        step = np.linalg.solve(H + lam * np.eye(2), g)
        p = p - step
        if np.hypot(*step) < 1e-14:
            break
    return p


def localize(self_estimate, measurements: Sequence[tuple]) -> tuple | None:
    """Update a position estimate from ``[(anchor_xy, distance), ...]``.

    Fewer than three anchors, or collinear anchors, leave the estimate as it
    was (possibly ``None``).
    """
    if len(measurements) < 3:
        return self_estimate
    anchors = np.array([m[0] for m in measurements], dtype=float)
    if anchors_degenerate(anchors):
        return self_estimate
    p = trilaterate(anchors, [m[1] for m in measurements])
    return (float(p[0]), float(p[1]))


# -- leader election ----------------------------------------------------------


@dataclass(frozen=True)
class ElectionState:
    best_candidate: int
    rounds_stable: int = 0
    decided: bool = False
    is_leader: bool = False

    @classmethod
    def start(cls, own_id: int) -> ElectionState:
        return cls(best_candidate=own_id)


def election_step(state: ElectionState, own_id: int, inbox: Iterable[Message], stability_threshold: int) -> ElectionState:
    """One round of min-id flooding with a stability-counter stop rule.

    The counter rule is only safe when ``stability_threshold`` is at least
    the time the global minimum needs to reach every robot (the graph
    diameter in lossless synchronous rounds).
    """
    if state.decided:
        return state
    cands = [m.election.candidate for m in inbox if m.election is not None]
    best = min([state.best_candidate, own_id, *cands])
    stable = state.rounds_stable + 1 if best == state.best_candidate else 0
    decided = stable >= stability_threshold
    return ElectionState(best, stable, decided, decided and best == own_id)


def select_seed_cluster(leader: int, leader_neighbors: Sequence[tuple]) -> tuple:
    """Leader plus its three nearest neighbours, ties to the lower id.

    Returned in frame order: leader first, then neighbours by (distance, id).
    """
    ranked = sorted(leader_neighbors, key=lambda t: (t[1], t[0]))
    if len(ranked) < SEED_CLUSTER_SIZE - 1:
        raise InsufficientNeighbors(f"leader {leader} has {len(ranked)} neighbours, needs 3")
    return (leader, *(rid for rid, _ in ranked[: SEED_CLUSTER_SIZE - 1]))


def circle_intersection(c0, r0, c1, r1, upper: bool = True):
    """Intersection of two circles; picks the point left of c0->c1 if ``upper``.

    Inconsistent radii are clamped to the tangent point.
    """
    c0 = np.asarray(c0, float)
    c1 = np.asarray(c1, float)
    base = c1 - c0
    L = float(np.hypot(*base))
    if L == 0:
        return None
    u = base / L
    along = (r0**2 - r1**2 + L**2) / (2 * L)
    h = math.sqrt(max(r0**2 - along**2, 0.0))
    normal = np.array([-u[1], u[0]])
    p = c0 + along * u + (h if upper else -h) * normal
    return (float(p[0]), float(p[1]))


# -- completion / surplus -------------------------------------------------------


class Completion(Enum):
    INCOMPLETE = "Incomplete"
    LOCALLY_QUIESCENT = "LocallyQuiescent"
    SURPLUS = "Surplus"


def completion_update(counter: int, inbox: Iterable[Message], joined_self: bool, window: int) -> tuple[Completion, int]:
    """Quiescence counter for surplus detection.

    The counter tracks ticks since the freshest join evidence: the robot's
    own join resets it to 0, and a neighbour reporting a join ``k`` ticks old
    pulls it down to ``k + 1``. A neighbour flagging ``joined_recently``
    without an age counts as a join seen this tick.
    """
    if joined_self:
        counter = 0
    else:
        counter += 1
        for m in inbox:
            if m.join_age is not None:
                counter = min(counter, m.join_age + 1)
            elif m.joined_recently:
                counter = min(counter, 1)
    if counter >= window:
        return Completion.SURPLUS, counter
    if counter > 0:
        return Completion.LOCALLY_QUIESCENT, counter
    return Completion.INCOMPLETE, counter


# -- wire format ---------------------------------------------------------------


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def format_message(m: Message) -> str:
    """``sender,gradient|INF,x|,y|,phase,candidate|,round|,joined_recently``"""
    g = "INF" if m.gradient == INF else str(int(m.gradient))
    x, y = ("", "") if m.position is None else (_fmt(m.position[0]), _fmt(m.position[1]))
    cand, rnd = ("", "") if m.election is None else (str(m.election.candidate), str(m.election.round))
    return ",".join([str(m.sender), g, x, y, m.phase.value, cand, rnd, "1" if m.joined_recently else "0"])


def parse_message(line: str) -> Message:
    parts = line.rstrip("\n").split(",")
    if len(parts) != 8:
        raise MalformedInput(f"expected 8 fields, got {len(parts)}")
    sender, g, x, y, phase, cand, rnd, jr = parts
    try:
        gradient = INF if g == "INF" else int(g)
        position = None if x == "" and y == "" else (float(x), float(y))
        election = None if cand == "" else ElectionFields(int(cand), int(rnd) if rnd else 0)
        if jr not in ("0", "1"):
            raise ValueError(jr)
        return Message(int(sender), gradient, position, Phase(phase), election, jr == "1")
    except ValueError as exc:
        raise MalformedInput(f"bad message line {line!r}: {exc}") from None
