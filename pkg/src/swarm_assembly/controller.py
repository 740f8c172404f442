"""Per-robot self-assembly state machine.

A robot waits in the aggregate until it holds the locally highest gradient,
edge-follows the stationary aggregate keeping it on its right, and halts
inside the target figure when the join rule fires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import protocol
from .errors import InsufficientNeighbors, LostAggregate
from .protocol import INF, Completion, ElectionFields, ElectionState, Message, Phase
from .shape import GridShape, contains
from .world import MotionCommand

LEGAL_TRANSITIONS = {
    Phase.ELECTING: {Phase.SEED, Phase.WAIT_TO_MOVE},
    Phase.WAIT_TO_MOVE: {Phase.EDGE_FOLLOW, Phase.SURPLUS},
    Phase.EDGE_FOLLOW: {Phase.JOINED, Phase.SURPLUS, Phase.WAIT_TO_MOVE},
    Phase.SEED: set(),
    Phase.JOINED: set(),
    Phase.SURPLUS: set(),
}

ASSEMBLED = (Phase.SEED, Phase.JOINED)
UNASSEMBLED = (Phase.WAIT_TO_MOVE, Phase.ELECTING)


@dataclass(frozen=True)
class ControllerConfig:
    robot_diameter: float = 0.033
    d_desired: float | None = None  # centre-to-centre; default 1.0 * diameter
    hysteresis: float | None = None  # default 10% of d_desired
    cooldown: int = 30
    quiescence_window: int = 500
    stability_threshold: int = 3
    completion_detection: bool = False
    lattice_join: bool = True
    lattice_tolerance: float = 0.25  # fraction of the diameter
    same_layer_rule: bool = True
    # neighbours farther than this (in diameters) are ignored for the
    # gradient; None means anyone heard on the radio
    gradient_range: float | None = 1.3
    # the same-layer join test only looks at assembled robots ahead within
    # this many diameters; None means any assembled neighbour
    pass_range: float | None = 1.25
    guard_space: bool = True
    # also halt on a free site already closed in on this many of its six
    # lattice sides; None disables
    mirrored: bool = False
    seed_anchor: tuple = (0.0, 0.0)

    @property
    def desired(self) -> float:
        return self.robot_diameter if self.d_desired is None else self.d_desired

    @property
    def band(self) -> float:
        return 0.1 * self.desired if self.hysteresis is None else self.hysteresis


@dataclass(frozen=True)
class ControllerState:
    id: int
    phase: Phase
    gradient: float = INF
    position: tuple | None = None
    election: ElectionState | None = None
    start_timer: int = 0
    completion_counter: int = 0
    previous_position: tuple | None = None
    join_age: int | None = None
    seed_cluster: tuple | None = None
    seeding_failed: bool = False

    @classmethod
    def seed(cls, rid: int, position) -> ControllerState:
        return cls(rid, Phase.SEED, 0, tuple(position))

    @classmethod
    def waiting(cls, rid: int) -> ControllerState:
        return cls(rid, Phase.WAIT_TO_MOVE)

    @classmethod
    def electing(cls, rid: int) -> ControllerState:
        return cls(rid, Phase.ELECTING, election=ElectionState.start(rid))


# -- rules ---------------------------------------------------------------------


def start_rule(gradient: float, own_id: int, start_timer: int, inbox, cooldown: int) -> bool:
    """Begin edge-following when this robot is the local gradient maximum.

    Compared only against neighbours that are still waiting; ties go to the
    highest id. Any edge-following neighbour, or a cooldown that has not yet
    elapsed since one was last heard, blocks departure.
    """
    if gradient == INF:
        return False
    if start_timer < cooldown:
        return False
    for m in inbox:
        if m.phase is Phase.EDGE_FOLLOW:
            return False
        if m.phase in UNASSEMBLED:
            if m.gradient > gradient or (m.gradient == gradient and m.sender > own_id):
                return False
    return True


def edge_follow_step(distance: float | None, d_desired: float, hysteresis: float, mirrored: bool = False) -> MotionCommand:
    """Bang-bang orbit keeping the aggregate on the robot's right."""
    if distance is None:
        raise LostAggregate("no stationary neighbour in range")
    away, toward = MotionCommand.TURN_LEFT_FORWARD, MotionCommand.TURN_RIGHT_FORWARD
    if mirrored:
        away, toward = toward, away
    if distance < d_desired - hysteresis:
        return away
    if distance > d_desired + hysteresis:
        return toward
    return MotionCommand.FORWARD


def _taken_positions(inbox) -> np.ndarray:
    taken = [m.position for m in inbox if m.phase is not Phase.EDGE_FOLLOW and m.position is not None]
    return np.asarray(taken, dtype=float).reshape(-1, 2)


def _blocked(points: np.ndarray, taken: np.ndarray, diameter: float) -> np.ndarray:
    if not len(taken):
        return np.zeros(len(points), dtype=bool)
    d2 = ((points[:, None, :] - taken[None, :, :]) ** 2).sum(axis=-1)
    return (d2 < (0.5 * diameter) ** 2).any(axis=1)


def _free_sites(sites: np.ndarray, inbox, diameter: float) -> np.ndarray:
    if not len(sites):
        return np.ones(0, dtype=bool)
    return ~_blocked(sites, _taken_positions(inbox), diameter)


# shortest run of free lattice neighbours a vacant site may be left with
MIN_OPEN_ARC = 2

_HEX_DIRS = np.array([[math.cos(a), math.sin(a)] for a in np.radians(np.arange(0, 360, 60))])


def keeps_space_open(site, taken: np.ndarray, diameter: float) -> bool:
    """Whether halting on ``site`` leaves the surrounding free space passable.

    Two local tests on the hex lattice around the site. First, the free
    neighbours must form a single arc, so occupying the site cannot split
    the free region. Second, every free neighbour must keep an arc of at
    least ``MIN_OPEN_ARC`` free neighbours of its own afterwards; a vacancy
    reachable only through a gap between two halted robots is too narrow
    for a disc to enter.
    """
    site = np.asarray(site, dtype=float)
    ring = site + diameter * _HEX_DIRS
    free = ~_blocked(ring, taken, diameter)
    if free.any() and not free.all():
        arcs = int(np.count_nonzero(free & ~np.roll(free, 1)))
        if arcs != 1:
            return False
    after = np.vstack([taken, site[None, :]])
    for k in np.flatnonzero(free):
        around = ~_blocked(ring[k] + diameter * _HEX_DIRS, after, diameter)
        if _longest_arc(around) < MIN_OPEN_ARC:
            return False
    return True


def _longest_arc(flags: np.ndarray) -> int:
    if flags.all():
        return len(flags)
    best = run = 0
    for f in np.concatenate([flags, flags]):
        run = run + 1 if f else 0
        best = max(best, run)
    return best


# a free site counts as the next stop along the edge when it is a lattice
# neighbour of the current site, lies ahead (cosine to the heading above
# FORWARD_COS) and touches the aggregate (a stationary robot within
# CONTACT_RANGE diameters)
FORWARD_COS = 0.2
CONTACT_RANGE = 1.3


def edge_continues(site, heading, sites, free, taken, diameter) -> bool:
    """True when an edge-follower at ``site`` has another free site to reach."""
    v = sites - np.asarray(site)
    r = np.hypot(v[:, 0], v[:, 1])
    near = free & (r > 0.9 * diameter) & (r < 1.1 * diameter)
    if not near.any():
        return False
    cos = (v[near] @ np.asarray(heading)) / r[near]
    cand = sites[near][cos > FORWARD_COS]
    if not len(cand) or not len(taken):
        return False
    gap = np.hypot(*(cand[:, None, :] - taken[None, :, :]).transpose(2, 0, 1))
    return bool((gap.min(axis=1) <= CONTACT_RANGE * diameter).any())


def _ahead_within(target, position, heading, reach) -> bool:
    if target is None:
        return False
    dx, dy = target[0] - position[0], target[1] - position[1]
    return math.hypot(dx, dy) <= reach and dx * heading[0] + dy * heading[1] > 0


def join_rule(
    position,
    previous_position,
    shape: GridShape,
    inbox,
    gradient: float = INF,
    diameter: float = 0.033,
    sites: np.ndarray | None = None,
    tolerance: float = 0.25,
    same_layer: bool = True,
    pass_range: float | None = None,
    guard_space: bool = False,
) -> bool:
    """Decide whether an edge-following robot halts here.

    The robot must be inside the figure, and then either be about to leave
    it (the point one body length ahead along its last displacement is
    outside) or be next to an assembled robot whose gradient is at least its
    own. With ``pass_range`` set, that neighbour must also lie ahead of the
    robot within ``pass_range`` diameters, i.e. be the one it is about to
    pass.

    With ``sites`` given (the capacity lattice), the robot may only halt
    within ``tolerance * diameter`` of a free site, at its closest approach
    to it, and "about to leave" means the edge offers no further free site
    ahead (see :func:`edge_continues`).
    """
    if position is None or not contains(shape, position):
        return False
    heading = None
    if previous_position is not None:
        delta = (position[0] - previous_position[0], position[1] - previous_position[1])
        norm = math.hypot(*delta)
        if norm > 0:
            heading = (delta[0] / norm, delta[1] / norm)
    was_inside = previous_position is not None and contains(shape, previous_position)
    exiting = False
    layer = same_layer and any(
        m.phase in ASSEMBLED
        and m.gradient >= gradient
        and (pass_range is None or (heading is not None and _ahead_within(m.position, position, heading, pass_range * diameter)))
        for m in inbox
    )

    if sites is None:
        if was_inside and heading is not None:
            ahead = (position[0] + diameter * heading[0], position[1] + diameter * heading[1])
            exiting = not contains(shape, ahead)
        return exiting or layer

    if not len(sites):
        return False
    free = _free_sites(sites, inbox, diameter)
    p = np.asarray(position, dtype=float)
    d = np.hypot(*(sites - p).T)
    d[~free] = np.inf
    k = int(np.argmin(d))
    if d[k] > tolerance * diameter:
        return False
    if heading is not None:
        # still closing in on the site: halt on a later tick, nearer to it
        step = math.hypot(position[0] - previous_position[0], position[1] - previous_position[1])
        nxt = p + step * np.asarray(heading)
        if math.hypot(*(sites[k] - nxt)) < d[k]:
            return False
    if guard_space and not keeps_space_open(sites[k], _taken_positions(inbox), diameter):
        return False
    if was_inside and heading is not None:
        # no further free site along the edge: the path is leaving the free part of the figure
        exiting = not edge_continues(sites[k], heading, sites, free, _taken_positions(inbox), diameter)
    return exiting or layer


# -- composition -----------------------------------------------------------------


def _seed_position(own_id: int, inbox, sensing: dict, config: ControllerConfig):
    """Position of a freshly named seed from the leader's announcement.

    Frame: leader at ``seed_anchor``, first named seed on +x, second named
    seed on the -y side. The third localizes from the others later.
    """
    for m in inbox:
        if m.seed_cluster is None or m.position is None:
            continue
        members = [rid for rid, _ in m.seed_cluster]
        if own_id not in members:
            continue
        rank = members.index(own_id)
        lx, ly = m.position
        d1 = m.seed_cluster[0][1]
        if rank == 0:
            return (lx + d1, ly), True
        if rank == 1:
            s1 = members[0]
            if s1 not in sensing:
                return None, True
            p = protocol.circle_intersection((lx, ly), m.seed_cluster[1][1], (lx + d1, ly), sensing[s1], upper=False)
            return p, True
        return None, True
    return None, False


def _localize_seed(position, inbox, sensing):
    seeds = [(m.position, sensing[m.sender]) for m in inbox if m.phase is Phase.SEED and m.position is not None and m.sender in sensing]
    pos = protocol.localize(position, seeds)
    if pos is not None or len(seeds) < 2:
        return pos
    (a, ra), (b, rb) = seeds[0], seeds[1]
    cands = [protocol.circle_intersection(a, ra, b, rb, upper=u) for u in (False, True)]
    if len(seeds) > 2:
        def err(c):
            return sum((math.hypot(c[0] - s[0], c[1] - s[1]) - r) ** 2 for s, r in seeds[2:])
        cands.sort(key=err)
    return cands[0]


def _message(state: ControllerState, config: ControllerConfig) -> Message:
    el = state.election
    election = None
    if state.phase is Phase.ELECTING and el is not None:
        election = ElectionFields(el.best_candidate, el.rounds_stable, el.decided)
    age = state.join_age
    return Message(
        sender=state.id,
        gradient=state.gradient,
        position=state.position,
        phase=state.phase,
        election=election,
        joined_recently=age is not None and age < config.quiescence_window,
        join_age=age,
        seed_cluster=state.seed_cluster,
    )


def _previous(own: ControllerState, phase: Phase, position):
    # movers remember last tick's estimate; a robot just starting remembers
    # where it set off from; everyone else keeps what they had
    if own.phase is Phase.EDGE_FOLLOW:
        return own.position
    if phase is Phase.EDGE_FOLLOW:
        return position
    return own.previous_position


def controller_tick(own: ControllerState, inbox, sensing: dict, shape: GridShape, config: ControllerConfig, sites=None):
    """One control step: gradient, localization, phase logic, message.

    Returns ``(new_state, motion_command, outgoing_message)``.
    """
    phase = own.phase
    stationary = [m for m in inbox if m.phase is not Phase.EDGE_FOLLOW]

    if config.gradient_range is None:
        near = stationary
    else:
        reach = config.gradient_range * config.robot_diameter
        near = [m for m in stationary if sensing.get(m.sender, INF) <= reach]
    gradient = protocol.gradient_update(phase is Phase.SEED, near)

    position = own.position
    if phase is Phase.EDGE_FOLLOW or (position is None and phase in (Phase.WAIT_TO_MOVE, Phase.JOINED, Phase.SURPLUS)):
        meas = [(m.position, sensing[m.sender]) for m in stationary if m.position is not None and m.sender in sensing]
        position = protocol.localize(position if phase is not Phase.EDGE_FOLLOW else None, meas) or position

    joined_now = False
    ages = [m.join_age for m in inbox if m.join_age is not None]
    relayed = min(ages) + 1 if ages else None
    own_age = None if own.join_age is None else own.join_age + 1
    join_age = min([a for a in (own_age, relayed) if a is not None], default=None)

    changes = {}
    cmd = MotionCommand.STOP

    if phase is Phase.ELECTING:
        election = protocol.election_step(own.election, own.id, inbox, config.stability_threshold)
        changes["election"] = election
        pos, named = _seed_position(own.id, inbox, sensing, config)
        if named:
            phase, gradient, position = Phase.SEED, 0, pos
        elif election.is_leader and not own.seeding_failed:
            try:
                cluster = protocol.select_seed_cluster(own.id, list(sensing.items()))
            except InsufficientNeighbors:
                changes["seeding_failed"] = True
            else:
                phase, gradient, position = Phase.SEED, 0, tuple(config.seed_anchor)
                changes["seed_cluster"] = tuple((rid, sensing[rid]) for rid in cluster[1:])
        elif gradient != INF:
            phase = Phase.WAIT_TO_MOVE
        else:
            gradient = INF

    elif phase is Phase.SEED:
        if position is None:
            position = _localize_seed(position, inbox, sensing)

    elif phase is Phase.WAIT_TO_MOVE:
        heard_mover = any(m.phase is Phase.EDGE_FOLLOW for m in inbox)
        changes["start_timer"] = 0 if heard_mover else own.start_timer + 1
        surplus = False
        if config.completion_detection:
            status, counter = protocol.completion_update(own.completion_counter, inbox, False, config.quiescence_window)
            changes["completion_counter"] = counter
            surplus = status is Completion.SURPLUS
        if surplus:
            phase = Phase.SURPLUS
        elif position is not None and start_rule(gradient, own.id, changes["start_timer"], inbox, config.cooldown):
            phase = Phase.EDGE_FOLLOW
            nearest = min((sensing[m.sender] for m in stationary if m.sender in sensing), default=None)
            cmd = edge_follow_step(nearest, config.desired, config.band, config.mirrored)

    elif phase is Phase.EDGE_FOLLOW:
        surplus = False
        if config.completion_detection:
            status, counter = protocol.completion_update(own.completion_counter, inbox, False, config.quiescence_window)
            changes["completion_counter"] = counter
            surplus = status is Completion.SURPLUS
        if surplus:
            phase = Phase.SURPLUS
        elif join_rule(
            position,
            own.previous_position,
            shape,
            inbox,
            gradient,
            config.robot_diameter,
            sites if config.lattice_join else None,
            config.lattice_tolerance,
            config.same_layer_rule,
            config.pass_range,
            config.guard_space,
        ):
            phase = Phase.JOINED
            joined_now = True
        else:
            nearest = min((sensing[m.sender] for m in stationary if m.sender in sensing), default=None)
            try:
                cmd = edge_follow_step(nearest, config.desired, config.band, config.mirrored)
            except LostAggregate:
                phase = Phase.WAIT_TO_MOVE
                changes["start_timer"] = 0

    if joined_now:
        join_age = 0
    if phase is Phase.SEED:
        gradient = 0
    new = replace(
        own,
        phase=phase,
        gradient=gradient,
        position=position,
        previous_position=_previous(own, phase, position),
        join_age=join_age,
        **changes,
    )
    if new.phase is not Phase.EDGE_FOLLOW:
        cmd = MotionCommand.STOP
    return new, cmd, _message(new, config)


class Robot:
    """Stateful wrapper that plugs :func:`controller_tick` into ``world.step``."""

    def __init__(self, state: ControllerState, shape: GridShape, config: ControllerConfig, sites=None):
        self.state = state
        self.shape = shape
        self.config = config
        self.sites = sites
        self.message = _message(state, config)
        self.transitions = []  # (tick, old phase, new phase)

    @property
    def id(self) -> int:
        return self.state.id

    @property
    def phase(self) -> Phase:
        return self.state.phase

    def set_state(self, state: ControllerState):
        self.state = state
        self.message = _message(state, self.config)

    def outgoing(self) -> Message:
        return self.message

    def act(self, inbox, sensing, tick) -> MotionCommand:
        old = self.state.phase
        self.state, cmd, self.message = controller_tick(self.state, inbox, sensing, self.shape, self.config, self.sites)
        if self.state.phase is not old:
            self.transitions.append((tick, old, self.state.phase))
        return cmd
