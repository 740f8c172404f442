import math

import numpy as np
import pytest

from oracles import adjacency_oracle, integrate
from swarm_assembly.errors import ControllerError, NotInRange, UnknownRobot
from swarm_assembly.protocol import Message
from swarm_assembly.world import (
    MotionCommand,
    Pose,
    RobotBody,
    WorldConfig,
    WorldState,
    apply_motion,
    broadcast,
    comm_neighbors,
    measure_distance,
    normalize_angle,
    resolve_collisions,
    step,
)

D = 0.033


def world(points, **cfg):
    return WorldState.create([Pose(x, y, 0.0) for x, y in points], WorldConfig(**cfg))


class Scripted:
    """Controller replaying a fixed command list."""

    def __init__(self, rid, commands=(), msg=True):
        self.rid = rid
        self.commands = list(commands)
        self.msg = msg
        self.inboxes = []
        self.sensing = []

    def outgoing(self):
        return Message(self.rid) if self.msg else None

    def act(self, inbox, sensing, tick):
        self.inboxes.append(inbox)
        self.sensing.append(sensing)
        return self.commands[tick] if tick < len(self.commands) else MotionCommand.STOP


def test_default_comm_radius_is_ten_centimetres():
    assert WorldConfig().comm_radius == 0.10


def test_neighbors_threshold():
    w = world([(0, 0), (0.05, 0)])
    assert comm_neighbors(w, 0) == {1} and comm_neighbors(w, 1) == {0}
    w = world([(0, 0), (0.101, 0)])
    assert comm_neighbors(w, 0) == set()


def test_unknown_robot():
    with pytest.raises(UnknownRobot):
        comm_neighbors(world([(0, 0)]), 7)


def test_neighbors_match_all_pairs_oracle(rng):
    pts = rng.uniform(0, 0.4, size=(50, 2))
    w = world(pts.tolist())
    expect = adjacency_oracle(pts.tolist(), 0.10)
    for i in range(50):
        assert comm_neighbors(w, i) == expect[i]


@pytest.mark.parametrize("bad", [dict(comm_radius=0), dict(motion_noise_std=-1), dict(tick_duration=0), dict(message_loss_prob=1.5)])
def test_config_invariants(bad):
    with pytest.raises(ValueError):
        WorldConfig(**bad)


def test_heading_normalized():
    assert Pose(0, 0, -0.5).heading == pytest.approx(2 * math.pi - 0.5)
    assert Pose(0, 0, 7 * math.pi).heading == pytest.approx(math.pi)
    for t in (-1e-18, 2 * math.pi, -2 * math.pi, 1e9):
        h = normalize_angle(t)
        assert 0 <= h < 2 * math.pi


def test_lossless_broadcast_is_the_neighbour_set():
    w = world([(0, 0), (0.05, 0), (0.2, 0)])
    inbox = broadcast(w, {i: Message(i) for i in range(3)})
    assert [m.sender for m in inbox[0]] == [1]
    assert [m.sender for m in inbox[1]] == [0]
    assert inbox[2] == []


def test_total_loss_empties_inboxes():
    w = world([(0, 0), (0.05, 0)], message_loss_prob=1.0)
    inbox = broadcast(w, {i: Message(i) for i in range(2)})
    assert inbox == {0: [], 1: []}


def test_half_loss_is_binomial():
    w = world([(0, 0), (0.05, 0)], message_loss_prob=0.5, rng_seed=3)
    msgs = {0: Message(0), 1: Message(1)}
    trials = 10_000
    delivered = sum(len(broadcast(w, msgs)[0]) for _ in range(trials))
    mean, sd = trials * 0.5, math.sqrt(trials * 0.25)
    assert abs(delivered - mean) <= 3 * sd


def test_measure_distance_noiseless_and_range():
    w = world([(0, 0), (0.07, 0), (0.12, 0)])
    assert measure_distance(w, 0, 1) == pytest.approx(0.07, abs=1e-15)
    with pytest.raises(NotInRange):
        measure_distance(w, 0, 2)


def test_measure_distance_noise_is_unbiased():
    w = world([(0, 0), (0.05, 0)], sensing_noise_std=0.001)
    g = np.random.default_rng(9)
    n = 100_000
    samples = np.array([measure_distance(w, 0, 1, g) for _ in range(n)])
    assert abs(samples.mean() - 0.05) <= 3 * 0.001 / math.sqrt(n)


def test_stop_and_forward():
    cfg = WorldConfig()
    b = RobotBody(0, Pose(0.1, 0.2, 0.0), D)
    assert apply_motion(b, MotionCommand.STOP, cfg) == b
    f = apply_motion(b, MotionCommand.FORWARD, cfg)
    assert f.pose.x == pytest.approx(0.1 + cfg.speed, abs=1e-15)
    assert f.pose.y == 0.2


def test_motion_matches_closed_form_integrator(rng):
    cfg = WorldConfig()
    cmds = rng.integers(0, 4, 1000).tolist()
    b = RobotBody(0, Pose(0, 0, 0.3), D)
    for c in cmds:
        b = apply_motion(b, MotionCommand(c), cfg)
    x, y, h = integrate(0, 0, 0.3, cmds, cfg.speed, cfg.turn_rate)
    assert abs(b.pose.x - x) < 1e-9 and abs(b.pose.y - y) < 1e-9
    assert abs(math.remainder(b.pose.heading - h, 2 * math.pi)) < 1e-9


def test_no_overlap_is_a_fixpoint():
    w = world([(0, 0), (2 * D, 0)])
    w.moving[:] = True
    out = resolve_collisions(w)
    assert np.array_equal(out.poses, w.poses)


def test_two_movers_split_the_correction():
    eps = 0.001
    w = world([(0, 0), (D - 2 * eps, 0)])
    w.moving[:] = True
    out = resolve_collisions(w)
    assert out.poses[0, 0] == pytest.approx(-eps, abs=1e-12)
    assert out.poses[1, 0] == pytest.approx(D - eps, abs=1e-12)


def test_mover_takes_full_correction_against_stationary():
    delta = 0.002
    w = world([(0, 0), (D - delta, 0)])
    w.moving[:] = [False, True]
    out = resolve_collisions(w)
    assert out.poses[0, 0] == 0.0
    assert out.poses[1, 0] == pytest.approx(D, abs=1e-12)


def test_crowded_resolution_leaves_no_overlap(rng):
    pts = rng.uniform(0, 5 * D, size=(20, 2))
    w = world(pts.tolist(), collision_max_iterations=500)
    w.moving[:] = True
    out = resolve_collisions(w)
    assert out.diagnostics["residual_overlap"] <= 1e-9


def test_all_stop_only_advances_tick():
    w = world([(0, 0), (0.05, 0)])
    out = step(w, [Scripted(0), Scripted(1)])
    assert out.tick == 1
    assert np.array_equal(out.poses, w.poses)


def test_step_trajectory_matches_apply_motion_chain(rng):
    cfg = WorldConfig()
    cmds = [MotionCommand(int(c)) for c in rng.integers(1, 4, 50)]
    w = WorldState.create([Pose(0, 0, 1.0)], cfg)
    ctrl = Scripted(0, cmds)
    b = RobotBody(0, Pose(0, 0, 1.0), D)
    for c in cmds:
        w = step(w, [ctrl])
        b = apply_motion(b, c, cfg)
        assert tuple(w.poses[0]) == (b.pose.x, b.pose.y, b.pose.heading)


def test_step_delivers_inbox_and_sensing():
    w = world([(0, 0), (0.05, 0), (0.3, 0)])
    ctrls = [Scripted(i) for i in range(3)]
    step(w, ctrls)
    assert [m.sender for m in ctrls[0].inboxes[0]] == [1]
    assert ctrls[0].sensing[0] == {1: pytest.approx(0.05)}
    assert ctrls[2].inboxes[0] == []


def test_step_is_deterministic():
    def stream():
        g = np.random.default_rng(4)
        pts = g.uniform(0, 0.15, size=(12, 2))
        w = WorldState.create(
            [Pose(x, y, 0) for x, y in pts],
            WorldConfig(message_loss_prob=0.3, motion_noise_std=1e-4, heading_noise_std=0.01, sensing_noise_std=1e-4, rng_seed=11),
        )
        cmds = g.integers(0, 4, size=(12, 40))
        ctrls = [Scripted(i, [MotionCommand(int(c)) for c in cmds[i]]) for i in range(12)]
        out = []
        for _ in range(40):
            w = step(w, ctrls)
            out.append(w.serialize())
        return out, [c.sensing for c in ctrls]

    a, b = stream(), stream()
    assert a == b


def test_controller_failure_is_wrapped():
    class Broken(Scripted):
        def act(self, inbox, sensing, tick):
            raise RuntimeError("boom")

    w = world([(0, 0)])
    with pytest.raises(ControllerError) as info:
        step(w, [Broken(0)])
    assert info.value.robot_id == 0 and info.value.tick == 0
