"""Two ways the baseline algorithm can get stuck.

1. Holes. Robots follow the outer edge of the aggregate, so an enclosed
   vacancy is never visited. The harness counts holes up front and refuses
   a holed figure in baseline mode unless told otherwise.

2. Nobody to talk to. A robot only gets a gradient from stationary robots
   next to it. One placed out of radio range of everyone else never gets a
   gradient and never starts moving.

    python3 demos/03_holes_and_deadlock.py
"""

import dataclasses
import os

from swarm_assembly import harness
from swarm_assembly.errors import ConfigError
from swarm_assembly.shape import count_holes, is_connected
from swarm_assembly.world import Pose

HERE = os.path.dirname(os.path.abspath(__file__))


def holes():
    config = harness.load_config(os.path.join(HERE, "scenarios", "annulus_baseline.cfg"))
    shape = harness.load_scenario_shape(config)
    print(f"annulus: connected={is_connected(shape)}, holes={count_holes(shape)}")
    try:
        harness.run(config, write=False)
    except ConfigError as exc:
        print(f"baseline run refused: {exc}")

    # forced through, the inner ring stays empty
    forced = dataclasses.replace(config, override_holes=True, max_ticks=30000)
    result = harness.run(forced, write=False)
    print(f"with override_holes: {result.status}, fill ratio {result.metrics.fill_ratio:.3f}, phases {result.phase_counts()}")


def deadlock():
    config = harness.load_config(
        os.path.join(HERE, "scenarios", "rectangle_baseline.cfg"),
        {"robot_count": "5", "max_ticks": "10000", "stall_window": "0"},
    )
    shape = harness.load_scenario_shape(config)
    seeds = [Pose(x, y, 0.0) for x, y in harness.default_seed_sites(shape, config.diameter)]
    loner = Pose(-0.5, -0.5, 0.0)  # 50 cm away, radio reaches 10 cm
    result = harness.run(config, write=False, poses=seeds + [loner], shape=shape)
    robot = result.robots[-1]
    print(f"\nisolated robot after {result.world.tick} ticks: phase {robot.phase.value}, gradient {robot.state.gradient}")
    print(f"deadlocked robots reported: {result.metrics.deadlocked_robots}")


if __name__ == "__main__":
    holes()
    deadlock()
