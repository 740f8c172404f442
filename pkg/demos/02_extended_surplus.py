"""Extended mode: no harness help at either end.

Every robot starts in leader election. The lowest id wins, names its three
nearest neighbours and the four become the seed cluster in their own frame.
Assembly then runs as in the baseline, and each waiting robot counts the
ticks since it last heard of a join. Once that count reaches the quiescence
window the robot declares itself surplus, so nobody has to pick up the
leftovers by hand.

The scenario uses ten robots more than the rectangle can hold. Ideally
exactly ten end up surplus; every vacancy the assembly leaves behind shows
up as one more.

    python3 demos/02_extended_surplus.py
"""

import os

from swarm_assembly import harness
from swarm_assembly.protocol import Phase
from swarm_assembly.shape import capacity

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    config = harness.load_config(os.path.join(HERE, "scenarios", "rectangle_extended.cfg"))
    shape = harness.load_scenario_shape(config)
    cap = capacity(shape, config.diameter)
    print(f"capacity {cap}, robots {config.robot_count}: {config.robot_count - cap} too many")

    result = harness.run(config)
    m = result.metrics

    seeds = [e for e in result.events if e.kind == "seed"]
    print(f"\nseed cluster formed at tick {seeds[-1].tick}: {' '.join(e.payload for e in seeds)}")
    print(f"status {result.status} after {result.world.tick} ticks")
    print("final phases:", result.phase_counts())
    print(f"surplus flagged {m.surplus_flagged}, expected {m.surplus_expected}")
    print(f"fill ratio {m.fill_ratio:.3f}")
    print(f"manual steps: {m.human_interventions}")

    # surplus soundness: nobody who joined was flagged afterwards
    flagged_after_join = [
        r.id for r in result.robots if r.phase is Phase.SURPLUS and any(new is Phase.JOINED for _, _, new in r.transitions)
    ]
    print(f"joined robots later flagged: {flagged_after_join or 'none'}")

    frame = harness.render(result.trace, shape, result.trace.final.tick, config.diameter)
    path = os.path.join(config.output_dir, "final.ppm")
    with open(path, "wb") as fh:
        fh.write(frame)
    print(f"frame: {path}")


if __name__ == "__main__":
    main()
