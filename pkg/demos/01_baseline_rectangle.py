"""Baseline self-assembly of a solid rectangle.

Thirty robots start as a hex-packed blob just below the target rectangle.
The harness places four seed robots in its lower-left corner (the first of
the two manual steps), the rest spread a hop-count gradient, peel off one
at a time from the outside of the blob and edge-follow the aggregate until
the join rule stops them inside the figure. When no more robots are
waiting or moving the harness sweeps up whatever is left (the second
manual step).

Run from the repository root:

    python3 demos/01_baseline_rectangle.py
"""

import os

from swarm_assembly import harness
from swarm_assembly.shape import capacity

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    config = harness.load_config(os.path.join(HERE, "scenarios", "rectangle_baseline.cfg"))
    shape = harness.load_scenario_shape(config)
    print(f"target: {shape.width} x {shape.height} cells, room for {capacity(shape, config.diameter)} robots")
    print(f"robots: {config.robot_count} (4 seeds + {config.robot_count - 4} movers)")

    result = harness.run(config)
    m = result.metrics
    print(f"\nstatus {result.status} after {result.world.tick} ticks")
    print("final phases:", result.phase_counts())
    print(f"fill ratio {m.fill_ratio:.3f}  (assembled robots inside / capacity)")
    print(f"last join at tick {m.assembly_ticks}")
    print(f"peak fraction of robots moving at once {max(m.active_fraction_series):.3f}")
    print(f"movers ever boxed in by stationary robots: {m.periphery_violations}")
    print(f"mover speed {m.body_lengths_per_second:.3f} body lengths/s "
          f"(bacteria for comparison: {m.reference_e_coli} and {m.reference_m_jannaschii})")
    print(f"manual steps: {m.human_interventions}")

    # the log shows when each robot joined and the two harness actions
    joins = [e for e in result.events if e.kind == "join"]
    print(f"\nfirst joins: {', '.join(f'{e.payload} @ {e.tick}' for e in joins[:5])} ...")
    for e in result.events:
        if e.kind == "intervention":
            print(f"harness action at tick {e.tick}: {e.payload}")

    frame = harness.render(result.trace, shape, result.trace.final.tick, config.diameter)
    path = os.path.join(config.output_dir, "final.ppm")
    with open(path, "wb") as fh:
        fh.write(frame)
    print(f"\nfiles: {', '.join(result.paths.values())}, {path}")


if __name__ == "__main__":
    main()
