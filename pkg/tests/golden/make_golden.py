"""Regenerate the golden record for the small rectangle run.

    python3 tests/golden/make_golden.py

Only rerun this after a deliberate change to the controller or harness,
and check the diff of small_rect.json before committing it.
"""

import hashlib
import json
import os
import sys
import tempfile

from swarm_assembly import harness
from swarm_assembly.metrics import ASSEMBLED

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "small_rect.json")

SHAPE = "\n".join(["#" * 10] * 6) + "\n"
CONFIG = {"robot_count": "12", "seed": "4", "max_ticks": "20000", "trace_stride": "50"}


def produce():
    with tempfile.TemporaryDirectory() as tmp:
        shape_path = os.path.join(tmp, "rect.txt")
        with open(shape_path, "w") as fh:
            fh.write(SHAPE)
        text = f"shape_file = {shape_path}\noutput_dir = {tmp}/out\n"
        config = harness.parse_config(text, tmp, CONFIG)
        result = harness.run(config, write=False)
        shape = harness.load_scenario_shape(config)
    final = result.trace.final.tick
    frame = harness.render(result.trace, shape, final, config.diameter)
    return {
        "status": result.status,
        "final_tick": result.world.tick,
        "assembled_ids": sorted(r.id for r in result.robots if r.phase in ASSEMBLED),
        "world_sha256": result.digest,
        "trace_sha256": hashlib.sha256(result.trace.dumps().encode()).hexdigest(),
        "frame_sha256": hashlib.sha256(frame).hexdigest(),
    }


if __name__ == "__main__":
    record = produce()
    with open(OUT, "w") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")
    json.dump(record, sys.stdout, indent=2)
    print()
