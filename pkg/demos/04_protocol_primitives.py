"""The distributed building blocks on their own.

A small random cluster of robots, no motion: watch the hop-count gradient
spread out from two seeds one round at a time, elect a leader by min-id
flooding, and localize a robot from its distances to three known
neighbours.

    python3 demos/04_protocol_primitives.py
"""

import math

import numpy as np

from swarm_assembly.protocol import ElectionFields, ElectionState, Message, election_step, gradient_update, localize
from swarm_assembly.world import Pose, WorldConfig, WorldState, adjacency, broadcast


def cluster(rng, n, d=0.033):
    pts = [(0.0, 0.0)]
    while len(pts) < n:
        bx, by = pts[int(rng.integers(len(pts)))]
        a, r = rng.uniform(0, 2 * math.pi), rng.uniform(d, 0.09)
        p = (bx + r * math.cos(a), by + r * math.sin(a))
        if min(math.dist(p, q) for q in pts) >= d:
            pts.append(p)
    return pts


def main():
    rng = np.random.default_rng(7)
    pts = cluster(rng, 25)
    world = WorldState.create([Pose(x, y, 0.0) for x, y in pts], WorldConfig())
    nbrs = adjacency(world)
    n = len(pts)

    seeds = {0, 1}
    g = [0 if k in seeds else math.inf for k in range(n)]
    print("gradient, one row per synchronous round (. = no gradient yet)")
    for rnd in range(8):
        print(f"  {rnd}: " + " ".join("." if v == math.inf else str(v) for v in g))
        inbox = broadcast(world, {k: Message(k, g[k]) for k in range(n)}, nbrs)
        g = [gradient_update(k in seeds, inbox[k]) for k in range(n)]

    ids = rng.permutation(100)[:n].tolist()
    states = [ElectionState.start(i) for i in ids]
    threshold = 8  # at least the hop diameter of this cluster
    tick = 0
    while not all(s.decided for s in states):
        tick += 1
        out = [Message(ids[k], election=ElectionFields(s.best_candidate, s.rounds_stable, s.decided)) for k, s in enumerate(states)]
        states = [election_step(states[k], ids[k], [out[j] for j in nbrs[k]], threshold) for k in range(n)]
    leader = [ids[k] for k, s in enumerate(states) if s.is_leader]
    print(f"\nelection: everyone decided by tick {tick}; leader {leader}, smallest id {min(ids)}")

    true = np.array([0.021, -0.013])
    anchors = [(0.0, 0.0), (0.033, 0.0), (0.0165, 0.0286)]
    est = localize(None, [(a, float(np.hypot(*(true - a)))) for a in anchors])
    print(f"\nlocalization: true {tuple(true)}, estimate ({est[0]:.9f}, {est[1]:.9f})")
    line = [(0.0, 0.0), (0.033, 0.0), (0.066, 0.0)]
    print(f"collinear anchors leave the estimate alone: {localize((1.0, 2.0), [(a, 0.05) for a in line])}")


if __name__ == "__main__":
    main()
