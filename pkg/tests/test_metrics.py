import math

import numpy as np
import pytest

from swarm_assembly.errors import MalformedInput, NoMotionRecorded, ZeroCapacity
from swarm_assembly.harness import Event
from swarm_assembly.metrics import (
    REFERENCE_E_COLI,
    REFERENCE_M_JANNASCHII,
    MetricsReport,
    active_fraction_series,
    assembly_ticks,
    compute_report,
    deadlocked_robots,
    fill_ratio,
    intervention_count,
    is_enclosed,
    motility_index,
    periphery_violations,
)
from swarm_assembly.protocol import INF, Phase
from swarm_assembly.shape import capacity, hex_sites, load_shape
from swarm_assembly.trace import Trace

D = 0.033
SQ = math.sqrt(3) / 2
RECT = load_shape("\n".join(["#" * 10] * 6), cell_size=D)


def snap_trace(frames):
    """frames: list of (tick, [(x, y, phase, gradient), ...])"""
    t = Trace()
    for tick, rows in frames:
        t.add(tick, range(len(rows)), [(x, y, 0.0) for x, y, _, _ in rows], [r[2] for r in rows], [r[3] for r in rows])
    return t


# -- fill ratio ---------------------------------------------------------------------


def test_fill_ratio_nobody_joined():
    sites = hex_sites(RECT, D)
    assert fill_ratio([Phase.WAIT_TO_MOVE] * 3, sites[:3], RECT, D) == 0


def test_fill_ratio_full():
    sites = hex_sites(RECT, D)
    assert len(sites) == capacity(RECT, D)
    assert fill_ratio([Phase.JOINED] * len(sites), sites, RECT, D) == 1.0


def test_fill_ratio_seven_of_ten():
    # 3 x 4 cells of a diameter each hold 10 sites
    shape = load_shape("###\n###\n###\n###", cell_size=D)
    sites = hex_sites(shape, D)
    assert capacity(shape, D) == 10 == len(sites)
    phases = [Phase.JOINED] * 5 + [Phase.SEED] * 2 + [Phase.WAIT_TO_MOVE] * 3
    assert fill_ratio(phases, sites, shape, D) == pytest.approx(0.7, abs=0)


def test_fill_ratio_ignores_joined_outside():
    assert fill_ratio([Phase.JOINED], [(-D, -D)], RECT, D) == 0


def test_fill_ratio_zero_capacity():
    tiny = load_shape("#", cell_size=D / 2)
    with pytest.raises(ZeroCapacity):
        fill_ratio([], [], tiny, D)


# -- motility -------------------------------------------------------------------------


@pytest.mark.parametrize("speed,tick_duration,stride", [(D, 1.0, 1), (0.01, 0.1, 7), (0.0123, 0.05, 100)])
def test_motility_constant_speed(speed, tick_duration, stride):
    frames = []
    for k in range(20):
        t = k * stride
        dist = speed * t  # speed is metres per tick
        frames.append((t, [(dist, 0.0, Phase.EDGE_FOLLOW, 3), (5.0, 5.0, Phase.JOINED, 2)]))
    # quantization of 6 decimals bounds the error, so keep the check honest
    trace = snap_trace(frames)
    got = motility_index(trace, D, tick_duration)
    exact_path = trace.snapshots[-1].xy[0, 0] - trace.snapshots[0].xy[0, 0]
    expected = exact_path / (19 * stride) / D / tick_duration
    assert abs(got - expected) < 1e-9
    assert got == pytest.approx(speed / D / tick_duration, rel=1e-4)


def test_one_diameter_per_second_is_one():
    trace = snap_trace([(t, [(t * D, 0.0, Phase.EDGE_FOLLOW, 1)]) for t in range(5)])
    assert motility_index(trace, D, 1.0) == pytest.approx(1.0, abs=1e-9)


def test_motility_needs_a_mover():
    trace = snap_trace([(0, [(0, 0, Phase.WAIT_TO_MOVE, 1)]), (1, [(0, 0, Phase.JOINED, 1)])])
    with pytest.raises(NoMotionRecorded):
        motility_index(trace, D, 1.0)


def test_reference_constants():
    assert (REFERENCE_E_COLI, REFERENCE_M_JANNASCHII) == (20, 500)
    text = MetricsReport(0.5, 10, (0.0,), 0, 0, 1.0, 2, 0, 0, 0).to_text()
    assert "reference_e_coli = 20\n" in text and "reference_m_jannaschii = 500\n" in text


# -- periphery ------------------------------------------------------------------------


def ring(center, radius, count):
    a = np.arange(count) * 2 * math.pi / count
    return np.column_stack([center[0] + radius * np.cos(a), center[1] + radius * np.sin(a)])


def test_enclosure_fixture():
    # eight overlapping discs; a ring of six only touches, leaving gaps
    discs = ring((0, 0), 1.2 * D, 8)
    assert is_enclosed((0, 0), discs, D / 2)
    assert not is_enclosed((0, 0), discs[:7], D / 2)
    assert not is_enclosed((0, 0), ring((0, 0), D, 6), D / 2)
    assert not is_enclosed((0, 0), [], D / 2)


def test_mover_orbiting_convex_cluster():
    cluster = [(0, 0)] + [tuple(p) for p in ring((0, 0), D, 6)]
    frames = []
    for k, a in enumerate(np.linspace(0, 2 * math.pi, 36, endpoint=False)):
        mover = (2 * D * math.cos(a), 2 * D * math.sin(a), Phase.EDGE_FOLLOW, 2)
        frames.append((k, [(x, y, Phase.JOINED, 1) for x, y in cluster] + [mover]))
    assert periphery_violations(snap_trace(frames), 1, D / 2) == 0


def test_ringed_mover_counts_once_per_sample():
    frames = []
    for t in range(0, 500, 100):
        rows = [(x, y, Phase.JOINED, 1) for x, y in ring((0, 0), 1.2 * D, 8)] + [(0, 0, Phase.EDGE_FOLLOW, 2)]
        frames.append((t, rows))
    trace = snap_trace(frames)
    assert periphery_violations(trace, 1, D / 2) == 5
    assert periphery_violations(trace, 200, D / 2) == 3  # ticks 0, 200, 400
    with pytest.raises(ValueError):
        periphery_violations(trace, 0)


# -- other series and counts ---------------------------------------------------------


def test_active_fraction():
    trace = snap_trace(
        [
            (0, [(0, 0, Phase.WAIT_TO_MOVE, 1), (1, 0, Phase.WAIT_TO_MOVE, 1)]),
            (1, [(0, 0, Phase.EDGE_FOLLOW, 1), (1, 0, Phase.WAIT_TO_MOVE, 1)]),
        ]
    )
    assert active_fraction_series(trace) == [0.0, 0.5]


def test_deadlocked_robots():
    trace = snap_trace(
        [
            (0, [(0, 0, Phase.SEED, 0), (1, 0, Phase.WAIT_TO_MOVE, 1), (9, 9, Phase.WAIT_TO_MOVE, INF)]),
            (1, [(0, 0, Phase.SEED, 0), (1, 0, Phase.EDGE_FOLLOW, 1), (9, 9, Phase.WAIT_TO_MOVE, INF)]),
            (2, [(0, 0, Phase.SEED, 0), (1, 0, Phase.JOINED, 1), (9, 9, Phase.SURPLUS, INF)]),
        ]
    )
    assert deadlocked_robots(trace) == 1


def test_waiting_with_gradient_is_not_deadlocked():
    trace = snap_trace([(t, [(0, 0, Phase.WAIT_TO_MOVE, 2)]) for t in range(3)])
    assert deadlocked_robots(trace) == 0


def test_intervention_count():
    assert intervention_count("baseline") == 2
    assert intervention_count("extended", []) == 0
    log = [Event(0, "join", "id=5"), Event(40, "intervention", "manual_seeding ids=0 1 2 3"), Event(90, "end", "Completed")]
    assert intervention_count("extended", log) == 1
    with pytest.raises(ValueError):
        intervention_count("other")


def test_assembly_ticks():
    trace = snap_trace(
        [
            (0, [(0, 0, Phase.WAIT_TO_MOVE, 1), (1, 0, Phase.WAIT_TO_MOVE, 1)]),
            (100, [(0, 0, Phase.JOINED, 1), (1, 0, Phase.WAIT_TO_MOVE, 1)]),
            (200, [(0, 0, Phase.JOINED, 1), (1, 0, Phase.JOINED, 1)]),
            (300, [(0, 0, Phase.JOINED, 1), (1, 0, Phase.JOINED, 1)]),
        ]
    )
    assert assembly_ticks(trace, True) == 200
    assert assembly_ticks(trace, False) == -1


# -- report ---------------------------------------------------------------------------


def sample_report():
    sites = hex_sites(RECT, D)
    frames = []
    for t in range(0, 400, 100):
        rows = [(x, y, Phase.SEED, 0) for x, y in sites[:4]]
        rows.append((sites[5][0] + 0.001 * t, sites[5][1] + 0.02, Phase.EDGE_FOLLOW if t < 300 else Phase.JOINED, 2))
        rows.append((-0.2, -0.2, Phase.WAIT_TO_MOVE, INF))
        frames.append((t, rows))
    return snap_trace(frames)


def test_report_round_trip():
    rep = compute_report(sample_report(), RECT, D, 1.0)
    text = rep.to_text()
    again = MetricsReport.from_text(text)
    assert again == rep and again.to_text() == text
    keys = [line.split(" = ")[0] for line in text.splitlines()]
    assert keys[:10] == [
        "fill_ratio",
        "assembly_ticks",
        "active_fraction_series",
        "periphery_violations",
        "deadlocked_robots",
        "body_lengths_per_second",
        "human_interventions",
        "hole_count",
        "surplus_flagged",
        "surplus_expected",
    ]
    assert rep.human_interventions == 2 and rep.deadlocked_robots == 1
    # the late joiner stopped outside the rectangle, so only the seeds count
    assert rep.fill_ratio == 4 / 57 and rep.surplus_expected == 0


def test_report_recomputed_from_file(tmp_path):
    trace = sample_report()
    path = tmp_path / "trace.csv"
    trace.write(path)
    assert compute_report(Trace.read(path), RECT, D, 1.0).to_text() == compute_report(trace, RECT, D, 1.0).to_text()


def test_report_without_motion_has_nan_speed():
    trace = snap_trace([(0, [(0, 0, Phase.SEED, 0)])])
    rep = compute_report(trace, RECT, D, 1.0)
    assert math.isnan(rep.body_lengths_per_second)
    assert math.isnan(MetricsReport.from_text(rep.to_text()).body_lengths_per_second)


@pytest.mark.parametrize("text", ["fill_ratio 1", "fill_ratio = 0.5\n"])
def test_malformed_report(text):
    with pytest.raises(MalformedInput):
        MetricsReport.from_text(text)
