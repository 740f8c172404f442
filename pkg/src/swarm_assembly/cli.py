"""Command-line interface: ``python -m swarm_assembly <command> ...``.

Exit status is 0 on success, 1 for configuration or shape problems and 2
for failures during a run.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import harness
from .errors import ConfigError, PlacementOverflow, ShapeError, SwarmAssemblyError
from .metrics import MetricsReport
from .shape import capacity, count_holes, is_connected, load_shape_file
from .trace import Trace

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "seed", None) is not None:
        out["rng_seed"] = args.seed
    if getattr(args, "out", None) is not None:
        out["output_dir"] = args.out
    if getattr(args, "override_holes", False):
        out["override_holes"] = "true"
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def cmd_validate_shape(args) -> int:
    try:
        shape = load_shape_file(args.shape, args.cell_size)
    except OSError as exc:
        raise ShapeError(f"cannot read {args.shape}: {exc}") from None
    except SwarmAssemblyError as exc:
        raise ShapeError(f"{args.shape}: {exc}") from None
    holes = count_holes(shape)
    print(f"width = {shape.width}")
    print(f"height = {shape.height}")
    print(f"cells = {int(shape.occupied.sum())}")
    print(f"connected = {str(is_connected(shape)).lower()}")
    print(f"hole_count = {holes}")
    if args.diameter:
        print(f"capacity = {capacity(shape, args.diameter)}")
    return EXIT_OK


def _report_run(result) -> None:
    m = result.metrics
    print(f"status = {result.status}")
    print(f"ticks = {result.world.tick}")
    print(f"digest = {result.digest}")
    print(f"fill_ratio = {m.fill_ratio!r}")
    print(f"surplus_flagged = {m.surplus_flagged}")
    print(f"human_interventions = {m.human_interventions}")
    for name, path in result.paths.items():
        print(f"{name}_file = {path}")


def cmd_run(args) -> int:
    config = harness.load_config(args.config, _overrides(args))
    result = harness.run(config)
    _report_run(result)
    return EXIT_RUNTIME if result.status == "Error" else EXIT_OK


def _sweep_one(job):
    config_path, overrides = job
    config = harness.load_config(config_path, overrides)
    try:
        result = harness.run(config)
    except (ConfigError, ShapeError, PlacementOverflow) as exc:
        return overrides, "ConfigError", repr(exc)
    return overrides, result.status, result.digest


def cmd_sweep(args) -> int:
    base = _overrides(args)
    axes = []
    for spec in args.vary or []:
        key, sep, values = spec.partition("=")
        if not sep or not values:
            raise ConfigError(f"--vary expects key=v1,v2,..., got {spec!r}")
        axes.append([(key.strip(), v.strip()) for v in values.split(",")])
    root = base.get("output_dir") or harness.load_config(args.config).output_dir
    jobs = []
    for combo in itertools.product(*axes):
        ov = dict(base)
        ov.update(combo)
        tag = "_".join(f"{k}-{v}" for k, v in combo) or "base"
        ov["output_dir"] = os.path.join(root, tag)
        harness.load_config(args.config, ov)  # fail early on bad values
        jobs.append((args.config, ov))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    worst = EXIT_OK
    for ov, status, info in results:
        print(f"{ov['output_dir']}: {status} {info}")
        if status == "Error":
            worst = max(worst, EXIT_RUNTIME)
        elif status == "ConfigError":
            worst = max(worst, EXIT_CONFIG)
    return worst


def cmd_render(args) -> int:
    if args.config:
        config = harness.load_config(args.config, _overrides(args))
        shape = harness.load_scenario_shape(config)
        diameter = config.diameter
        ppc = config.pixels_per_cell if args.pixels is None else args.pixels
        trace_path = args.trace or os.path.join(config.output_dir, harness.TRACE_FILE)
    else:
        raise ConfigError("render needs --config")
    trace = Trace.read(trace_path)
    tick = trace.final.tick if args.tick is None else args.tick
    data = harness.render(trace, shape, tick, diameter, ppc, nearest=args.nearest)
    out = args.image or os.path.join(os.path.dirname(trace_path), f"frame_{tick:08d}.ppm")
    with open(out, "wb") as fh:
        fh.write(data)
    print(out)
    return EXIT_OK


def cmd_report(args) -> int:
    config = harness.load_config(args.config, _overrides(args))
    base = config.output_dir
    trace_path = args.trace or os.path.join(base, harness.TRACE_FILE)
    events_path = args.events or os.path.join(base, harness.EVENTS_FILE)
    report = harness.report_from_files(config, trace_path, events_path)
    text = report.to_text()
    sys.stdout.write(text)
    if args.check:
        with open(args.check) as fh:
            stored = MetricsReport.from_text(fh.read())
        if stored.to_text() != text:
            print("metrics differ from stored file", file=sys.stderr)
            return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swarm_assembly", description="Swarm self-assembly simulator and metrics harness.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required):
        sp.add_argument("--config", required=config_required, help="scenario file (key = value lines)")
        sp.add_argument("--seed", type=int, help="override the RNG seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--override-holes", action="store_true", help="allow holed shapes in baseline mode")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")

    sp = sub.add_parser("validate-shape", help="check a shape file and print its statistics")
    sp.add_argument("shape")
    sp.add_argument("--cell-size", type=float, default=1.0)
    sp.add_argument("--diameter", type=float, help="robot diameter, to report capacity")
    sp.set_defaults(func=cmd_validate_shape)

    sp = sub.add_parser("run", help="run one scenario")
    common(sp, True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run the cartesian product of --vary lists")
    common(sp, True)
    sp.add_argument("--vary", action="append", metavar="KEY=V1,V2", help="values to sweep for one key")
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("render", help="write a PPM frame of a stored trace")
    common(sp, True)
    sp.add_argument("--tick", type=int, help="sampled tick (default: last)")
    sp.add_argument("--nearest", action="store_true", help="use the nearest sampled tick")
    sp.add_argument("--trace", help="trace file (default: <out>/trace.csv)")
    sp.add_argument("--image", help="output image path")
    sp.add_argument("--pixels", type=int, help="pixels per shape cell")
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("report", help="recompute metrics from a stored trace")
    common(sp, True)
    sp.add_argument("--trace", help="trace file (default: <out>/trace.csv)")
    sp.add_argument("--events", help="event log (default: <out>/events.log)")
    sp.add_argument("--check", metavar="METRICS", help="compare against a stored metrics file")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ShapeError, PlacementOverflow) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SwarmAssemblyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
