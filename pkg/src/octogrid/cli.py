"""``octogrid`` command line: benchmarks, verification, replay and rendering.

Exit status is 0 when every assertion of the chosen command holds, 1 when
one fails and 2 on bad arguments or input files.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from ._parallel import WORKERS_ENV, default_workers
from .errors import ConfigError, FormatError, OutOfBoundsError
from .experiments import (DRIVERS, RunConfig, ratio_trend_violations, write_metrics,
                          write_summary)
from .geometry import Aabb
from .grid import load_grid, save_grid
from .pipeline import pomp_map
from .planners import plan
from .render import render_svg, save_svg
from .replay import BLOCK, DROP_OLDEST, replay
from .scenes import (CUBES_WORKSPACE, StreamReader, gen_cylinder_scene, gen_mixed_scene,
                     gen_moving_cubes, load_cloud, save_cloud, write_stream)
from .verify import run_all

log = logging.getLogger("octogrid")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t]


def _vec(text: str) -> tuple[float, float, float]:
    v = _floats(text)
    if len(v) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    return v[0], v[1], v[2]


def _box(text: str) -> Aabb:
    v = _floats(text)
    if len(v) != 6:
        raise argparse.ArgumentTypeError("expected xmin,ymin,zmin,xmax,ymax,zmax")
    return Aabb(tuple(v[:3]), tuple(v[3:]))


def _bench_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--resolutions", type=_floats, help="comma separated cell sizes (m)")
    p.add_argument("--ratios", type=_floats, help="comma separated threshold ratios")
    p.add_argument("--seeds", type=_ints, help="comma separated base seeds")
    p.add_argument("--trials", type=int, help="scenes per base seed")
    p.add_argument("--workers", type=_ints,
                   help=f"comma separated worker counts (default ${WORKERS_ENV} or CPU count)")
    p.add_argument("--scale", type=float, help="fraction of the full-size point count")
    p.add_argument("--repeats", type=int, help="timed repetitions")
    p.add_argument("--warmup", type=int, help="discarded warm-up repetitions")
    p.add_argument("--cylinders", type=int, help="cylinders per scene")
    p.add_argument("--frames", type=int, help="frames for ratio-sweep")
    p.add_argument("--planners", type=lambda s: s.split(","), help="astar,jps")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (default results)")
    p.add_argument("--trend-allowance", type=float, default=0.02,
                   help="ratio-sweep: tolerated rate increase between adjacent ratios")


_CFG_KEYS = ("resolutions", "ratios", "seeds", "trials", "workers", "scale", "repeats",
             "warmup", "cylinders", "frames", "planners", "out_dir")


def _run_config(name: str, args) -> RunConfig:
    overrides = {k: getattr(args, k) for k in _CFG_KEYS}
    if args.config:
        return RunConfig.from_file(args.config, experiment=name, **overrides)
    return RunConfig(name, **{k: v for k, v in overrides.items() if v is not None})


def _print_table(rows: list[dict]) -> None:
    if not rows:
        return
    cols = list(rows[0])
    print("  ".join(cols))
    for r in rows:
        print("  ".join(f"{r[c]:.4g}" if isinstance(r[c], float) else str(r[c]) for c in cols))


def cmd_bench(args) -> int:
    cfg = _run_config(args.command, args)
    points = load_cloud(args.cloud) if getattr(args, "cloud", None) else None
    if points is not None and args.command != "build-bench":
        raise ConfigError("--cloud is only supported by build-bench")
    report = DRIVERS[args.command](cfg, points) if points is not None else \
        DRIVERS[args.command](cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = args.command.replace("-", "_")
    write_metrics(out / f"{stem}.csv", report.rows, cfg)
    write_summary(out / f"{stem}_summary.csv", report.summary)
    _print_table(report.summary)
    failures = list(report.failures)
    if args.command == "ratio-sweep":
        trend = ratio_trend_violations(report.summary, sorted(cfg.ratios, reverse=True),
                                       args.trend_allowance)
        for line in trend:
            log.warning("trend: %s", line)
    if args.command == "build-bench":
        for row in report.summary:
            if row["workers"] >= 8 and row["speedup"] < 1.5:
                log.warning("speedup %.2fx with %d workers at resolution %g is below 1.5x",
                            row["speedup"], row["workers"], row["resolution"])
    for line in failures:
        print(f"FAIL {line}")
    print(f"{len(report.rows)} rows written to {out / (stem + '.csv')}")
    return 0 if not failures else 1


def cmd_verify(args) -> int:
    results = run_all(inject_fault=args.inject_fault, only=args.only)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}" + (f": {r.detail}" if r.detail else ""))
    return 0 if all(r.passed for r in results) else 1


def cmd_replay(args) -> int:
    reader = StreamReader(args.stream)
    ws = args.workspace or reader.header.workspace
    plan_pts = (args.start, args.goal) if args.start and args.goal else None
    res = replay(reader, ws, args.resolution, args.ratio, capacity=args.capacity,
                 policy=args.policy, rate=args.rate, consumer_delay=args.consumer_delay,
                 worker_count=args.workers, plan=plan_pts)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["frame", "timestamp", "points", "build_ms", "project_ms", "occupied", "latency_ms",
            "plan_success", "path_len_m", "plan_ms"]
    with open(out / "replay.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# octogrid-replay v1 capacity={res.capacity} policy={args.policy} "
                 f"produced={res.produced} consumed={res.consumed} dropped={res.dropped} "
                 f"max_in_flight={res.max_in_flight}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in res.rows:
            w.writerow(["" if getattr(row, c) is None else getattr(row, c) for c in cols])
    if res.grid is not None:
        save_grid(res.grid, out / "final.grid")
    print(f"produced {res.produced} consumed {res.consumed} dropped {res.dropped} "
          f"max in flight {res.max_in_flight}/{res.capacity}")
    t = res.timings
    print(f"build {t['build_ms_mean']:.2f} +- {t['build_ms_std']:.2f} ms, "
          f"project {t['project_ms_mean']:.2f} +- {t['project_ms_std']:.2f} ms")
    ok = res.produced == res.consumed + res.dropped and res.max_in_flight <= res.capacity
    return 0 if ok else 1


def cmd_render(args) -> int:
    tree = None
    path = None
    if args.input.endswith(".grid"):
        grid = load_grid(args.input)
    else:
        if args.workspace is None or args.resolution is None:
            raise ConfigError("rendering a cloud needs --workspace and --resolution")
        m = pomp_map(load_cloud(args.input), args.workspace, args.resolution, args.ratio,
                     store_points=False)
        grid, tree = m.grid, m.tree
    if args.start and args.goal:
        result = plan(grid, args.start, args.goal, args.planner)
        if result.success:
            path = result.path
        else:
            log.warning("no path: %s", result.reason)
    svg = render_svg(grid, args.z, tree=tree if args.leaves else None, path=path)
    save_svg(args.output, svg)
    print(f"wrote {args.output}")
    return 0


def cmd_gen(args) -> int:
    if args.command == "gen-stream":
        cubes = gen_moving_cubes(args.seed, args.count, args.points)
        n = write_stream(args.output, cubes.frames(args.frames), CUBES_WORKSPACE, args.points)
        print(f"wrote {n} frames to {args.output}")
        return 0
    if args.kind == "cylinders":
        _, pts = gen_cylinder_scene(args.seed, args.count, args.points)
    else:
        _, pts = gen_mixed_scene(args.seed, args.count, args.count, args.count, args.points)
    save_cloud(args.output, pts)
    print(f"wrote {len(pts)} points to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="octogrid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("build-bench", "serial vs parallel octree build times"),
                       ("map-bench", "octree build + projection vs direct grid marking"),
                       ("nsr-bench", "navigable space ratio on mixed-shape worlds"),
                       ("plan-bench", "A*/JPS success and length on cylinder worlds"),
                       ("ratio-sweep", "path-finding rate per threshold ratio, moving cubes")]:
        p = sub.add_parser(name, help=text)
        _bench_flags(p)
        if name == "build-bench":
            p.add_argument("--cloud", help="time this cloud file instead of a generated scene")
        p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="run the equivalence and soundness checks")
    p.add_argument("--inject-fault", action="store_true",
                   help="corrupt one leaf state before fingerprinting (must fail)")
    p.add_argument("--only", type=lambda s: s.split(","), help="subset of checks")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("replay", help="stream frames through the mapper")
    p.add_argument("stream")
    p.add_argument("--resolution", type=float, default=1.0)
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--capacity", type=int, default=4)
    p.add_argument("--policy", choices=[DROP_OLDEST, BLOCK], default=DROP_OLDEST)
    p.add_argument("--rate", type=float, help="playback speed; omit for max rate")
    p.add_argument("--consumer-delay", type=float, default=0.0, help="seconds per frame")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--workspace", type=_box, help="override the stream header workspace")
    p.add_argument("--start", type=_vec)
    p.add_argument("--goal", type=_vec)
    p.add_argument("--out-dir", default="results")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("render", help="SVG of one z-slice of a grid or of a cloud's map")
    p.add_argument("input", help=".grid dump or a cloud file (.xyz/.ply/.bin)")
    p.add_argument("output")
    p.add_argument("--z", type=float, help="slice height (default: middle layer)")
    p.add_argument("--workspace", type=_box)
    p.add_argument("--resolution", type=float)
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--leaves", action="store_true", help="draw leaves and region states")
    p.add_argument("--start", type=_vec)
    p.add_argument("--goal", type=_vec)
    p.add_argument("--planner", default="astar", choices=["astar", "jps"])
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("gen-stream", help="write a moving-cube frame stream")
    p.add_argument("output")
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--count", type=int, default=800)
    p.add_argument("--points", type=int, default=70_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("gen-cloud", help="write a random scene cloud")
    p.add_argument("output")
    p.add_argument("--kind", choices=["cylinders", "mixed"], default="cylinders")
    p.add_argument("--count", type=int, default=20, help="shapes (per kind for mixed)")
    p.add_argument("--points", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        default_workers()
        return args.func(args)
    except (ConfigError, FormatError, OutOfBoundsError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
