"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict; the conftest prints them all in an
"acceptance criteria" section at the end of the run.
"""

import itertools
import math
import os
import statistics
import warnings

import numpy as np
import pytest

from octogrid.experiments import (RunConfig, build_bench, plan_trial, ratio_sweep,
                                  ratio_trend_violations)
from octogrid.geometry import Aabb, GridConfig, make_configs
from octogrid.grid import grid_new, navigable_space_ratio
from octogrid.octree import RegionState, build_parallel, build_serial, tree_fingerprint
from octogrid.pipeline import direct_map, pomp_map
from octogrid.planners import PlanRequest, astar, cell_world, jps
from octogrid.projection import resolve_pair
from octogrid.replay import BLOCK, DROP_OLDEST, replay
from octogrid.scenes import (CYLINDER_WORKSPACE, gen_cylinder_scene, gen_mixed_scene,
                             gen_moving_cubes, rng_for, uniform_cloud)
from octogrid.verify import projection_violations

from conftest import scipy_length

pytestmark = pytest.mark.slow


def verdict(record_property, ok, detail):
    record_property("detail", detail)
    print(f"{'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def varied_cloud(k, n):
    """Uniform, clustered or scene-like clouds in the cylinder workspace."""
    kind = k % 3
    if kind == 0:
        return uniform_cloud(k, n, CYLINDER_WORKSPACE)
    if kind == 1:
        rng = rng_for(k, 99)
        centers = rng.uniform(CYLINDER_WORKSPACE.min, CYLINDER_WORKSPACE.max, (8, 3))
        pts = centers[rng.integers(0, 8, n)] + rng.normal(0, 0.3, (n, 3))
        return np.clip(pts, CYLINDER_WORKSPACE.min, np.nextafter(CYLINDER_WORKSPACE.max, 0))
    return gen_cylinder_scene(k, 20, n)[1]


def test_criterion_1_parallel_serial_equivalence(record_property):
    rng = np.random.default_rng(2024)
    trials, mismatches = 120, []
    workers_seen = set()
    for k in range(trials):
        n = int(np.exp(rng.uniform(np.log(10_000), np.log(200_000))))
        res = float(np.exp(rng.uniform(np.log(0.05), np.log(2.0))))
        w = [1, 2, 4, 8][k % 4]
        workers_seen.add(w)
        pts = varied_cloud(k, n)
        tcfg, _ = make_configs(CYLINDER_WORKSPACE, res)
        par = build_parallel(pts, tcfg, w, chunk_size=int(rng.integers(64, 8192)))
        ser = build_serial(pts, tcfg)
        if tree_fingerprint(par) != tree_fingerprint(ser):
            mismatches.append((k, n, res, w))
    ok = not mismatches and workers_seen == {1, 2, 4, 8}
    verdict(record_property, ok,
            f"{trials - len(mismatches)}/{trials} clouds (10K-200K points, res 0.05-2.0, "
            f"workers 1/2/4/8) gave identical fingerprints")


def test_criterion_2_truth_table(record_property):
    C, S, U = RegionState.CLEAR, RegionState.SAFE, RegionState.UNSAFE

    def traced(f, t):
        # the projection routine's branch structure, written out independently
        if f == C:
            return (False, t != C)
        if f == S:
            return (False, True) if t != C else (True, False)
        return (True, t == U)

    wrong = [(f, t) for f, t in itertools.product(RegionState, repeat=2)
             if tuple(resolve_pair(f, t)) != traced(f, t)]
    anchors = {(U, U): (True, True), (S, C): (True, False), (C, C): (False, False),
               (S, S): (False, True), (U, S): (True, False), (C, U): (False, True)}
    wrong += [p for p, v in anchors.items() if tuple(resolve_pair(*p)) != v]
    verdict(record_property, not wrong,
            f"9/9 pair verdicts and {len(anchors)} anchor rows match" if not wrong
            else f"mismatches {wrong}")


def test_criterion_3_free_space_superset(record_property):
    resolutions = [1.0, 2.0, 3.0, 4.0, 5.0]
    seeds = range(120)
    violations = 0
    gaps = {r: [] for r in resolutions}
    for seed in seeds:
        spec, pts = gen_mixed_scene(seed, point_count=60_000)
        for res in resolutions:
            m = pomp_map(pts, spec.workspace, res, worker_count=1)
            d, _ = direct_map(pts, spec.workspace, res)
            if np.any((m.grid.cells == 1) & (d.cells == 0)):
                violations += 1
            a = navigable_space_ratio(m.grid, spec.workspace)
            b = navigable_space_ratio(d, spec.workspace)
            if a < b:
                violations += 1
            gaps[res].append(100 * (a - b))
    trials = len(seeds) * len(resolutions)
    coarse = statistics.fmean(gaps[resolutions[-1]])
    means = ", ".join(f"{r:g} m: {statistics.fmean(g):.2f}" for r, g in gaps.items())
    ok = violations == 0 and coarse >= 1.0
    verdict(record_property, ok,
            f"{trials} trials, {violations} superset violations; mean NSR gap pp by "
            f"resolution {means} (need >= 1 at {resolutions[-1]:g} m)")


def test_criterion_4_planning_monotonicity(record_property):
    resolutions = [0.5, 1.0, 1.5, 2.0]
    seeds = range(150)
    bad = []
    rates = {r: [0, 0] for r in resolutions}
    for seed in seeds:
        for res in resolutions:
            tr = plan_trial(seed, res, 20, 20_000, ("astar",))
            a = tr.results[("pomp", "astar")]
            b = tr.results[("direct_ogm", "astar")]
            if b.success and not a.success:
                bad.append(f"seed {seed} res {res}: success")
            if a.success and b.success and not a.length <= b.length:
                bad.append(f"seed {seed} res {res}: length {a.length} > {b.length}")
            rates[res][0] += a.success
            rates[res][1] += b.success
    n = len(seeds)
    rate_fail = [r for r, (a, b) in rates.items() if a < b]
    table = ", ".join(f"{r:g} m: {a / n:.2f} vs {b / n:.2f}" for r, (a, b) in rates.items())
    ok = not bad and not rate_fail
    verdict(record_property, ok,
            f"{n * len(resolutions)} scenes, {len(bad)} counterexamples; success rate "
            f"projected vs direct {table}")


def test_criterion_5_planner_optimality(record_property):
    rng = np.random.default_rng(55)
    mismatches, solvable = [], 0
    for k in range(200):
        if k % 4 == 0:
            dims = (int(rng.integers(3, 33)), int(rng.integers(3, 33)), 1)
        else:
            dims = tuple(int(rng.integers(2, 33)) for _ in range(3))
        dims = tuple(d | 1 for d in dims)
        dim = 2 if dims[2] == 1 else 3
        cfg = GridConfig((0.0, 0.0, 0.0), float(rng.choice([0.25, 0.5, 1.0])), dims,
                         tuple((d - 1) // 2 for d in dims), dim)
        g = grid_new(cfg)
        g.cells[:] = rng.random(g.cells.size) < rng.uniform(0, 0.6)
        s = tuple(int(rng.integers(0, d)) for d in dims)
        t = tuple(int(rng.integers(0, d)) for d in dims)
        for c in (s, t):
            g.cells[c[0] + dims[0] * (c[1] + dims[1] * c[2])] = 0
        req = PlanRequest(cell_world(s, g), cell_world(t, g))
        oracle = scipy_length(g, s, t)
        a, j = astar(g, req), jps(g, req)
        if a.success != math.isfinite(oracle) or j.success != a.success:
            mismatches.append(k)
            continue
        if a.success:
            solvable += 1
            if a.length != pytest.approx(oracle, rel=1e-12, abs=1e-12):
                mismatches.append(k)
            elif abs(j.length - a.length) > 1e-9 * a.length:
                mismatches.append(k)
    verdict(record_property, not mismatches,
            f"200 grids <= 32^3 ({solvable} solvable): A* equals Dijkstra and JPS equals "
            f"A* on all but {len(mismatches)}")


def test_criterion_6_threshold_ratio_trend(record_property):
    cfg = RunConfig("ratio-sweep", planners=["astar"], workers=[1])
    rep = ratio_sweep(cfg, frames=200)
    ratios = sorted(cfg.ratios, reverse=True)
    trend = ratio_trend_violations(rep.summary, ratios, 0.02)
    rows = "; ".join(
        f"{r['resolution']:g} m: " + "/".join(f"{r[f'pomp_{q}_rate']:.2f}" for q in ratios)
        + f" direct {r['direct_rate']:.2f}" for r in rep.summary)
    ok = not trend and not rep.failures
    verdict(record_property, ok,
            f"200 frames, rates for ratios {'/'.join(map(str, ratios))}: {rows}; "
            f"{len(trend)} trend and {len(rep.failures)} direct-rate violations")


def test_criterion_7_unsafe_exclusion_and_blocking(record_property):
    rng = np.random.default_rng(77)
    unsafe_free = diag = 0
    scenes = 120
    for k in range(scenes):
        ratio = float(rng.choice([0.1, 0.25, 0.5, 0.75, 0.95]))
        res = float(rng.choice([0.25, 0.5, 1.0, 2.0]))
        dim = 2 if k % 5 == 0 else 3
        if k % 2:
            spec, pts = gen_cylinder_scene(k, 20, 20_000)
        else:
            spec, pts = gen_mixed_scene(k, 20, 20, 20, 20_000, size_range=(0.5, 2.5))
        m = pomp_map(pts, spec.workspace, res, ratio, worker_count=int(rng.integers(1, 5)),
                     dimensionality=dim, mask_outside=False)
        u, d = projection_violations(m.tree, m.grid)
        unsafe_free += u
        diag += d
    verdict(record_property, unsafe_free == 0 and diag == 0,
            f"{scenes} scenes: {unsafe_free} unsafe regions in free cells, {diag} open "
            f"diagonals with two non-clear regions")


def test_criterion_8_throughput(record_property):
    # informative: the speedup target is logged, never a failure
    cfg = RunConfig("build-bench", resolutions=[0.1, 0.5], workers=[1, 2, 4, 8], scale=1.0,
                    repeats=3, warmup=1)
    rep = build_bench(cfg)
    assert rep.summary and all(r["points"] == 1_000_000 for r in rep.summary)
    best = max(r["speedup"] for r in rep.summary if r["workers"] == 8)
    for r in rep.summary:
        print(f"  res {r['resolution']:g} workers {r['workers']}: serial "
              f"{r['serial_ms_median']:.1f} ms, parallel {r['parallel_ms_median']:.1f} ms, "
              f"speedup {r['speedup']:.2f}x")
    threads = os.cpu_count() or 1
    note = ""
    if best < 1.5:
        note = f"; below the soft 1.5x target on {threads} hardware thread(s)"
        warnings.warn(f"8-worker speedup {best:.2f}x is below 1.5x ({threads} CPUs)")
    verdict(record_property, True,
            f"1M-point speedup table emitted, best 8-worker speedup {best:.2f}x{note}")


def test_criterion_9_replay_discipline(record_property):
    ws = Aabb((-25.0, -25.0, -25.0), (25.0, 25.0, 25.0))
    cubes = gen_moving_cubes(9, count=200, point_budget=10_000)
    frames = list(cubes.frames(20))
    problems = []
    for q in (1, 2, 4):
        res = replay(frames, ws, 1.5, capacity=q, policy=DROP_OLDEST, consumer_delay=0.02,
                     worker_count=2)
        if res.max_in_flight > q:
            problems.append(f"Q={q}: {res.max_in_flight} in flight")
        if res.produced != res.consumed + res.dropped or res.produced != len(frames):
            problems.append(f"Q={q}: produced {res.produced} consumed {res.consumed} "
                            f"dropped {res.dropped}")
        if res.dropped == 0:
            problems.append(f"Q={q}: slow consumer never dropped")
    full = replay(frames, ws, 1.5, capacity=4, policy=BLOCK, worker_count=2)
    batch = pomp_map(np.vstack([f.points for f in frames]), ws, 1.5, worker_count=3)
    if full.dropped or not np.array_equal(full.grid.cells, batch.grid.cells):
        problems.append("undropped replay differs from the batch build")
    verdict(record_property, not problems,
            "bounded in-flight, exact drop accounting for Q=1/2/4, undropped replay equals "
            "batch build" if not problems else "; ".join(problems))
