"""Equivalence and soundness checks shared by ``octogrid verify`` and the tests.

Every checker recomputes its expectation a second, simpler way (plain numpy
rescans, a heap-based Dijkstra, a literal truth table) rather than calling
the code under test twice.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import Aabb, make_configs
from .grid import grid_new
from .octree import Octree, RegionState, build_parallel, build_serial, tree_fingerprint
from .planners import PlanRequest, astar, cell_world, jps, neighbors
from .projection import diagonal_pairs, project_leaf, project_octree, region_cells, resolve_pair
from .pipeline import direct_map
from .scenes import gen_cylinder_scene, rng_for, uniform_cloud

C, S, U = RegionState.CLEAR, RegionState.SAFE, RegionState.UNSAFE

# (from, to) -> (mark from, mark to), written out by hand
PAIR_TRUTH_TABLE = {
    (C, C): (False, False), (C, S): (False, True), (C, U): (False, True),
    (S, C): (True, False), (S, S): (False, True), (S, U): (False, True),
    (U, C): (True, False), (U, S): (True, False), (U, U): (True, True),
}


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def truth_table_mismatches() -> list[tuple]:
    bad = []
    for (f, t), want in PAIR_TRUTH_TABLE.items():
        got = tuple(resolve_pair(f, t))
        if got != want:
            bad.append((f.name, t.name, got, want))
    return bad


def rescan_states(tree: Octree) -> tuple[np.ndarray, np.ndarray]:
    """Leaf state words recomputed from the stored points; returns ``(leaf_ids, states)``."""
    cfg = tree.config
    leaves, offsets, pts = tree.leaf_point_groups()
    owner = np.repeat(np.arange(len(leaves)), np.diff(offsets))
    c = tree._centers[leaves][owner]
    axes = cfg.dimensionality
    region = np.zeros(len(pts), np.int64)
    for a in range(axes):
        region |= (pts[:, a] >= c[:, a]).astype(np.int64) << a
    dist = np.max(np.abs(pts[:, :axes] - c[:, :axes]), axis=1)
    unsafe = dist >= cfg.threshold
    bit = np.where(unsafe, region, region + cfg.regions)
    states = np.zeros(len(leaves), np.int64)
    np.bitwise_or.at(states, owner, np.int64(1) << bit)
    return leaves, states


def projection_violations(tree: Octree, grid) -> tuple[int, int]:
    """``(unsafe regions on free cells, diagonal pairs with both free cells and both non-clear)``."""
    _, states, flat = region_cells(tree, grid)
    cells = grid.cells
    free = np.zeros(flat.shape, bool)
    ok = flat >= 0
    free[ok] = cells[flat[ok]] == 0
    unsafe_free = int(np.count_nonzero((states == int(U)) & free))
    diag = 0
    for a, b in diagonal_pairs(tree.config.dimensionality):
        both_free = free[:, a] & free[:, b]
        diag += int(np.count_nonzero(both_free & (states[:, a] != 0) & (states[:, b] != 0)))
    return unsafe_free, diag


def dijkstra_length(grid, start_cell, goal_cell, unknown_policy: str = "free") -> float:
    """Textbook Dijkstra over :func:`neighbors`; ``inf`` when unreachable."""
    start, goal = tuple(start_cell), tuple(goal_cell)
    blocked = grid.blocked_mask(unknown_policy)
    dims = grid.dims
    flat = lambda c: c[0] + dims[0] * (c[1] + dims[1] * c[2])  # noqa: E731
    if blocked[flat(start)] or blocked[flat(goal)]:
        return math.inf
    # count axis / face / space steps so the total matches path_length exactly
    best = {start: (0.0, (0, 0, 0))}
    heap = [(0.0, start)]
    done = set()
    res = grid.config.resolution
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == goal:
            n1, n2, n3 = best[u][1]
            return res * (n1 + n2 * math.sqrt(2) + n3 * math.sqrt(3))
        for v, cost in neighbors(u, grid, unknown_policy):
            kind = sum(1 for a in range(3) if v[a] != u[a])
            counts = list(best[u][1])
            counts[kind - 1] += 1
            nd = d + cost
            if v not in best or nd < best[v][0] - 1e-12:
                best[v] = (nd, tuple(counts))
                heapq.heappush(heap, (nd, tuple(v)))
    return math.inf


# -- individual checks --------------------------------------------------------

_WS = Aabb((-8.0, -8.0, -4.0), (8.0, 8.0, 4.0))


def check_fingerprints(seeds=(0, 1, 2), workers=(1, 2, 4, 8), inject_fault: bool = False):
    bad = []
    for seed in seeds:
        rng = rng_for(seed, 90)
        res = float(rng.choice([0.25, 0.5, 1.0]))
        tcfg, _ = make_configs(_WS, res)
        pts = uniform_cloud(seed, int(rng.integers(5_000, 30_000)), _WS)
        ref = tree_fingerprint(build_serial(pts, tcfg))
        for w in workers:
            tree = build_parallel(pts, tcfg, w, chunk_size=512)
            if inject_fault:
                leaf = tree.leaf_ids()[0]
                tree._states[leaf] ^= np.uint16(1)
            if tree_fingerprint(tree) != ref:
                bad.append((seed, w))
    return CheckResult("fingerprint parallel == serial", not bad,
                       f"mismatches (seed, workers): {bad}" if bad else "")


def check_state_rescan(seeds=(0, 1, 2)):
    bad = []
    for seed in seeds:
        tcfg, _ = make_configs(_WS, 0.5, ratio=float(rng_for(seed, 91).uniform(0.1, 1.0)))
        tree = build_parallel(uniform_cloud(seed, 20_000, _WS), tcfg, 4)
        leaves, expect = rescan_states(tree)
        if not np.array_equal(tree._states[leaves].astype(np.int64), expect):
            bad.append(seed)
    return CheckResult("leaf states match a rescan of leaf points", not bad, str(bad or ""))


def check_projection_order(seeds=(0, 1, 2)):
    bad = []
    for seed in seeds:
        spec, pts = gen_cylinder_scene(seed, count=15, point_count=8_000)
        tcfg, gcfg = make_configs(spec.workspace, 0.5)
        tree = build_parallel(pts, tcfg, 4, store_points=False)
        ref = grid_new(gcfg)
        project_octree(tree, ref, 1)
        par = grid_new(gcfg)
        project_octree(tree, par, 4)
        shuffled = grid_new(gcfg)
        leaves = tree.leaves()
        for idx in rng_for(seed, 92).permutation(len(leaves)):
            project_leaf(leaves[idx], shuffled)
        if not (np.array_equal(ref.cells, par.cells)
                and np.array_equal(ref.cells, shuffled.cells)):
            bad.append(seed)
    return CheckResult("projection independent of worker count and leaf order", not bad,
                       str(bad or ""))


def check_projection_properties(seeds=(0, 1, 2)):
    bad = []
    for seed in seeds:
        spec, pts = gen_cylinder_scene(seed, count=15, point_count=8_000)
        res = float(rng_for(seed, 93).choice([0.5, 1.0, 2.0]))
        tcfg, gcfg = make_configs(spec.workspace, res)
        tree = build_parallel(pts, tcfg, 2, store_points=False)
        grid = grid_new(gcfg)
        project_octree(tree, grid, 2)
        direct, _ = direct_map(pts, spec.workspace, res, mask_outside=False)
        unsafe_free, diag = projection_violations(tree, grid)
        extra = int(np.count_nonzero((grid.cells == 1) & (direct.cells == 0)))
        if unsafe_free or diag or extra:
            bad.append((seed, unsafe_free, diag, extra))
    return CheckResult("unsafe exclusion, diagonal blocking, subset of direct grid", not bad,
                       str(bad or ""))


def check_planners(trials: int = 20):
    bad = []
    for t in range(trials):
        rng = rng_for(t, 94)
        dim = 2 if t % 2 else 3
        ws = Aabb((0.0, 0.0, 0.0), (float(rng.integers(4, 12)), float(rng.integers(4, 12)),
                                    float(rng.integers(2, 6))))
        _, gcfg = make_configs(ws, 1.0, dimensionality=dim)
        grid = grid_new(gcfg)
        grid.cells[:] = rng.random(gcfg.cell_count) < rng.uniform(0.0, 0.4)
        cells = [tuple(int(rng.integers(0, d)) for d in gcfg.dims) for _ in range(2)]
        for c in cells:
            grid.cells[c[0] + gcfg.dims[0] * (c[1] + gcfg.dims[1] * c[2])] = 0
        req = PlanRequest(cell_world(cells[0], grid), cell_world(cells[1], grid))
        a, j = astar(grid, req), jps(grid, req)
        oracle = dijkstra_length(grid, cells[0], cells[1])
        if a.success != math.isfinite(oracle) or j.success != a.success:
            bad.append((t, "success"))
        elif a.success and (a.length != oracle
                            or abs(j.length - a.length) > 1e-9 * max(a.length, 1.0)):
            bad.append((t, a.length, j.length, oracle))
    return CheckResult("A* matches Dijkstra, JPS matches A*", not bad, str(bad or ""))


def check_truth_table():
    bad = truth_table_mismatches()
    return CheckResult("diagonal pair truth table (9 cases)", not bad, str(bad or ""))


CHECKS: dict[str, Callable[..., CheckResult]] = {
    "fingerprint": check_fingerprints,
    "states": check_state_rescan,
    "order": check_projection_order,
    "projection": check_projection_properties,
    "truth-table": check_truth_table,
    "planners": check_planners,
}


def run_all(inject_fault: bool = False, only: Optional[list[str]] = None) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS.items():
        if only and name not in only:
            continue
        out.append(fn(inject_fault=True) if (inject_fault and name == "fingerprint") else fn())
    return out
