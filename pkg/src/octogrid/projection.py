"""Projection of leaf region states onto the staggered occupancy grid.

Each leaf is split into complementary region pairs (region ``a`` and
``a ^ (R - 1)``, lower index first). A pair is resolved into "occupy the
cell holding the first region", "occupy the cell holding the second", both
or neither, and marks are OR-ed into the grid, so the result does not depend
on which worker visits which leaf or in what order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from numba import njit

from ._atomics import fetch_add, fetch_or
from ._parallel import default_workers, run_workers
from .geometry import check_alignment
from .grid import OccupancyGrid
from .octree import Octree, OctreeNode, RegionState, _collect


class DiagonalPair(NamedTuple):
    from_region: int
    to_region: int


class PairVerdict(NamedTuple):
    mark_from: bool
    mark_to: bool


@dataclass(frozen=True)
class ProjectionStats:
    leaves: int
    marks: int
    skips: int
    wall_ms: float


def diagonal_pairs(dimensionality: int) -> list[DiagonalPair]:
    if dimensionality not in (2, 3):
        raise ValueError(f"dimensionality must be 2 or 3, got {dimensionality}")
    full = (1 << dimensionality) - 1
    return [DiagonalPair(a, a ^ full) for a in range((full + 1) // 2)]


def resolve_pair(from_state: RegionState, to_state: RegionState) -> PairVerdict:
    """Which cells of a diagonal region pair must be occupied."""
    if from_state == RegionState.CLEAR:
        return PairVerdict(False, to_state != RegionState.CLEAR)
    if from_state == RegionState.SAFE:
        if to_state != RegionState.CLEAR:
            return PairVerdict(False, True)
        return PairVerdict(True, False)
    return PairVerdict(True, to_state == RegionState.UNSAFE)


def _verdict_tables() -> tuple[np.ndarray, np.ndarray]:
    mark_from = np.zeros((3, 3), np.bool_)
    mark_to = np.zeros((3, 3), np.bool_)
    for f in RegionState:
        for t in RegionState:
            v = resolve_pair(f, t)
            mark_from[f, t] = v.mark_from
            mark_to[f, t] = v.mark_to
    return mark_from, mark_to


_MARK_FROM, _MARK_TO = _verdict_tables()


@njit(inline="always")
def _state_of(bits, r, n_regions):
    if bits >> r & 1:
        return 2
    if bits >> (r + n_regions) & 1:
        return 1
    return 0


@njit(inline="always")
def _region_flat(cx, cy, cz, r, q, dim, origin, res, dims):
    rx = cx + q if r & 1 else cx - q
    ry = cy + q if r & 2 else cy - q
    i = np.int64(np.floor((rx - origin[0]) / res))
    j = np.int64(np.floor((ry - origin[1]) / res))
    k = 0
    if dim == 3:
        rz = cz + q if r & 4 else cz - q
        k = np.int64(np.floor((rz - origin[2]) / res))
    if i < 0 or j < 0 or k < 0 or i >= dims[0] or j >= dims[1] or k >= dims[2]:
        return -1
    return i + dims[0] * (j + dims[1] * k)


@njit(nogil=True, cache=True)
def _project_one(leaf, centers, states, dim, leaf_size, origin, dims, cells, mark_from, mark_to):
    """Returns ``(cells newly occupied, region marks skipped off-grid)``."""
    n_regions = 1 << dim
    full = n_regions - 1
    q = 0.25 * leaf_size
    bits = states[leaf]
    marks = 0
    skips = 0
    if bits == 0:
        return marks, skips
    cx = centers[leaf, 0]
    cy = centers[leaf, 1]
    cz = centers[leaf, 2]
    for a in range(n_regions // 2):
        b = a ^ full
        sa = _state_of(bits, a, n_regions)
        sb = _state_of(bits, b, n_regions)
        for side in range(2):
            r = a if side == 0 else b
            hit = mark_from[sa, sb] if side == 0 else mark_to[sa, sb]
            if not hit:
                continue
            flat = _region_flat(cx, cy, cz, r, q, dim, origin, leaf_size, dims)
            if flat < 0:
                skips += 1
                continue
            if fetch_or(cells, flat, np.uint8(1)) == 0:
                marks += 1
    return marks, skips


@njit(nogil=True, cache=True)
def _project_worker(frontier, ctr, children, centers, levels, states, depth, dim, leaf_size,
                    origin, dims, cells, mark_from, mark_to, out, wid):
    n_children = 1 << dim
    stack = np.empty(depth * n_children + 2, np.int64)
    leaves = 0
    marks = 0
    skips = 0
    while True:
        f = fetch_add(ctr, 0, 1)
        if f >= frontier.shape[0]:
            break
        stack[0] = frontier[f]
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if levels[node] == depth:
                leaves += 1
                m, s = _project_one(node, centers, states, dim, leaf_size, origin, dims, cells,
                                    mark_from, mark_to)
                marks += m
                skips += s
                continue
            for c in range(n_children):
                ch = children[node * n_children + c]
                if ch >= 0:
                    stack[sp] = ch
                    sp += 1
    out[wid, 0] = leaves
    out[wid, 1] = marks
    out[wid, 2] = skips


def _frontier(tree: Octree, workers: int) -> np.ndarray:
    cfg = tree.config
    level = 0
    while level < cfg.depth and cfg.regions**level < 8 * workers:
        level += 1
    return _collect(tree._children, tree._levels, level, cfg.dimensionality,
                    int(tree._node_ctr[0]), True)


def project_octree(tree: Octree, grid: OccupancyGrid,
                   worker_count: Optional[int] = None) -> ProjectionStats:
    """Project every materialised leaf onto ``grid``; workers split subtrees."""
    check_alignment(tree.config, grid.config)
    workers = default_workers() if worker_count is None else int(worker_count)
    t0 = time.perf_counter()
    frontier = _frontier(tree, workers)
    out = np.zeros((workers, 3), np.int64)
    cfg = tree.config
    run_workers(_project_worker, workers, frontier, np.zeros(1, np.int64), tree._children,
                tree._centers, tree._levels, tree._states, cfg.depth, cfg.dimensionality,
                cfg.leaf_size, np.array(grid.config.origin), np.array(grid.config.dims, np.int64),
                grid.cells, _MARK_FROM, _MARK_TO, out)
    totals = out.sum(axis=0)
    return ProjectionStats(int(totals[0]), int(totals[1]), int(totals[2]),
                           1e3 * (time.perf_counter() - t0))


def project_leaf(leaf: OctreeNode, grid: OccupancyGrid) -> tuple[int, int]:
    """Project one leaf; returns ``(cells newly occupied, off-grid skips)``."""
    if not leaf.is_leaf:
        raise ValueError("project_leaf needs a leaf node")
    tree = leaf.tree
    check_alignment(tree.config, grid.config)
    cfg = tree.config
    m, s = _project_one(leaf.id, tree._centers, tree._states, cfg.dimensionality, cfg.leaf_size,
                        np.array(grid.config.origin), np.array(grid.config.dims, np.int64),
                        grid.cells, _MARK_FROM, _MARK_TO)
    return int(m), int(s)


def region_cells(tree: Octree, grid: OccupancyGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per leaf and region: ``(leaf_ids, states (n, R), flat cell index (n, R) or -1)``.

    Computed with plain numpy, independently of the projection kernel.
    """
    cfg = tree.config
    gcfg = grid.config
    leaves = tree.leaf_ids()
    bits = tree._states[leaves].astype(np.int64)
    centers = tree._centers[leaves]
    n_regions = cfg.regions
    states = np.zeros((len(leaves), n_regions), np.int8)
    flat = np.full((len(leaves), n_regions), -1, np.int64)
    q = 0.25 * cfg.leaf_size
    for r in range(n_regions):
        unsafe = (bits >> r) & 1
        safe = (bits >> (r + n_regions)) & 1
        states[:, r] = np.where(unsafe == 1, 2, np.where(safe == 1, 1, 0))
        signs = np.array([1.0 if r >> a & 1 else -1.0 for a in range(3)])
        rc = centers + signs * q
        idx = np.floor((rc - np.asarray(gcfg.origin)) / gcfg.resolution).astype(np.int64)
        if cfg.dimensionality == 2:
            idx[:, 2] = 0
        ok = np.all((idx >= 0) & (idx < np.asarray(gcfg.dims)), axis=1)
        f = idx[:, 0] + gcfg.dims[0] * (idx[:, 1] + gcfg.dims[1] * idx[:, 2])
        flat[:, r] = np.where(ok, f, -1)
    return leaves, states, flat
