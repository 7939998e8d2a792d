"""Cloud to occupancy grid, by octree projection or by direct point marking.

Both builders share the same grid geometry for a given workspace and
resolution, so their cells can be compared one to one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import DEFAULT_RATIO, Aabb, make_configs
from .grid import OccupancyGrid, direct_ogm_build, grid_new, mask_outside_workspace
from .octree import Octree, build_parallel, build_serial
from .projection import ProjectionStats, project_octree


@dataclass
class PompMap:
    grid: OccupancyGrid
    tree: Octree
    stats: ProjectionStats
    build_s: float
    project_s: float


def pomp_map(points, workspace: Aabb, resolution: float, ratio: float = DEFAULT_RATIO, *,
             worker_count: Optional[int] = None, dimensionality: int = 3,
             mask_outside: bool = True, serial: bool = False,
             store_points: bool = False) -> PompMap:
    """Build the octree, then project leaf region states onto a fresh grid."""
    tcfg, gcfg = make_configs(workspace, resolution, ratio, dimensionality)
    t0 = time.perf_counter()
    if serial:
        tree = build_serial(points, tcfg, store_points=store_points)
    else:
        tree = build_parallel(points, tcfg, worker_count, store_points=store_points)
    t1 = time.perf_counter()
    grid = grid_new(gcfg)
    stats = project_octree(tree, grid, worker_count)
    t2 = time.perf_counter()
    if mask_outside:
        mask_outside_workspace(grid, workspace)
    return PompMap(grid, tree, stats, t1 - t0, t2 - t1)


def direct_map(points, workspace: Aabb, resolution: float, *, dimensionality: int = 3,
               mask_outside: bool = True) -> tuple[OccupancyGrid, float]:
    """Baseline grid with every point-containing cell occupied; returns ``(grid, seconds)``."""
    _, gcfg = make_configs(workspace, resolution, DEFAULT_RATIO, dimensionality)
    t0 = time.perf_counter()
    grid = direct_ogm_build(np.asarray(points, float).reshape(-1, 3), grid_new(gcfg))
    elapsed = time.perf_counter() - t0
    if mask_outside:
        mask_outside_workspace(grid, workspace)
    return grid, elapsed
