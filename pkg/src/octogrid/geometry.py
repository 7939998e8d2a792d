"""Workspace, octree and occupancy-grid configuration math.

The octree root is centred on the workspace centre and sized to the next
power-of-two multiple of the leaf size. The occupancy grid uses the same
cell size but is shifted by half a cell, so every leaf boundary runs through
a row of cell centres and every leaf region (one octant of a leaf) falls
inside exactly one cell.

Region indices use one bit per axis: bit 0 is x, bit 1 is y, bit 2 is z, and
a set bit means the region lies on the ``>=`` side of the leaf centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CellBudgetError, ConfigError, OutOfBoundsError

DEFAULT_CELL_BUDGET = 2**31
DEFAULT_RATIO = 0.5
# workspace sides computed as max - min carry rounding noise; ceilings forgive it
_REL_TOL = 1e-12

Vec3 = tuple[float, float, float]


def _vec3(v: Sequence[float], name: str) -> Vec3:
    if len(v) != 3:
        raise ConfigError(f"{name} must have 3 components, got {len(v)}")
    out = tuple(float(c) for c in v)
    if not all(math.isfinite(c) for c in out):
        raise ConfigError(f"{name} must be finite, got {out}")
    return out  # type: ignore[return-value]


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned workspace box in metres."""

    min: Vec3
    max: Vec3

    def __post_init__(self):
        lo = _vec3(self.min, "Aabb.min")
        hi = _vec3(self.max, "Aabb.max")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ConfigError(f"Aabb needs strictly positive side lengths, got {lo} .. {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def from_bounds(cls, xlim, ylim, zlim) -> "Aabb":
        return cls((xlim[0], ylim[0], zlim[0]), (xlim[1], ylim[1], zlim[1]))

    @property
    def sides(self) -> Vec3:
        return tuple(h - l for l, h in zip(self.min, self.max))  # type: ignore[return-value]

    @property
    def center(self) -> Vec3:
        return tuple(0.5 * (l + h) for l, h in zip(self.min, self.max))  # type: ignore[return-value]

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Closed-box membership test for an ``(n, 3)`` array."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        lo = np.asarray(self.min) - tol
        hi = np.asarray(self.max) + tol
        return np.all((pts >= lo) & (pts <= hi), axis=1)


@dataclass(frozen=True)
class OctreeConfig:
    root_center: Vec3
    depth: int
    leaf_size: float
    root_size: float
    ratio: float = DEFAULT_RATIO
    dimensionality: int = 3

    def __post_init__(self):
        object.__setattr__(self, "root_center", _vec3(self.root_center, "root_center"))
        if self.dimensionality not in (2, 3):
            raise ConfigError(f"dimensionality must be 2 or 3, got {self.dimensionality}")
        if int(self.depth) != self.depth or self.depth < 0:
            raise ConfigError(f"depth must be a non-negative integer, got {self.depth}")
        if not (math.isfinite(self.leaf_size) and self.leaf_size > 0):
            raise ConfigError(f"leaf_size must be positive, got {self.leaf_size}")
        if not (0.0 < self.ratio <= 1.0):
            raise ConfigError(f"ratio must lie in (0, 1], got {self.ratio}")
        expected = self.leaf_size * 2.0**self.depth
        if not math.isclose(self.root_size, expected, rel_tol=1e-12):
            raise ConfigError(f"root_size {self.root_size} != leaf_size * 2**depth = {expected}")

    @property
    def regions(self) -> int:
        """Number of regions (and children) per node: 4 in 2D, 8 in 3D."""
        return 1 << self.dimensionality

    @property
    def threshold(self) -> float:
        """Infinity-norm distance from the leaf centre at which a point becomes unsafe."""
        return 0.5 * self.leaf_size * self.ratio

    def with_ratio(self, ratio: float) -> "OctreeConfig":
        return OctreeConfig(self.root_center, self.depth, self.leaf_size, self.root_size,
                            ratio, self.dimensionality)


@dataclass(frozen=True)
class GridConfig:
    origin: Vec3
    resolution: float
    dims: tuple[int, int, int]
    half_counts: tuple[int, int, int]
    dimensionality: int = 3

    def __post_init__(self):
        object.__setattr__(self, "origin", _vec3(self.origin, "origin"))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "half_counts", tuple(int(n) for n in self.half_counts))
        if not (math.isfinite(self.resolution) and self.resolution > 0):
            raise ConfigError(f"resolution must be positive, got {self.resolution}")
        if any(d <= 0 for d in self.dims):
            raise ConfigError(f"grid dims must be positive, got {self.dims}")
        for d, n in zip(self.dims, self.half_counts):
            if d != 2 * n + 1:
                raise ConfigError(f"dims {self.dims} inconsistent with half counts {self.half_counts}")

    @property
    def cell_count(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def map_center(self) -> Vec3:
        r = self.resolution
        return tuple(o + n * r + 0.5 * r for o, n in zip(self.origin, self.half_counts))  # type: ignore[return-value]

    @property
    def upper(self) -> Vec3:
        return tuple(o + d * self.resolution for o, d in zip(self.origin, self.dims))  # type: ignore[return-value]


class CellIndex(NamedTuple):
    i: int
    j: int
    k: int


def _active_sides(workspace: Aabb, dimensionality: int) -> Vec3:
    sides = workspace.sides
    return sides[:2] if dimensionality == 2 else sides


def compute_tree_depth(workspace: Aabb, leaf_size: float, dimensionality: int = 3) -> int:
    """Smallest depth ``n`` with ``leaf_size * 2**n >= L_max``."""
    if not (math.isfinite(leaf_size) and leaf_size > 0):
        raise ConfigError(f"leaf_size must be positive and finite, got {leaf_size}")
    l_max = max(_active_sides(workspace, dimensionality))
    if l_max <= leaf_size:
        return 0
    n = max(0, math.ceil(math.log2(l_max / leaf_size)))
    # log2 of a rounded quotient can land one off either way
    while leaf_size * 2.0**n < l_max * (1 - _REL_TOL):
        n += 1
    while n > 0 and leaf_size * 2.0 ** (n - 1) >= l_max * (1 - _REL_TOL):
        n -= 1
    return n


def compute_octree_config(workspace: Aabb, leaf_size: float, ratio: float = DEFAULT_RATIO,
                          dimensionality: int = 3) -> OctreeConfig:
    n = compute_tree_depth(workspace, leaf_size, dimensionality)
    return OctreeConfig(workspace.center, n, float(leaf_size), leaf_size * 2.0**n, ratio,
                        dimensionality)


def compute_grid_config(workspace: Aabb, leaf_size: float, dimensionality: int = 3,
                        cell_budget: int = DEFAULT_CELL_BUDGET) -> GridConfig:
    """Half-cell-staggered grid centred on the workspace centre."""
    if not (math.isfinite(leaf_size) and leaf_size > 0):
        raise ConfigError(f"leaf_size must be positive and finite, got {leaf_size}")
    if dimensionality not in (2, 3):
        raise ConfigError(f"dimensionality must be 2 or 3, got {dimensionality}")
    r = float(leaf_size)
    center = workspace.center
    half = [math.ceil(side / (2.0 * r) * (1 - _REL_TOL)) for side in workspace.sides]
    if dimensionality == 2:
        half[2] = 0
    dims = [2 * n + 1 for n in half]
    total = dims[0] * dims[1] * dims[2]
    if total > cell_budget:
        raise CellBudgetError(f"grid {tuple(dims)} has {total} cells, budget is {cell_budget}")
    origin = tuple(c - n * r - 0.5 * r for c, n in zip(center, half))
    return GridConfig(origin, r, tuple(dims), tuple(half), dimensionality)


def make_configs(workspace: Aabb, leaf_size: float, ratio: float = DEFAULT_RATIO,
                 dimensionality: int = 3,
                 cell_budget: int = DEFAULT_CELL_BUDGET) -> tuple[OctreeConfig, GridConfig]:
    """Matching octree and grid configurations for one workspace and resolution."""
    return (compute_octree_config(workspace, leaf_size, ratio, dimensionality),
            compute_grid_config(workspace, leaf_size, dimensionality, cell_budget))


def check_alignment(octree: OctreeConfig, grid: GridConfig) -> None:
    """Raise ConfigError unless the grid is the staggered partner of the octree."""
    if octree.leaf_size != grid.resolution:
        raise ConfigError(f"leaf size {octree.leaf_size} != grid resolution {grid.resolution}")
    if octree.dimensionality != grid.dimensionality:
        raise ConfigError("octree and grid dimensionality differ")
    axes = 2 if grid.dimensionality == 2 else 3
    for a in range(axes):
        offset = (octree.root_center[a] - grid.origin[a]) / grid.resolution - 0.5
        if abs(offset - round(offset)) > 1e-6:
            raise ConfigError(f"grid origin is not half-cell staggered against the octree on axis {a}")


def world_to_cell(p: Sequence[float], grid: GridConfig) -> CellIndex:
    """Cell containing ``p`` by pure floor division; raises if outside the grid."""
    p = _vec3(p, "point")
    idx = [math.floor((p[a] - grid.origin[a]) / grid.resolution) for a in range(3)]
    if grid.dimensionality == 2:
        idx[2] = 0
    for a in range(3):
        if not 0 <= idx[a] < grid.dims[a]:
            raise OutOfBoundsError(f"point {p} maps to cell {tuple(idx)} outside dims {grid.dims}")
    return CellIndex(*idx)


def world_to_cells(points: np.ndarray, grid: GridConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised floor mapping; returns ``(indices (n, 3), in_bounds mask)``."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    idx = np.floor((pts - np.asarray(grid.origin)) / grid.resolution).astype(np.int64)
    if grid.dimensionality == 2:
        idx[:, 2] = 0
    ok = np.all((idx >= 0) & (idx < np.asarray(grid.dims)), axis=1)
    return idx, ok


def cell_center(idx: Sequence[int], grid: GridConfig) -> Vec3:
    c = [grid.origin[a] + (idx[a] + 0.5) * grid.resolution for a in range(3)]
    if grid.dimensionality == 2:
        c[2] = grid.map_center[2]
    return tuple(c)  # type: ignore[return-value]


def flat_index(idx: Sequence[int], dims: Sequence[int]) -> int:
    """Row-major offset with x varying fastest."""
    return int(idx[0]) + dims[0] * (int(idx[1]) + dims[1] * int(idx[2]))


def unflatten_index(flat: int, dims: Sequence[int]) -> CellIndex:
    i = flat % dims[0]
    rest = flat // dims[0]
    return CellIndex(int(i), int(rest % dims[1]), int(rest // dims[1]))


def region_signs(region_idx: int, dimensionality: int = 3) -> Vec3:
    if not 0 <= region_idx < (1 << dimensionality):
        raise ValueError(f"region index {region_idx} out of range for {dimensionality}D")
    signs = [1.0 if region_idx >> a & 1 else -1.0 for a in range(3)]
    if dimensionality == 2:
        signs[2] = 0.0
    return tuple(signs)  # type: ignore[return-value]


def region_center(leaf_center: Sequence[float], leaf_size: float, region_idx: int,
                  dimensionality: int = 3) -> Vec3:
    """Centre of one leaf region: the leaf centre shifted a quarter leaf along each axis."""
    s = region_signs(region_idx, dimensionality)
    q = 0.25 * leaf_size
    return tuple(c + sg * q for c, sg in zip(leaf_center, s))  # type: ignore[return-value]


def child_index(p: Sequence[float], center: Sequence[float], dimensionality: int = 3) -> int:
    """Octant (or quadrant) of ``p`` relative to ``center``; ties go to the >= side."""
    idx = 0
    for a in range(dimensionality):
        if p[a] >= center[a]:
            idx |= 1 << a
    return idx
