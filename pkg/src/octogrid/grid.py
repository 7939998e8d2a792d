"""Planner-facing occupancy grid: one byte per cell, x varying fastest.

Binary dump layout (all little-endian)::

    offset  size  field
    0       8     magic b"OCTGRID1"
    8       24    dims        3 x int64
    32      24    origin      3 x float64
    56      8     resolution  float64
    64      8     dimensionality int64 (2 or 3)
    72      N     cells, N = dims product, uint8 (0 free, 1 occupied)

The CSV export starts with ``#`` comment lines carrying the same header
fields, then ``i,j,k,occupied`` for every cell in storage order.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numba import njit

from ._atomics import fetch_or
from .errors import CellBudgetError, FormatError, OutOfBoundsError
from .geometry import DEFAULT_CELL_BUDGET, Aabb, GridConfig, flat_index

UNOCCUPIED = 0
OCCUPIED = 1

GRID_MAGIC = b"OCTGRID1"
_HEADER = struct.Struct("<8s3q3ddq")


class OccupancyGrid:
    def __init__(self, config: GridConfig, cells: Optional[np.ndarray] = None,
                 observed: Optional[np.ndarray] = None):
        self.config = config
        n = config.cell_count
        if cells is None:
            cells = np.zeros(n, np.uint8)
        cells = np.ascontiguousarray(cells, dtype=np.uint8).reshape(-1)
        if cells.shape[0] != n:
            raise ValueError(f"expected {n} cells, got {cells.shape[0]}")
        self.cells = cells
        # None means every cell counts as observed
        self.observed = observed
        self.skipped_points = 0

    def __repr__(self):
        return f"OccupancyGrid(dims={self.config.dims}, occupied={self.occupied_count()})"

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.config.dims

    def copy(self) -> "OccupancyGrid":
        obs = None if self.observed is None else self.observed.copy()
        return OccupancyGrid(self.config, self.cells.copy(), obs)

    def as_array(self) -> np.ndarray:
        """View indexed ``[i, j, k]``."""
        return self.cells.reshape(self.config.dims, order="F")

    def is_occupied(self, idx: Sequence[int]) -> bool:
        return bool(self.cells[self._flat_checked(idx)])

    def occupied_flat(self) -> np.ndarray:
        return np.flatnonzero(self.cells)

    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.cells))

    def cell_centers(self) -> np.ndarray:
        """``(n_cells, 3)`` centres in storage order."""
        cfg = self.config
        axes = [cfg.origin[a] + (np.arange(cfg.dims[a]) + 0.5) * cfg.resolution for a in range(3)]
        zz, yy, xx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    def blocked_mask(self, unknown_policy: str = "free") -> np.ndarray:
        """Cells a planner may not enter under the given unknown-space policy."""
        if unknown_policy not in ("free", "blocked"):
            raise ValueError(f"unknown_policy must be 'free' or 'blocked', got {unknown_policy!r}")
        if unknown_policy == "blocked" and self.observed is not None:
            return (self.cells != 0) | ~self.observed.astype(bool)
        return self.cells != 0

    def mark_observed(self, box: Aabb) -> None:
        """Flag every cell whose centre lies in ``box`` as observed."""
        inside = _inside_centers(self.config, box)
        if self.observed is None:
            self.observed = np.zeros(self.config.cell_count, bool)
        self.observed |= inside

    def _flat_checked(self, idx: Sequence[int]) -> int:
        dims = self.config.dims
        if len(idx) != 3 or not all(0 <= int(idx[a]) < dims[a] for a in range(3)):
            raise OutOfBoundsError(f"cell {tuple(idx)} outside dims {dims}")
        return flat_index(idx, dims)


@njit(nogil=True, cache=True)
def _mark(cells, flat):
    return fetch_or(cells, flat, np.uint8(1))


@njit(cache=True)
def _direct_kernel(pts, origin, res, dims, dim, cells):
    skipped = 0
    for n in range(pts.shape[0]):
        i = np.int64(np.floor((pts[n, 0] - origin[0]) / res))
        j = np.int64(np.floor((pts[n, 1] - origin[1]) / res))
        k = 0
        if dim == 3:
            k = np.int64(np.floor((pts[n, 2] - origin[2]) / res))
        if i < 0 or j < 0 or k < 0 or i >= dims[0] or j >= dims[1] or k >= dims[2]:
            skipped += 1
            continue
        cells[i + dims[0] * (j + dims[1] * k)] = 1
    return skipped


def grid_new(config: GridConfig, cell_budget: int = DEFAULT_CELL_BUDGET) -> OccupancyGrid:
    """Fresh grid with every cell unoccupied."""
    if config.cell_count > cell_budget:
        raise CellBudgetError(f"{config.cell_count} cells exceeds budget {cell_budget}")
    return OccupancyGrid(config)


def mark_occupied(grid: OccupancyGrid, idx: Sequence[int]) -> None:
    """Atomically set one cell occupied; safe to call from many threads."""
    _mark(grid.cells, grid._flat_checked(idx))


def _inside_centers(config: GridConfig, workspace: Aabb) -> np.ndarray:
    tol = 1e-9 * config.resolution
    masks = []
    for a in range(3):
        c = config.origin[a] + (np.arange(config.dims[a]) + 0.5) * config.resolution
        if a == 2 and config.dimensionality == 2:
            masks.append(np.ones(config.dims[a], bool))
        else:
            masks.append((c >= workspace.min[a] - tol) & (c <= workspace.max[a] + tol))
    inside = masks[2][:, None, None] & masks[1][None, :, None] & masks[0][None, None, :]
    return inside.ravel()


def mask_outside_workspace(grid: OccupancyGrid, workspace: Aabb) -> int:
    """Mark every cell whose centre lies outside ``workspace``; returns that cell count."""
    outside = ~_inside_centers(grid.config, workspace)
    grid.cells[outside] = OCCUPIED
    return int(np.count_nonzero(outside))


def navigable_space_ratio(grid: OccupancyGrid, workspace: Aabb) -> float:
    """Fraction of cells with centres inside ``workspace`` that are unoccupied."""
    inside = _inside_centers(grid.config, workspace)
    total = int(np.count_nonzero(inside))
    if total == 0:
        return 0.0
    free = int(np.count_nonzero(inside & (grid.cells == 0)))
    return free / total


def direct_ogm_build(points, grid: OccupancyGrid) -> OccupancyGrid:
    """Point-wise baseline: occupy every cell that contains at least one point."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    cfg = grid.config
    grid.skipped_points += int(_direct_kernel(pts, np.array(cfg.origin), cfg.resolution,
                                              np.array(cfg.dims, np.int64), cfg.dimensionality,
                                              grid.cells))
    return grid


# -- export -----------------------------------------------------------------


def save_grid(grid: OccupancyGrid, path) -> None:
    cfg = grid.config
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(GRID_MAGIC, *cfg.dims, *cfg.origin, cfg.resolution,
                              cfg.dimensionality))
        fh.write(grid.cells.tobytes())


def load_grid(path) -> OccupancyGrid:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated grid header")
    magic, dx, dy, dz, ox, oy, oz, res, dim = _HEADER.unpack_from(data)
    if magic != GRID_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    dims = (dx, dy, dz)
    n = dx * dy * dz
    payload = data[_HEADER.size:]
    if len(payload) != n:
        raise FormatError(f"{path}: expected {n} cell bytes, found {len(payload)}")
    half = tuple((d - 1) // 2 for d in dims)
    cfg = GridConfig((ox, oy, oz), res, dims, half, int(dim))
    return OccupancyGrid(cfg, np.frombuffer(payload, np.uint8).copy())


def save_grid_csv(grid: OccupancyGrid, path) -> None:
    cfg = grid.config
    dims = cfg.dims
    k, j, i = np.meshgrid(np.arange(dims[2]), np.arange(dims[1]), np.arange(dims[0]),
                          indexing="ij")
    table = np.column_stack([i.ravel(), j.ravel(), k.ravel(), grid.cells])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# dims={dims[0]},{dims[1]},{dims[2]}\n")
        fh.write("# origin={!r},{!r},{!r}\n".format(*cfg.origin))
        fh.write(f"# resolution={cfg.resolution!r}\n")
        fh.write(f"# dimensionality={cfg.dimensionality}\n")
        fh.write("i,j,k,occupied\n")
        np.savetxt(fh, table, fmt="%d", delimiter=",")
