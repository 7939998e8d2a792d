"""Deterministic SVG views of one horizontal slice of a grid (and optionally a tree).

World y points up in the picture. Numbers are written with fixed precision
so equal inputs always give byte-identical files.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .grid import OccupancyGrid
from .octree import Octree, RegionState, region_state_from_bits

BACKGROUND = "#ffffff"
OCCUPIED_FILL = "#f2c744"
GRID_LINE = "#d0d0d0"
LEAF_LINE = "#3070b0"
STATE_FILL = {RegionState.SAFE: "#f08070", RegionState.UNSAFE: "#e0409a"}
PATH_LINE = "#202020"


def _f(x: float) -> str:
    return f"{x:.3f}"


def slice_index(grid: OccupancyGrid, z: Optional[float]) -> int:
    cfg = grid.config
    if z is None or cfg.dimensionality == 2:
        return cfg.dims[2] // 2
    k = int(np.floor((z - cfg.origin[2]) / cfg.resolution))
    if not 0 <= k < cfg.dims[2]:
        raise ValueError(f"z={z} is outside the grid")
    return k


def render_svg(grid: OccupancyGrid, z: Optional[float] = None, *, tree: Optional[Octree] = None,
               path: Optional[Sequence[Sequence[int]]] = None, cell_px: float = 16.0,
               grid_lines: bool = True) -> str:
    cfg = grid.config
    nx, ny = cfg.dims[0], cfg.dims[1]
    k = slice_index(grid, z)
    z_world = cfg.origin[2] + (k + 0.5) * cfg.resolution
    s = cell_px / cfg.resolution
    width, height = nx * cell_px, ny * cell_px

    def px(x):
        return (x - cfg.origin[0]) * s

    def py(y):
        return height - (y - cfg.origin[1]) * s

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" '
           f'height="{_f(height)}" viewBox="0 0 {_f(width)} {_f(height)}">',
           f'<rect x="0" y="0" width="{_f(width)}" height="{_f(height)}" fill="{BACKGROUND}"/>']
    layer = grid.as_array()[:, :, k]
    out.append('<g id="occupied">')
    for j in range(ny):
        for i in range(nx):
            if layer[i, j]:
                out.append(f'<rect x="{_f(i * cell_px)}" y="{_f((ny - 1 - j) * cell_px)}" '
                           f'width="{_f(cell_px)}" height="{_f(cell_px)}" '
                           f'fill="{OCCUPIED_FILL}"/>')
    out.append("</g>")
    if grid_lines:
        out.append(f'<g id="cells" stroke="{GRID_LINE}" stroke-width="0.5">')
        for i in range(nx + 1):
            out.append(f'<line x1="{_f(i * cell_px)}" y1="0" x2="{_f(i * cell_px)}" '
                       f'y2="{_f(height)}"/>')
        for j in range(ny + 1):
            out.append(f'<line x1="0" y1="{_f(j * cell_px)}" x2="{_f(width)}" '
                       f'y2="{_f(j * cell_px)}"/>')
        out.append("</g>")
    if tree is not None:
        tcfg = tree.config
        half = 0.5 * tcfg.leaf_size
        dim = tcfg.dimensionality
        out.append(f'<g id="leaves" fill="none" stroke="{LEAF_LINE}" stroke-width="1">')
        regions = []
        for leaf, c, bits in zip(tree.leaf_ids(), tree.leaf_centers(), tree.leaf_states()):
            if dim == 3 and not (c[2] - half <= z_world < c[2] + half):
                continue
            out.append(f'<rect x="{_f(px(c[0] - half))}" y="{_f(py(c[1] + half))}" '
                       f'width="{_f(2 * half * s)}" height="{_f(2 * half * s)}"/>')
            zbit = 4 if dim == 3 and z_world >= c[2] else 0
            for r in range(4):
                st = region_state_from_bits(int(bits), r | zbit, dim)
                if st == RegionState.CLEAR:
                    continue
                x0 = c[0] if r & 1 else c[0] - half
                y1 = c[1] + half if r & 2 else c[1]
                regions.append(f'<rect x="{_f(px(x0) + 1)}" y="{_f(py(y1) + 1)}" '
                               f'width="{_f(half * s - 2)}" height="{_f(half * s - 2)}" '
                               f'fill="{STATE_FILL[st]}" fill-opacity="0.6"/>')
        out.append("</g>")
        out.append('<g id="regions">')
        out.extend(regions)
        out.append("</g>")
    if path:
        pts = " ".join(f"{_f((c[0] + 0.5) * cell_px)},{_f((ny - 0.5 - c[1]) * cell_px)}"
                       for c in path)
        out.append(f'<polyline id="path" points="{pts}" fill="none" stroke="{PATH_LINE}" '
                   f'stroke-width="2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def save_svg(path, svg: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
