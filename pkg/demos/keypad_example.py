"""Nine points in a 3 x 3 block of cells, showing which cells the projection occupies.

Cells are numbered like a phone keypad, 1 at the top left. The direct grid
occupies every cell holding a point; the projected grid leaves the centre
cell and its axis neighbours 2 and 8 open, and still blocks every diagonal
that would squeeze between points.

    python demos/keypad_example.py
"""

import numpy as np

from octogrid import Aabb, direct_map, pomp_map, world_to_cell

ws = Aabb((-1.5, -1.5, 0.0), (1.5, 1.5, 1.0))
xy = np.array([[-0.9, -0.9], [-0.4, -0.4], [-0.9, -0.3],
               [0.4, -0.6], [0.6, -0.4], [0.9, -0.9], [0.4, -0.4],
               [-0.4, 0.4], [-0.9, 0.9]])
points = np.column_stack([xy, np.full(len(xy), 0.5)])

projected = pomp_map(points, ws, 1.0, 0.5, dimensionality=2, mask_outside=False).grid
direct, _ = direct_map(points, ws, 1.0, dimensionality=2, mask_outside=False)


def show(title, grid):
    print(title)
    for row in range(3):
        cells = []
        for col in range(3):
            n = 3 * row + col + 1
            idx = world_to_cell((float(col - 1), float(1 - row), 0.5), grid.config)
            cells.append(f"[{n}]" if grid.is_occupied(idx) else f" {n} ")
        print("  " + " ".join(cells))


show("direct (occupied cells in brackets)", direct)
show("projected", projected)
