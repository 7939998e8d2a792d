import itertools
import math

import numpy as np
import pytest
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from octogrid.geometry import Aabb, world_to_cell
from octogrid.pipeline import pomp_map

# A 3 x 3 block of unit cells numbered like a keypad with 1 at the top left
# (cell 5 is the centre, centred on the origin). Leaf centres sit on the cell
# corners, so each leaf spreads its four regions over four cells.
KEYPAD_WS = Aabb((-1.5, -1.5, 0.0), (1.5, 1.5, 1.0))
KEYPAD_POINTS = np.array([
    # leaf at (-0.5, -0.5): unsafe in cell 7, safe in cell 5, unsafe in cell 4
    [-0.9, -0.9], [-0.4, -0.4], [-0.9, -0.3],
    # leaf at (0.5, -0.5): safe in 8 and 6, unsafe in 9, safe in 5
    [0.4, -0.6], [0.6, -0.4], [0.9, -0.9], [0.4, -0.4],
    # leaf at (-0.5, 0.5): safe in 5, unsafe in 1
    [-0.4, 0.4], [-0.9, 0.9],
])


def keypad_cell(n, grid):
    x = (n - 1) % 3 - 1
    y = 1 - (n - 1) // 3
    return world_to_cell((float(x), float(y), 0.5), grid.config)


def keypad_grid(workers=1):
    pts = np.column_stack([KEYPAD_POINTS, np.full(len(KEYPAD_POINTS), 0.5)])
    return pomp_map(pts, KEYPAD_WS, 1.0, 0.5, worker_count=workers, dimensionality=2,
                    mask_outside=False).grid


def scipy_length(grid, s, t):
    """Shortest length over the same neighbour model, via a sparse-graph Dijkstra."""
    cfg = grid.config
    dims = cfg.dims
    free = grid.cells == 0
    arr = free.reshape(dims, order="F")
    offs = [o for o in itertools.product((-1, 0, 1), repeat=3) if any(o)]
    if cfg.dimensionality == 2:
        offs = [o for o in offs if o[2] == 0]
    rows, cols, vals = [], [], []
    idx = np.arange(free.size).reshape(dims, order="F")
    for o in offs:
        src = tuple(slice(max(0, -d), n - max(0, d)) for d, n in zip(o, dims))
        dst = tuple(slice(max(0, d), n - max(0, -d)) for d, n in zip(o, dims))
        ok = arr[src] & arr[dst]
        rows.append(idx[src][ok])
        cols.append(idx[dst][ok])
        vals.append(np.full(int(ok.sum()), cfg.resolution * math.sqrt(sum(map(abs, o)))))
    n = free.size
    m = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(n, n)).tocsr()
    fs = s[0] + dims[0] * (s[1] + dims[1] * s[2])
    ft = t[0] + dims[0] * (t[1] + dims[1] * t[2])
    return float(dijkstra(m, indices=fs)[ft])


# -- acceptance summary ---------------------------------------------------------
#
# Each acceptance test stores a one-line verdict via ``record_property``; the
# lines are printed together at the end of the run, pass or fail.

_VERDICTS: list[tuple[str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" and item.module.__name__.endswith("test_acceptance"):
        detail = dict(item.user_properties).get("detail", "")
        if rep.failed and not detail:
            detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
        _VERDICTS.append((item.name, "PASS" if rep.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, detail in sorted(_VERDICTS, key=lambda v: int(v[0].split("_")[2])):
        terminalreporter.write_line(f"{verdict} {name}: {detail}")
