import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from octogrid.errors import OutOfBoundsError
from octogrid.geometry import Aabb, GridConfig
from octogrid.grid import grid_new, mark_occupied
from octogrid.planners import (PlanRequest, astar, cell_world, jps, jps_tables, neighbors,
                               path_length, plan, step_counts)
from octogrid.planners import (REASON_FOUND, REASON_GOAL_OCCUPIED, REASON_START_OCCUPIED,
                               REASON_UNREACHABLE)

from conftest import scipy_length


def make_grid(dims, res=1.0, dim=None):
    dim = dim or (2 if dims[2] == 1 else 3)
    cfg = GridConfig((0.0, 0.0, 0.0), res, dims, tuple((d - 1) // 2 for d in dims), dim)
    return grid_new(cfg)


def request(grid, s, t, policy="free"):
    return PlanRequest(cell_world(s, grid), cell_world(t, grid), policy)


def check_path(grid, res):
    path = res.path
    for c in path:
        assert not grid.is_occupied(c)
    for a, b in zip(path, path[1:]):
        assert max(abs(a[k] - b[k]) for k in range(3)) == 1
    assert res.length == pytest.approx(path_length(path, grid))


# -- worked examples --------------------------------------------------------


@pytest.mark.parametrize("planner", [astar, jps])
def test_empty_diagonal(planner):
    g = make_grid((3, 3, 1))
    res = planner(g, request(g, (0, 0, 0), (2, 2, 0)))
    assert res.success and res.reason == REASON_FOUND
    assert res.length == pytest.approx(2 * math.sqrt(2), abs=1e-12)
    assert res.path == [(0, 0, 0), (1, 1, 0), (2, 2, 0)]


@pytest.mark.parametrize("planner", [astar, jps])
def test_severed_grid(planner):
    g = make_grid((3, 3, 1))
    for y in range(3):
        mark_occupied(g, (1, y, 0))
    res = planner(g, request(g, (0, 0, 0), (2, 2, 0)))
    assert not res.success and res.reason == REASON_UNREACHABLE
    assert res.path == [] and math.isinf(res.length)


@pytest.mark.parametrize("planner", [astar, jps])
def test_wall_with_gap(planner):
    g = make_grid((5, 5, 1))
    for y in range(4):
        mark_occupied(g, (2, y, 0))
    res = planner(g, request(g, (0, 0, 0), (4, 0, 0)))
    assert res.success
    assert res.length == pytest.approx(scipy_length(g, (0, 0, 0), (4, 0, 0)), rel=1e-12)
    assert (2, 4, 0) in res.path
    check_path(g, res)


@pytest.mark.parametrize("planner", [astar, jps])
def test_endpoint_reasons(planner):
    g = make_grid((3, 3, 1))
    mark_occupied(g, (0, 0, 0))
    assert planner(g, request(g, (0, 0, 0), (2, 2, 0))).reason == REASON_START_OCCUPIED
    assert planner(g, request(g, (2, 2, 0), (0, 0, 0))).reason == REASON_GOAL_OCCUPIED


@pytest.mark.parametrize("planner", [astar, jps])
def test_trivial_plan(planner):
    g = make_grid((3, 3, 3))
    res = planner(g, request(g, (1, 1, 1), (1, 1, 1)))
    assert res.success and res.length == 0.0 and res.path == [(1, 1, 1)]


def test_out_of_bounds_endpoint():
    g = make_grid((3, 3, 1))
    with pytest.raises(OutOfBoundsError):
        plan(g, (-5.0, 0.5, 0.5), (1.5, 1.5, 0.5))


def test_plan_dispatch():
    g = make_grid((5, 5, 5))
    a = plan(g, (0.5, 0.5, 0.5), (4.5, 3.5, 2.5), "astar")
    b = plan(g, (0.5, 0.5, 0.5), (4.5, 3.5, 2.5), "jps")
    assert a.length == b.length == pytest.approx(2 * math.sqrt(3) + math.sqrt(2) + 1)
    with pytest.raises(ValueError):
        plan(g, (0.5, 0.5, 0.5), (1.5, 1.5, 1.5), "rrt")


def test_unknown_policy():
    g = make_grid((5, 1, 1), dim=2)
    g.mark_observed(Aabb((0, 0, 0), (2, 1, 1)))
    start, goal = (0, 0, 0), (4, 0, 0)
    assert astar(g, request(g, start, goal)).success
    blocked = astar(g, request(g, start, goal, "blocked"))
    assert blocked.reason == REASON_GOAL_OCCUPIED


# -- neighbours and lengths ------------------------------------------------------


def test_neighbor_counts():
    g3 = make_grid((3, 3, 3))
    assert len(neighbors((1, 1, 1), g3)) == 26
    g2 = make_grid((3, 3, 1))
    assert len(neighbors((0, 0, 0), g2)) == 3
    for c in [(1, 0, 0), (0, 1, 0), (2, 1, 0), (1, 2, 0)]:
        mark_occupied(g2, c)
    nb = neighbors((1, 1, 0), g2)
    assert sorted(c for c, _ in nb) == [(0, 0, 0), (0, 2, 0), (2, 0, 0), (2, 2, 0)]
    assert all(cost == pytest.approx(math.sqrt(2)) for _, cost in nb)


def test_neighbor_costs_scale_with_resolution():
    g = make_grid((3, 3, 3), res=0.5)
    costs = sorted({round(c, 12) for _, c in neighbors((1, 1, 1), g)})
    assert costs == [0.5, round(0.5 * math.sqrt(2), 12), round(0.5 * math.sqrt(3), 12)]
    with pytest.raises(OutOfBoundsError):
        neighbors((3, 0, 0), g)


def test_path_length_examples():
    g = make_grid((5, 5, 1), res=0.5)
    assert path_length([(0, 0, 0)], g) == 0.0
    p = [(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 1, 0)]
    assert path_length(p, g) == pytest.approx(1.0 + 0.5 * math.sqrt(2))
    assert step_counts(p) == (2, 1, 0)
    g3 = make_grid((3, 3, 3), res=0.5)
    assert path_length([(0, 0, 0), (1, 1, 1)], g3) == pytest.approx(0.5 * math.sqrt(3))
    with pytest.raises(ValueError):
        path_length([(0, 0, 0), (2, 0, 0)], g)


def test_jps_table_sizes():
    t3 = jps_tables(3)
    assert len(t3.dirs) == 26
    by_norm = {n: [d for d in range(26) if t3.norm[d] == n] for n in (1, 2, 3)}
    assert len(by_norm[1]) == 6 and len(by_norm[2]) == 12 and len(by_norm[3]) == 8
    d = by_norm[1][0]
    assert t3.nat_count[d] == 1 and t3.fc_count[d] == 8
    d = by_norm[2][0]
    assert t3.nat_count[d] == 3 and t3.fc_count[d] == 12
    d = by_norm[3][0]
    assert t3.nat_count[d] == 7 and t3.fc_count[d] == 12
    t2 = jps_tables(2)
    assert len(t2.dirs) == 8
    straight = [d for d in range(8) if t2.norm[d] == 1][0]
    diag = [d for d in range(8) if t2.norm[d] == 2][0]
    assert t2.fc_count[straight] == 2 and t2.fc_count[diag] == 2


# -- oracle comparisons ----------------------------------------------------------


def random_instance(seed, dims, density):
    rng = np.random.default_rng(seed)
    g = make_grid(dims)
    g.cells[:] = rng.random(g.cells.size) < density
    cells = list(itertools.product(*(range(d) for d in dims)))
    s = cells[rng.integers(len(cells))]
    t = cells[rng.integers(len(cells))]
    g.cells[s[0] + dims[0] * (s[1] + dims[1] * s[2])] = 0
    g.cells[t[0] + dims[0] * (t[1] + dims[1] * t[2])] = 0
    return g, s, t


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([(9, 9, 9), (15, 11, 7), (31, 31, 1), (21, 5, 13)]),
       st.floats(0.0, 0.6))
def test_astar_and_jps_match_dijkstra(seed, dims, density):
    g, s, t = random_instance(seed, dims, density)
    oracle = scipy_length(g, s, t)
    a = astar(g, request(g, s, t))
    j = jps(g, request(g, s, t))
    assert a.success == j.success == math.isfinite(oracle)
    if a.success:
        assert a.length == pytest.approx(oracle, rel=1e-9)
        assert abs(j.length - a.length) <= 1e-9 * max(a.length, 1.0)
        check_path(g, a)
        check_path(g, j)
        assert a.path[0] == s and a.path[-1] == t
        assert j.path[0] == s and j.path[-1] == t


def test_astar_is_deterministic():
    g, s, t = random_instance(3, (15, 15, 15), 0.3)
    a = astar(g, request(g, s, t))
    b = astar(g, request(g, s, t))
    assert a.path == b.path and a.expansions == b.expansions


def test_jps_expands_less_on_open_grid():
    g = make_grid((31, 31, 31))
    a = astar(g, request(g, (0, 0, 0), (30, 20, 10)))
    j = jps(g, request(g, (0, 0, 0), (30, 20, 10)))
    assert j.length == pytest.approx(a.length)
    assert j.expansions < a.expansions
