"""A* and Jump Point Search on 8-connected (2D) / 26-connected (3D) grids.

Moves go to any free cell within Chebyshev distance one and cost the
Euclidean distance between cell centres. A diagonal move only needs its two
endpoint cells free; the occupancy grid itself is responsible for blocking
unsafe diagonals.

JPS pruning is derived rather than hand-tabulated. Coming into cell ``x``
from ``p = x - d``, a neighbour ``n = x + e`` can be skipped whenever some
intermediate cell ``m`` gives a two-move path ``p -> m -> n`` that avoids
``x`` and is either strictly cheaper, or equally cheap and takes its more
diagonal move first. Directions that are component-wise sub-directions of
``d`` are always expanded ("natural"); any other neighbour is "forced" once
every one of its witnesses ``m`` is blocked. Among all optimal paths the one
that front-loads diagonal moves is never pruned, so the search stays optimal.
The search runs over (cell, incoming direction) states so that a cell
reached optimally along two directions keeps both successor sets.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from numba import njit

from .errors import OutOfBoundsError
from .geometry import CellIndex, Vec3, world_to_cell
from .grid import OccupancyGrid

REASON_FOUND = "found"
REASON_START_OCCUPIED = "start_occupied"
REASON_GOAL_OCCUPIED = "goal_occupied"
REASON_UNREACHABLE = "unreachable"

_SQRT = (0.0, 1.0, math.sqrt(2.0), math.sqrt(3.0))


@dataclass(frozen=True)
class PlanRequest:
    start: Vec3
    goal: Vec3
    unknown_policy: str = "free"


@dataclass
class PlanResult:
    success: bool
    path: list[CellIndex] = field(default_factory=list)
    length: float = math.inf
    expansions: int = 0
    wall_time: float = 0.0
    reason: str = REASON_UNREACHABLE


# -- direction tables ---------------------------------------------------------


def _offsets(dim: int) -> list[tuple[int, int, int]]:
    zs = (-1, 0, 1) if dim == 3 else (0,)
    out = []
    for dz in zs:
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if (dx, dy, dz) != (0, 0, 0):
                    out.append((dx, dy, dz))
    return out


def _norm1(v) -> int:
    return sum(abs(c) for c in v)


def _cheb(v) -> int:
    return max(abs(c) for c in v)


def _sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def _is_subdirection(e, d) -> bool:
    return all(ec == 0 or ec == dc for ec, dc in zip(e, d))


@dataclass(frozen=True)
class JpsTables:
    dirs: np.ndarray  # (nd, 3)
    cost: np.ndarray  # (nd,) in cell units
    norm: np.ndarray  # (nd,)
    nat_count: np.ndarray  # (nd,)
    nat: np.ndarray  # (nd, max_nat) direction indices, the direction itself first
    fc_count: np.ndarray  # (nd,)
    fc_dir: np.ndarray  # (nd, max_fc)
    fc_wcount: np.ndarray  # (nd, max_fc)
    fc_w: np.ndarray  # (nd, max_fc, max_w) witness cells as direction indices from x


@lru_cache(maxsize=None)
def jps_tables(dim: int) -> JpsTables:
    offs = _offsets(dim)
    index = {o: i for i, o in enumerate(offs)}
    nd = len(offs)
    cost = np.array([_SQRT[_norm1(o)] for o in offs])
    naturals, forced = [], []
    for d in offs:
        p = tuple(-c for c in d)
        nat = [d] + [e for e in offs if e != d and _is_subdirection(e, d)]
        naturals.append([index[e] for e in nat])
        cands = []
        for e in offs:
            if e in nat or e == p:
                continue
            if _cheb(_sub(e, p)) <= 1:
                continue  # p reaches n in one move, cheaper than any two
            c_via = _SQRT[_norm1(d)] + _SQRT[_norm1(e)]
            rank_via = (_norm1(d), _norm1(e))
            wit = []
            for m in offs:
                if m in (p, e) or _cheb(_sub(m, p)) > 1 or _cheb(_sub(e, m)) > 1:
                    continue
                a, b = _sub(m, p), _sub(e, m)
                c_alt = _SQRT[_norm1(a)] + _SQRT[_norm1(b)]
                if c_alt < c_via - 1e-9 or (abs(c_alt - c_via) <= 1e-9
                                            and (_norm1(a), _norm1(b)) > rank_via):
                    wit.append(index[m])
            if not wit:
                raise AssertionError(f"direction {e} from {d} is never dominated")
            cands.append((index[e], wit))
        forced.append(cands)
    max_nat = max(len(n) for n in naturals)
    max_fc = max(len(f) for f in forced)
    max_w = max((len(w) for f in forced for _, w in f), default=1)
    nat = np.full((nd, max_nat), -1, np.int64)
    fc_dir = np.full((nd, max(max_fc, 1)), -1, np.int64)
    fc_wcount = np.zeros((nd, max(max_fc, 1)), np.int64)
    fc_w = np.full((nd, max(max_fc, 1), max_w), -1, np.int64)
    for i in range(nd):
        nat[i, :len(naturals[i])] = naturals[i]
        for k, (e, wit) in enumerate(forced[i]):
            fc_dir[i, k] = e
            fc_wcount[i, k] = len(wit)
            fc_w[i, k, :len(wit)] = wit
    return JpsTables(
        dirs=np.array(offs, np.int64), cost=cost,
        norm=np.array([_norm1(o) for o in offs], np.int64),
        nat_count=np.array([len(n) for n in naturals], np.int64), nat=nat,
        fc_count=np.array([len(f) for f in forced], np.int64),
        fc_dir=fc_dir, fc_wcount=fc_wcount, fc_w=fc_w)


# -- kernels ------------------------------------------------------------------


@njit(inline="always")
def _free(blocked, dims, i, j, k):
    if i < 0 or j < 0 or k < 0 or i >= dims[0] or j >= dims[1] or k >= dims[2]:
        return False
    return blocked[i + dims[0] * (j + dims[1] * k)] == 0


@njit(inline="always")
def _heur(i, j, k, gi, gj, gk):
    di = i - gi
    dj = j - gj
    dk = k - gk
    return math.sqrt(di * di + dj * dj + dk * dk)


@njit(cache=True)
def _astar_kernel(blocked, dims, dirs, cost, start, goal):
    n = dims[0] * dims[1] * dims[2]
    g = np.full(n, np.inf)
    parent = np.full(n, -1, np.int64)
    closed = np.zeros(n, np.uint8)
    gi = goal % dims[0]
    gj = (goal // dims[0]) % dims[1]
    gk = goal // (dims[0] * dims[1])
    si = start % dims[0]
    sj = (start // dims[0]) % dims[1]
    sk = start // (dims[0] * dims[1])
    g[start] = 0.0
    heap = [(_heur(si, sj, sk, gi, gj, gk), -0.0, (si * dims[1] + sj) * dims[2] + sk, start)]
    expansions = 0
    found = False
    while len(heap) > 0:
        f, neg_g, key, u = heapq.heappop(heap)
        if closed[u]:
            continue
        closed[u] = 1
        expansions += 1
        if u == goal:
            found = True
            break
        ui = u % dims[0]
        uj = (u // dims[0]) % dims[1]
        uk = u // (dims[0] * dims[1])
        gu = g[u]
        for d in range(dirs.shape[0]):
            vi = ui + dirs[d, 0]
            vj = uj + dirs[d, 1]
            vk = uk + dirs[d, 2]
            if not _free(blocked, dims, vi, vj, vk):
                continue
            v = vi + dims[0] * (vj + dims[1] * vk)
            if closed[v]:
                continue
            ng = gu + cost[d]
            if ng < g[v]:
                g[v] = ng
                parent[v] = u
                heapq.heappush(heap, (ng + _heur(vi, vj, vk, gi, gj, gk), -ng,
                                      (vi * dims[1] + vj) * dims[2] + vk, v))
    return found, parent, expansions


@njit(inline="always")
def _has_forced(blocked, dims, i, j, k, d, dirs, fc_count, fc_dir, fc_wcount, fc_w):
    for c in range(fc_count[d]):
        e = fc_dir[d, c]
        if not _free(blocked, dims, i + dirs[e, 0], j + dirs[e, 1], k + dirs[e, 2]):
            continue
        all_blocked = True
        for w in range(fc_wcount[d, c]):
            m = fc_w[d, c, w]
            if _free(blocked, dims, i + dirs[m, 0], j + dirs[m, 1], k + dirs[m, 2]):
                all_blocked = False
                break
        if all_blocked:
            return True
    return False


@njit(cache=True)
def _jump1(blocked, dims, i, j, k, e, goal, dirs, fc_count, fc_dir, fc_wcount, fc_w):
    steps = 0
    while True:
        i += dirs[e, 0]
        j += dirs[e, 1]
        k += dirs[e, 2]
        steps += 1
        if not _free(blocked, dims, i, j, k):
            return -1, 0
        if i + dims[0] * (j + dims[1] * k) == goal:
            return goal, steps
        if _has_forced(blocked, dims, i, j, k, e, dirs, fc_count, fc_dir, fc_wcount, fc_w):
            return i + dims[0] * (j + dims[1] * k), steps


@njit(cache=True)
def _jump2(blocked, dims, i, j, k, e, goal, dirs, nat_count, nat, fc_count, fc_dir, fc_wcount,
           fc_w):
    steps = 0
    while True:
        i += dirs[e, 0]
        j += dirs[e, 1]
        k += dirs[e, 2]
        steps += 1
        if not _free(blocked, dims, i, j, k):
            return -1, 0
        here = i + dims[0] * (j + dims[1] * k)
        if here == goal:
            return goal, steps
        if _has_forced(blocked, dims, i, j, k, e, dirs, fc_count, fc_dir, fc_wcount, fc_w):
            return here, steps
        for s in range(1, nat_count[e]):
            hit, _ = _jump1(blocked, dims, i, j, k, nat[e, s], goal, dirs, fc_count, fc_dir,
                            fc_wcount, fc_w)
            if hit >= 0:
                return here, steps


@njit(cache=True)
def _jump3(blocked, dims, i, j, k, e, goal, dirs, norm, nat_count, nat, fc_count, fc_dir,
           fc_wcount, fc_w):
    steps = 0
    while True:
        i += dirs[e, 0]
        j += dirs[e, 1]
        k += dirs[e, 2]
        steps += 1
        if not _free(blocked, dims, i, j, k):
            return -1, 0
        here = i + dims[0] * (j + dims[1] * k)
        if here == goal:
            return goal, steps
        if _has_forced(blocked, dims, i, j, k, e, dirs, fc_count, fc_dir, fc_wcount, fc_w):
            return here, steps
        for s in range(1, nat_count[e]):
            sub = nat[e, s]
            if norm[sub] == 2:
                hit, _ = _jump2(blocked, dims, i, j, k, sub, goal, dirs, nat_count, nat,
                                fc_count, fc_dir, fc_wcount, fc_w)
            else:
                hit, _ = _jump1(blocked, dims, i, j, k, sub, goal, dirs, fc_count, fc_dir,
                                fc_wcount, fc_w)
            if hit >= 0:
                return here, steps


@njit(cache=True)
def _jps_kernel(blocked, dims, start, goal, dirs, cost, norm, nat_count, nat, fc_count, fc_dir,
                fc_wcount, fc_w):
    nd = dirs.shape[0]
    width = nd + 1
    n = dims[0] * dims[1] * dims[2]
    g = np.full(n * width, np.inf)
    parent = np.full(n * width, -1, np.int64)
    closed = np.zeros(n * width, np.uint8)
    gi = goal % dims[0]
    gj = (goal // dims[0]) % dims[1]
    gk = goal // (dims[0] * dims[1])
    si = start % dims[0]
    sj = (start // dims[0]) % dims[1]
    sk = start // (dims[0] * dims[1])
    s0 = start * width + nd
    g[s0] = 0.0
    heap = [(_heur(si, sj, sk, gi, gj, gk), -0.0, (si * dims[1] + sj) * dims[2] + sk, s0)]
    expansions = 0
    goal_state = -1
    while len(heap) > 0:
        f, neg_g, key, u = heapq.heappop(heap)
        if closed[u]:
            continue
        closed[u] = 1
        expansions += 1
        cell = u // width
        d = u % width
        if cell == goal:
            goal_state = u
            break
        ui = cell % dims[0]
        uj = (cell // dims[0]) % dims[1]
        uk = cell // (dims[0] * dims[1])
        gu = g[u]
        # successor directions: all for the start state, else natural + forced
        cand = np.empty(nd, np.int64)
        nc = 0
        if d == nd:
            for e in range(nd):
                cand[nc] = e
                nc += 1
        else:
            for s in range(nat_count[d]):
                cand[nc] = nat[d, s]
                nc += 1
            for c in range(fc_count[d]):
                e = fc_dir[d, c]
                if not _free(blocked, dims, ui + dirs[e, 0], uj + dirs[e, 1], uk + dirs[e, 2]):
                    continue
                all_blocked = True
                for w in range(fc_wcount[d, c]):
                    m = fc_w[d, c, w]
                    if _free(blocked, dims, ui + dirs[m, 0], uj + dirs[m, 1], uk + dirs[m, 2]):
                        all_blocked = False
                        break
                if all_blocked:
                    cand[nc] = e
                    nc += 1
        for c in range(nc):
            e = cand[c]
            if norm[e] == 1:
                hit, steps = _jump1(blocked, dims, ui, uj, uk, e, goal, dirs, fc_count, fc_dir,
                                    fc_wcount, fc_w)
            elif norm[e] == 2:
                hit, steps = _jump2(blocked, dims, ui, uj, uk, e, goal, dirs, nat_count, nat,
                                    fc_count, fc_dir, fc_wcount, fc_w)
            else:
                hit, steps = _jump3(blocked, dims, ui, uj, uk, e, goal, dirs, norm, nat_count,
                                    nat, fc_count, fc_dir, fc_wcount, fc_w)
            if hit < 0:
                continue
            v = hit * width + e
            if closed[v]:
                continue
            ng = gu + steps * cost[e]
            if ng < g[v]:
                g[v] = ng
                parent[v] = u
                vi = hit % dims[0]
                vj = (hit // dims[0]) % dims[1]
                vk = hit // (dims[0] * dims[1])
                heapq.heappush(heap, (ng + _heur(vi, vj, vk, gi, gj, gk), -ng,
                                      (vi * dims[1] + vj) * dims[2] + vk, v))
    return goal_state, parent, expansions


# -- Python API ---------------------------------------------------------------


def _unflat(flat: int, dims) -> CellIndex:
    return CellIndex(int(flat % dims[0]), int(flat // dims[0] % dims[1]),
                     int(flat // (dims[0] * dims[1])))


def _flat(c: Sequence[int], dims) -> int:
    return int(c[0]) + dims[0] * (int(c[1]) + dims[1] * int(c[2]))


def step_counts(path: Sequence[Sequence[int]]) -> tuple[int, int, int]:
    """Number of axis, face-diagonal and space-diagonal steps along ``path``."""
    counts = [0, 0, 0, 0]
    for a, b in zip(path, path[1:]):
        delta = [int(b[t]) - int(a[t]) for t in range(3)]
        if max(abs(x) for x in delta) != 1:
            raise ValueError(f"invalid step {tuple(a)} -> {tuple(b)}")
        counts[sum(abs(x) for x in delta)] += 1
    return counts[1], counts[2], counts[3]


def path_length(path: Sequence[Sequence[int]], grid: OccupancyGrid) -> float:
    """Euclidean length in metres; grouped by step type so equal-cost paths agree bit-for-bit."""
    n1, n2, n3 = step_counts(path)
    return grid.config.resolution * (n1 + n2 * _SQRT[2] + n3 * _SQRT[3])


def neighbors(idx: Sequence[int], grid: OccupancyGrid,
              unknown_policy: str = "free") -> list[tuple[CellIndex, float]]:
    """Free cells within Chebyshev distance one and the step cost to each."""
    dims = grid.config.dims
    if not all(0 <= int(idx[a]) < dims[a] for a in range(3)):
        raise OutOfBoundsError(f"cell {tuple(idx)} outside dims {dims}")
    blocked = grid.blocked_mask(unknown_policy)
    res = grid.config.resolution
    out = []
    for o in _offsets(grid.config.dimensionality):
        c = tuple(int(idx[a]) + o[a] for a in range(3))
        if all(0 <= c[a] < dims[a] for a in range(3)) and not blocked[_flat(c, dims)]:
            out.append((CellIndex(*c), res * _SQRT[_norm1(o)]))
    return out


def _prepare(grid: OccupancyGrid, req: PlanRequest):
    dims = grid.config.dims
    s = world_to_cell(req.start, grid.config)
    t = world_to_cell(req.goal, grid.config)
    blocked = grid.blocked_mask(req.unknown_policy).astype(np.uint8)
    return blocked, np.array(dims, np.int64), _flat(s, dims), _flat(t, dims)


def _endpoint_failure(blocked, start, goal) -> str | None:
    if blocked[start]:
        return REASON_START_OCCUPIED
    if blocked[goal]:
        return REASON_GOAL_OCCUPIED
    return None


def astar(grid: OccupancyGrid, req: PlanRequest) -> PlanResult:
    t0 = time.perf_counter()
    blocked, dims, start, goal = _prepare(grid, req)
    reason = _endpoint_failure(blocked, start, goal)
    if reason:
        return PlanResult(False, reason=reason, wall_time=time.perf_counter() - t0)
    tables = jps_tables(grid.config.dimensionality)
    found, parent, expansions = _astar_kernel(blocked, dims, tables.dirs, tables.cost, start,
                                              goal)
    if not found:
        return PlanResult(False, expansions=int(expansions), reason=REASON_UNREACHABLE,
                          wall_time=time.perf_counter() - t0)
    flat_path = [goal]
    while flat_path[-1] != start:
        flat_path.append(int(parent[flat_path[-1]]))
    path = [_unflat(f, dims) for f in reversed(flat_path)]
    return PlanResult(True, path, path_length(path, grid), int(expansions),
                      time.perf_counter() - t0, REASON_FOUND)


def jps(grid: OccupancyGrid, req: PlanRequest) -> PlanResult:
    t0 = time.perf_counter()
    blocked, dims, start, goal = _prepare(grid, req)
    reason = _endpoint_failure(blocked, start, goal)
    if reason:
        return PlanResult(False, reason=reason, wall_time=time.perf_counter() - t0)
    if start == goal:
        path = [_unflat(start, dims)]
        return PlanResult(True, path, 0.0, 1, time.perf_counter() - t0, REASON_FOUND)
    tb = jps_tables(grid.config.dimensionality)
    goal_state, parent, expansions = _jps_kernel(blocked, dims, start, goal, tb.dirs, tb.cost,
                                                 tb.norm, tb.nat_count, tb.nat, tb.fc_count,
                                                 tb.fc_dir, tb.fc_wcount, tb.fc_w)
    if goal_state < 0:
        return PlanResult(False, expansions=int(expansions), reason=REASON_UNREACHABLE,
                          wall_time=time.perf_counter() - t0)
    width = len(tb.dirs) + 1
    jump_points = [int(goal_state)]
    while parent[jump_points[-1]] >= 0:
        jump_points.append(int(parent[jump_points[-1]]))
    jump_points.reverse()
    path = [_unflat(start, dims)]
    for state in jump_points[1:]:
        target = _unflat(state // width, dims)
        e = tb.dirs[state % width]
        while path[-1] != target:
            path.append(CellIndex(*(path[-1][a] + int(e[a]) for a in range(3))))
    return PlanResult(True, path, path_length(path, grid), int(expansions),
                      time.perf_counter() - t0, REASON_FOUND)


PLANNERS = {"astar": astar, "jps": jps}


def plan(grid: OccupancyGrid, start: Vec3, goal: Vec3, planner: str = "astar",
         unknown_policy: str = "free") -> PlanResult:
    try:
        fn = PLANNERS[planner]
    except KeyError:
        raise ValueError(f"unknown planner {planner!r}; choose from {sorted(PLANNERS)}") from None
    return fn(grid, PlanRequest(tuple(start), tuple(goal), unknown_policy))  # type: ignore[arg-type]


def cell_world(idx: Sequence[int], grid: OccupancyGrid) -> Vec3:
    cfg = grid.config
    return tuple(cfg.origin[a] + (idx[a] + 0.5) * cfg.resolution for a in range(3))  # type: ignore[return-value]


__all__ = [
    "PlanRequest", "PlanResult", "astar", "jps", "plan", "neighbors", "path_length",
    "step_counts", "jps_tables", "JpsTables", "PLANNERS", "cell_world",
    "REASON_FOUND", "REASON_START_OCCUPIED", "REASON_GOAL_OCCUPIED", "REASON_UNREACHABLE",
]

