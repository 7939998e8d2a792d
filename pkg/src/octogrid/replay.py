"""Frame replay: a reader thread feeds a mapping thread through a bounded queue.

The mapper keeps one octree for the whole run, inserts each frame into it,
then projects the tree onto a fresh grid. When the queue is full the reader
either discards the oldest waiting frame (``drop-oldest``, counted) or waits
(``block``). "In flight" means handed to the queue and not yet taken by the
mapper, so it never exceeds the queue capacity.
"""

from __future__ import annotations

import collections
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .geometry import DEFAULT_RATIO, Aabb, make_configs
from .grid import OccupancyGrid, grid_new, mask_outside_workspace
from .octree import Octree
from .planners import PlanRequest, astar
from .projection import project_octree
from .scenes import Frame

DROP_OLDEST = "drop-oldest"
BLOCK = "block"


class BoundedFrameQueue:
    """Thread-safe FIFO of at most ``capacity`` frames with drop accounting."""

    def __init__(self, capacity: int, policy: str = DROP_OLDEST):
        if capacity < 1:
            raise ValueError(f"queue capacity must be >= 1, got {capacity}")
        if policy not in (DROP_OLDEST, BLOCK):
            raise ValueError(f"unknown drop policy {policy!r}")
        self.capacity = capacity
        self.policy = policy
        self._items: collections.deque = collections.deque()
        self._cond = threading.Condition()
        self._closed = False
        self.produced = 0
        self.consumed = 0
        self.dropped = 0
        self.max_in_flight = 0

    def put(self, item) -> None:
        with self._cond:
            if self._closed:
                raise RuntimeError("put on a closed queue")
            if self.policy == BLOCK:
                while len(self._items) >= self.capacity:
                    self._cond.wait()
            elif len(self._items) >= self.capacity:
                self._items.popleft()
                self.dropped += 1
            self._items.append(item)
            self.produced += 1
            self.max_in_flight = max(self.max_in_flight, len(self._items))
            self._cond.notify_all()

    def get(self):
        """Next item, or ``None`` once the queue is closed and drained."""
        with self._cond:
            while not self._items and not self._closed:
                self._cond.wait()
            if not self._items:
                return None
            item = self._items.popleft()
            self.consumed += 1
            self._cond.notify_all()
            return item

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def __len__(self):
        with self._cond:
            return len(self._items)


@dataclass
class SweepRow:
    frame: int
    timestamp: float
    points: int
    build_ms: float
    project_ms: float
    occupied: int
    latency_ms: float
    plan_success: Optional[bool] = None
    path_len_m: Optional[float] = None
    plan_ms: Optional[float] = None


@dataclass
class ReplayResult:
    rows: list[SweepRow]
    grid: Optional[OccupancyGrid]
    tree: Octree
    produced: int
    consumed: int
    dropped: int
    max_in_flight: int
    capacity: int
    timings: dict = field(default_factory=dict)


def replay(frames: Iterable[Frame], workspace: Aabb, resolution: float,
           ratio: float = DEFAULT_RATIO, *, capacity: int = 4, policy: str = DROP_OLDEST,
           rate: Optional[float] = None, consumer_delay: float = 0.0,
           worker_count: Optional[int] = None, plan: Optional[tuple] = None,
           mask_outside: bool = True) -> ReplayResult:
    """Stream ``frames`` through the mapper.

    ``rate=None`` pushes frames as fast as they can be read; otherwise frames
    are released at their timestamps divided by ``rate`` (1.0 = real time).
    ``consumer_delay`` adds a sleep per frame to emulate a slow mapper.
    ``plan=(start, goal)`` runs A* on every projected grid.
    """
    tcfg, gcfg = make_configs(workspace, resolution, ratio)
    tree = Octree(tcfg, store_points=False)
    queue = BoundedFrameQueue(capacity, policy)
    failure: list[BaseException] = []

    def produce():
        t_wall = time.perf_counter()
        t_first = None
        try:
            for k, fr in enumerate(frames):
                if rate is not None:
                    if t_first is None:
                        t_first = fr.timestamp
                    due = t_wall + (fr.timestamp - t_first) / rate
                    pause = due - time.perf_counter()
                    if pause > 0:
                        time.sleep(pause)
                queue.put((k, fr, time.perf_counter()))
        except BaseException as exc:  # re-raised on the caller's thread
            failure.append(exc)
        finally:
            queue.close()

    producer = threading.Thread(target=produce, name="frame-reader", daemon=True)
    producer.start()
    rows: list[SweepRow] = []
    grid = None
    while True:
        item = queue.get()
        if item is None:
            break
        k, fr, t_put = item
        latency = time.perf_counter() - t_put
        if consumer_delay:
            time.sleep(consumer_delay)
        t0 = time.perf_counter()
        tree.insert(fr.points, worker_count)
        t1 = time.perf_counter()
        grid = grid_new(gcfg)
        project_octree(tree, grid, worker_count)
        t2 = time.perf_counter()
        if mask_outside:
            mask_outside_workspace(grid, workspace)
        row = SweepRow(k, fr.timestamp, len(fr.points), 1e3 * (t1 - t0), 1e3 * (t2 - t1),
                       grid.occupied_count(), 1e3 * latency)
        if plan is not None:
            res = astar(grid, PlanRequest(tuple(plan[0]), tuple(plan[1])))
            row.plan_success, row.path_len_m = res.success, res.length
            row.plan_ms = 1e3 * res.wall_time
        rows.append(row)
    producer.join()
    if failure:
        raise failure[0]
    build = np.array([r.build_ms for r in rows]) if rows else np.zeros(1)
    proj = np.array([r.project_ms for r in rows]) if rows else np.zeros(1)
    timings = {"build_ms_mean": float(build.mean()), "build_ms_std": float(build.std()),
               "project_ms_mean": float(proj.mean()), "project_ms_std": float(proj.std())}
    return ReplayResult(rows, grid, tree, queue.produced, queue.consumed, queue.dropped,
                        queue.max_in_flight, capacity, timings)
