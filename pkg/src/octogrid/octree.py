"""Concurrent octree with per-leaf point storage and region safety flags.

Nodes live in a preallocated pool of flat numpy arrays. Worker threads run
a ``nogil`` numba kernel that descends from the root for each point. An
empty child slot is claimed with compare-and-swap; the thread that loses
the race keeps its freshly initialised node as a spare for its next
allocation instead of publishing it. Leaf point buffers are lock-free
stacks (atomic exchange on the list head) and leaf safety words are
updated with atomic fetch-or.

Leaf state layout (``R`` = 8 regions in 3D, 4 in 2D): bit ``i`` means
region ``i`` has seen a point at or beyond the threshold (unsafe), bit
``i + R`` means it has seen a point strictly inside the threshold (safe).
"""

from __future__ import annotations

import hashlib
import time
from enum import IntEnum
from typing import Optional

import numpy as np
from numba import njit

from ._atomics import cas, exchange, fetch_add, fetch_or
from ._parallel import default_workers, run_workers
from .geometry import OctreeConfig

DEFAULT_CHUNK = 4096


class RegionState(IntEnum):
    CLEAR = 0
    SAFE = 1
    UNSAFE = 2


def region_state_from_bits(bits: int, region_idx: int, dimensionality: int = 3) -> RegionState:
    regions = 1 << dimensionality
    if not 0 <= region_idx < regions:
        raise ValueError(f"region index {region_idx} out of range for {dimensionality}D")
    if bits >> region_idx & 1:
        return RegionState.UNSAFE
    if bits >> (region_idx + regions) & 1:
        return RegionState.SAFE
    return RegionState.CLEAR


# --------------------------------------------------------------------------
# numba kernels


@njit(inline="always")
def _descend(px, py, pz, cx, cy, cz, half, dim):
    q = 0.5 * half
    idx = 0
    if px >= cx:
        idx |= 1
        cx += q
    else:
        cx -= q
    if py >= cy:
        idx |= 2
        cy += q
    else:
        cy -= q
    if dim == 3:
        if pz >= cz:
            idx |= 4
            cz += q
        else:
            cz -= q
    return idx, cx, cy, cz, q


@njit(inline="always")
def _state_mask(px, py, pz, cx, cy, cz, half, ratio, dim):
    idx = 0
    if px >= cx:
        idx |= 1
    if py >= cy:
        idx |= 2
    d = max(abs(px - cx), abs(py - cy))
    if dim == 3:
        if pz >= cz:
            idx |= 4
        d = max(d, abs(pz - cz))
    if d >= half * ratio:
        return np.uint16(1 << idx)
    return np.uint16(1 << (idx + (1 << dim)))


@njit(inline="always")
def _outside(px, py, pz, cx, cy, cz, half, dim):
    if px < cx - half or px >= cx + half or py < cy - half or py >= cy + half:
        return True
    if dim == 3 and (pz < cz - half or pz >= cz + half):
        return True
    return False


@njit(nogil=True, cache=True)
def claim_child(children, slot, new):
    """Publish ``new`` into an empty slot; returns ``(child, won)``."""
    prev = cas(children, slot, np.int32(-1), np.int32(new))
    if prev == -1:
        return np.int64(new), True
    return np.int64(prev), False


@njit(nogil=True, cache=True)
def _insert_worker(pts, lo, hi, chunk, chunk_ctr, start, start_c, start_half, levels_left,
                   children, centers, levels, states, heads, nxt, node_ctr,
                   dim, ratio, store, out_rejected, out_lost, wid):
    n_children = 1 << dim
    spare = -1
    rejected = 0
    lost = 0
    start_level = levels[start]
    n_chunks = (hi - lo + chunk - 1) // chunk
    while True:
        c = fetch_add(chunk_ctr, 0, 1)
        if c >= n_chunks:
            break
        s = lo + c * chunk
        e = min(hi, s + chunk)
        for i in range(s, e):
            px = pts[i, 0]
            py = pts[i, 1]
            pz = pts[i, 2]
            if _outside(px, py, pz, start_c[0], start_c[1], start_c[2], start_half, dim):
                rejected += 1
                continue
            node = start
            cx = start_c[0]
            cy = start_c[1]
            cz = start_c[2]
            half = start_half
            for lvl in range(levels_left):
                idx, cx, cy, cz, half = _descend(px, py, pz, cx, cy, cz, half, dim)
                slot = node * n_children + idx
                child = np.int64(children[slot])
                if child < 0:
                    if spare < 0:
                        spare = fetch_add(node_ctr, 0, 1)
                    centers[spare, 0] = cx
                    centers[spare, 1] = cy
                    centers[spare, 2] = cz
                    levels[spare] = start_level + lvl + 1
                    child, won = claim_child(children, slot, spare)
                    if won:
                        spare = -1
                    else:
                        lost += 1
                node = child
            if store:
                nxt[i] = exchange(heads, node, i)
            fetch_or(states, node, _state_mask(px, py, pz, cx, cy, cz, half, ratio, dim))
    out_rejected[wid] = rejected
    out_lost[wid] = lost


@njit(cache=True)
def _insert_serial(pts, lo, hi, root_c, root_half, depth, children, centers, levels, states,
                   heads, nxt, node_count, dim, ratio, store):
    n_children = 1 << dim
    n = node_count[0]
    rejected = 0
    for i in range(lo, hi):
        px = pts[i, 0]
        py = pts[i, 1]
        pz = pts[i, 2]
        if _outside(px, py, pz, root_c[0], root_c[1], root_c[2], root_half, dim):
            rejected += 1
            continue
        node = 0
        cx = root_c[0]
        cy = root_c[1]
        cz = root_c[2]
        half = root_half
        for lvl in range(depth):
            idx, cx, cy, cz, half = _descend(px, py, pz, cx, cy, cz, half, dim)
            slot = node * n_children + idx
            child = children[slot]
            if child < 0:
                child = n
                n += 1
                centers[child, 0] = cx
                centers[child, 1] = cy
                centers[child, 2] = cz
                levels[child] = lvl + 1
                children[slot] = child
            node = child
        if store:
            nxt[i] = heads[node]
            heads[node] = i
        states[node] |= _state_mask(px, py, pz, cx, cy, cz, half, ratio, dim)
    node_count[0] = n
    return rejected


@njit(cache=True)
def _collect(children, levels, depth, dim, n_nodes, leaves_only):
    n_children = 1 << dim
    out = np.empty(max(n_nodes, 1), np.int64)
    stack = np.empty(depth * n_children + 2, np.int64)
    cnt = 0
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if levels[node] == depth:
            out[cnt] = node
            cnt += 1
            continue
        if not leaves_only:
            out[cnt] = node
            cnt += 1
        for c in range(n_children - 1, -1, -1):
            ch = children[node * n_children + c]
            if ch >= 0:
                stack[sp] = ch
                sp += 1
    return out[:cnt]


@njit(cache=True)
def _gather_points(leaves, heads, nxt):
    counts = np.zeros(leaves.shape[0] + 1, np.int64)
    for li in range(leaves.shape[0]):
        k = heads[leaves[li]]
        while k >= 0:
            counts[li + 1] += 1
            k = nxt[k]
    offsets = np.cumsum(counts)
    idx = np.empty(offsets[-1], np.int64)
    for li in range(leaves.shape[0]):
        pos = offsets[li]
        k = heads[leaves[li]]
        while k >= 0:
            idx[pos] = k
            pos += 1
            k = nxt[k]
    return offsets, idx


@njit(cache=True)
def _lex_less(pts, a, b):
    for ax in range(3):
        if pts[a, ax] != pts[b, ax]:
            return pts[a, ax] < pts[b, ax]
    return False


@njit(cache=True)
def _sorted_within_groups(offsets, pts):
    """Permutation sorting points lexicographically inside each group."""
    out = np.empty(pts.shape[0], np.int64)
    for g in range(offsets.shape[0] - 1):
        lo = offsets[g]
        hi = offsets[g + 1]
        order = np.argsort(pts[lo:hi, 0], kind="mergesort") + lo
        # equal x values are rare; settle them by insertion sort on (y, z)
        for i in range(1, order.shape[0]):
            cur = order[i]
            j = i - 1
            while j >= 0 and _lex_less(pts, cur, order[j]):
                order[j + 1] = order[j]
                j -= 1
            order[j + 1] = cur
        out[lo:hi] = order
    return out


@njit(cache=True)
def _or_state(states, node, mask):
    fetch_or(states, node, mask)


# --------------------------------------------------------------------------
# Python API


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return np.empty((0, 3), np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise ValueError(f"points must have shape (n, 3) or (n, 2), got {pts.shape}")
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain NaN or infinite coordinates")
    return np.ascontiguousarray(pts)


class OctreeNode:
    """Read-mostly view of one pooled node."""

    __slots__ = ("tree", "id")

    def __init__(self, tree: "Octree", node_id: int):
        self.tree = tree
        self.id = int(node_id)

    def __repr__(self):
        return f"OctreeNode(id={self.id}, level={self.level}, center={self.center})"

    def __eq__(self, other):
        return isinstance(other, OctreeNode) and other.tree is self.tree and other.id == self.id

    def __hash__(self):
        return hash((id(self.tree), self.id))

    @property
    def level(self) -> int:
        return int(self.tree._levels[self.id])

    @property
    def node_size(self) -> float:
        return self.tree.config.root_size / 2.0**self.level

    @property
    def center(self) -> tuple[float, float, float]:
        return tuple(float(c) for c in self.tree._centers[self.id])  # type: ignore[return-value]

    @property
    def is_leaf(self) -> bool:
        return self.level == self.tree.config.depth

    @property
    def children(self) -> list[Optional["OctreeNode"]]:
        b = self.tree.config.regions
        slots = self.tree._children[self.id * b:(self.id + 1) * b]
        return [OctreeNode(self.tree, s) if s >= 0 else None for s in slots]

    @property
    def state(self) -> int:
        return int(self.tree._states[self.id])

    @property
    def points(self) -> np.ndarray:
        offsets, idx = _gather_points(np.array([self.id], np.int64), self.tree._heads, self.tree._next)
        return self.tree._points[idx]

    def region_state(self, region_idx: int) -> RegionState:
        return region_state(self, region_idx)


class Octree:
    """Pooled octree (quadtree in 2D) bound to one :class:`OctreeConfig`."""

    def __init__(self, config: OctreeConfig, *, store_points: bool = True,
                 node_capacity: int = 64, point_capacity: int = 0):
        self.config = config
        self.store_points = store_points
        self.rejected_count = 0
        self.lost_races = 0
        b = config.regions
        cap = max(int(node_capacity), 1)
        self._children = np.full(cap * b, -1, np.int32)
        self._centers = np.zeros((cap, 3), np.float64)
        self._levels = np.zeros(cap, np.int8)
        self._states = np.zeros(cap, np.uint16)
        self._heads = np.full(cap, -1, np.int64)
        self._node_ctr = np.ones(1, np.int64)
        self._centers[0] = config.root_center
        pcap = max(int(point_capacity), 0)
        self._points = np.empty((pcap, 3), np.float64)
        self._next = np.full(pcap, -1, np.int64)
        self._n_points = 0
        self._n_inserted = 0
        self._leaf_cache: Optional[np.ndarray] = None

    # -- capacity ---------------------------------------------------------

    def _node_bound(self, m: int, workers: int) -> int:
        b = self.config.regions
        bound = 0
        for lvl in range(1, self.config.depth + 1):
            bound += min(m, b**lvl)
        return bound + workers + 1

    def _reserve(self, m: int, workers: int) -> None:
        need = int(self._node_ctr[0]) + self._node_bound(m, workers)
        cap = self._states.shape[0]
        if need > cap:
            new = max(need, 2 * cap)
            b = self.config.regions
            children = np.full(new * b, -1, np.int32)
            children[:cap * b] = self._children
            self._children = children
            self._centers = np.concatenate([self._centers, np.zeros((new - cap, 3))])
            self._levels = np.concatenate([self._levels, np.zeros(new - cap, np.int8)])
            self._states = np.concatenate([self._states, np.zeros(new - cap, np.uint16)])
            self._heads = np.concatenate([self._heads, np.full(new - cap, -1, np.int64)])
        if not self.store_points:
            return
        pneed = self._n_points + m
        pcap = self._points.shape[0]
        if pneed > pcap:
            new = max(pneed, 2 * pcap)
            points = np.empty((new, 3), np.float64)
            points[:self._n_points] = self._points[:self._n_points]
            self._points = points
            nxt = np.full(new, -1, np.int64)
            nxt[:self._n_points] = self._next[:self._n_points]
            self._next = nxt

    def _stage(self, points, workers: int) -> tuple[np.ndarray, int, int]:
        """Returns ``(buffer, lo, hi)``; trees without point storage use a transient buffer."""
        pts = _as_points(points)
        m = len(pts)
        self._leaf_cache = None
        self._n_inserted += m
        self._reserve(m, workers)
        if not self.store_points:
            return pts, 0, m
        lo = self._n_points
        self._points[lo:lo + m] = pts
        self._n_points += m
        return self._points, lo, lo + m

    # -- insertion ----------------------------------------------------------

    def insert(self, points, worker_count: Optional[int] = None,
               chunk_size: int = DEFAULT_CHUNK) -> None:
        """Concurrently insert a batch of points (incremental; the tree persists)."""
        workers = default_workers() if worker_count is None else int(worker_count)
        if workers < 1:
            raise ValueError(f"worker_count must be >= 1, got {worker_count}")
        if chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
        buf, lo, hi = self._stage(points, workers)
        if hi == lo:
            return
        self._run_insert(buf, lo, hi, 0, workers, chunk_size)

    def _run_insert(self, buf, lo, hi, start, workers, chunk_size):
        cfg = self.config
        node = OctreeNode(self, start)
        rejected = np.zeros(workers, np.int64)
        lost = np.zeros(workers, np.int64)
        run_workers(_insert_worker, workers, buf, lo, hi, chunk_size,
                    np.zeros(1, np.int64), start, np.array(node.center),
                    0.5 * node.node_size, cfg.depth - node.level,
                    self._children, self._centers, self._levels, self._states, self._heads,
                    self._next, self._node_ctr, cfg.dimensionality, cfg.ratio,
                    self.store_points, rejected, lost)
        self.rejected_count += int(rejected.sum())
        self.lost_races += int(lost.sum())

    def insert_serial(self, points) -> None:
        """Single-threaded insertion with plain loads and stores."""
        buf, lo, hi = self._stage(points, 1)
        if hi == lo:
            return
        cfg = self.config
        self.rejected_count += int(_insert_serial(
            buf, lo, hi, np.array(cfg.root_center), 0.5 * cfg.root_size, cfg.depth,
            self._children, self._centers, self._levels, self._states, self._heads, self._next,
            self._node_ctr, cfg.dimensionality, cfg.ratio, self.store_points))

    def insert_point(self, p, node: Optional[OctreeNode] = None) -> None:
        """Insert one point below ``node`` (default root) through the lock-free path."""
        start = 0 if node is None else node.id
        if node is not None and node.tree is not self:
            raise ValueError("node belongs to a different tree")
        buf, lo, hi = self._stage(np.asarray(p, dtype=np.float64).reshape(1, -1), 1)
        self._run_insert(buf, lo, hi, start, 1, 1)

    # -- queries --------------------------------------------------------------

    @property
    def root(self) -> OctreeNode:
        return OctreeNode(self, 0)

    @property
    def point_count(self) -> int:
        """Points stored in leaves (input count minus rejected)."""
        return self._n_inserted - self.rejected_count

    def node(self, node_id: int) -> OctreeNode:
        return OctreeNode(self, node_id)

    def leaf_ids(self) -> np.ndarray:
        """Ids of all materialised leaves in depth-first child order."""
        if self._leaf_cache is None:
            cfg = self.config
            self._leaf_cache = _collect(self._children, self._levels, cfg.depth,
                                        cfg.dimensionality, int(self._node_ctr[0]), True)
        return self._leaf_cache

    def node_ids(self) -> np.ndarray:
        cfg = self.config
        return _collect(self._children, self._levels, cfg.depth, cfg.dimensionality,
                        int(self._node_ctr[0]), False)

    def leaves(self) -> list[OctreeNode]:
        return [OctreeNode(self, i) for i in self.leaf_ids()]

    def leaf_centers(self) -> np.ndarray:
        return self._centers[self.leaf_ids()]

    def leaf_states(self) -> np.ndarray:
        return self._states[self.leaf_ids()]

    def leaf_keys(self, leaf_ids: Optional[np.ndarray] = None) -> np.ndarray:
        """Integer lattice coordinates of leaves, counted from the root's low corner."""
        cfg = self.config
        ids = self.leaf_ids() if leaf_ids is None else leaf_ids
        low = np.asarray(cfg.root_center) - 0.5 * cfg.root_size
        keys = np.rint((self._centers[ids] - low) / cfg.leaf_size - 0.5).astype(np.int64)
        if cfg.dimensionality == 2:
            keys[:, 2] = 0
        return keys

    def leaf_point_groups(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(leaf_ids, offsets, points)``: points of leaf ``i`` are ``points[offsets[i]:offsets[i+1]]``."""
        leaves = self.leaf_ids()
        offsets, idx = _gather_points(leaves, self._heads, self._next)
        return leaves, offsets, self._points[idx]


def build_parallel(points, config: OctreeConfig, worker_count: Optional[int] = None, *,
                   chunk_size: int = DEFAULT_CHUNK, store_points: bool = True) -> Octree:
    """Build an octree by inserting every point concurrently from ``worker_count`` threads."""
    tree = Octree(config, store_points=store_points)
    tree.insert(points, worker_count, chunk_size)
    return tree


def build_serial(points, config: OctreeConfig, *, store_points: bool = True) -> Octree:
    """Reference single-threaded build; same contract as :func:`build_parallel`."""
    tree = Octree(config, store_points=store_points)
    tree.insert_serial(points)
    return tree


def insert_point(p, node: OctreeNode) -> None:
    node.tree.insert_point(p, node)


def set_safe_state(p, leaf: OctreeNode, ratio: float) -> None:
    """OR the unsafe or safe flag for ``p``'s region into ``leaf``'s state word."""
    if not leaf.is_leaf:
        raise ValueError("set_safe_state needs a leaf node")
    dim = leaf.tree.config.dimensionality
    px, py, pz = (float(v) for v in _as_points(p)[0])
    cx, cy, cz = leaf.center
    mask = _state_mask(px, py, pz, cx, cy, cz, 0.5 * leaf.node_size, ratio, dim)
    _or_state(leaf.tree._states, leaf.id, np.uint16(mask))


def region_state(leaf: OctreeNode, region_idx: int) -> RegionState:
    return region_state_from_bits(leaf.state, region_idx, leaf.tree.config.dimensionality)


def tree_fingerprint(tree: Octree) -> str:
    """SHA-256 over leaf keys, leaf state words and per-leaf sorted points.

    Leaves are hashed in depth-first octant order, which depends only on the
    set of materialised leaves, so trees built in different ways compare equal
    exactly when their leaves, states and point multisets agree.
    """
    leaves, offsets, pts = tree.leaf_point_groups()
    keys = tree.leaf_keys(leaves)
    cfg = tree.config
    h = hashlib.sha256()
    h.update(np.array([cfg.dimensionality, cfg.depth], "<i8").tobytes())
    h.update(np.array([cfg.leaf_size, cfg.ratio], "<f8").tobytes())
    h.update(keys.astype("<i8").tobytes())
    h.update(tree._states[leaves].astype("<u2").tobytes())
    h.update(np.diff(offsets).astype("<i8").tobytes())
    h.update(pts[_sorted_within_groups(offsets, pts)].astype("<f8").tobytes())
    return h.hexdigest()


def timed_build(points, config: OctreeConfig, worker_count: Optional[int] = None,
                serial: bool = False, **kwargs) -> tuple[Octree, float]:
    """Build and return ``(tree, wall seconds)`` measured with a monotonic clock."""
    pts = _as_points(points)
    t0 = time.perf_counter()
    tree = build_serial(pts, config, **kwargs) if serial else build_parallel(
        pts, config, worker_count, **kwargs)
    return tree, time.perf_counter() - t0
