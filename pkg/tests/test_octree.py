import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from octogrid.geometry import Aabb, compute_octree_config
from octogrid.octree import (Octree, RegionState, build_parallel, build_serial, claim_child,
                             insert_point, region_state, region_state_from_bits, set_safe_state,
                             tree_fingerprint)
from octogrid.verify import rescan_states

WS = Aabb((-5.0, -5.0, -5.0), (5.0, 5.0, 5.0))


def cloud(n, seed=0, ws=WS):
    return np.random.default_rng(seed).uniform(ws.min, ws.max, (n, 3))


def unit_leaf_tree(ratio=0.5):
    # depth 0: the root is a single leaf of size 1 centred at the origin
    cfg = compute_octree_config(Aabb((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5)), 1.0, ratio)
    assert cfg.depth == 0
    return Octree(cfg)


def test_empty_build_is_root_only():
    cfg = compute_octree_config(WS, 0.5)
    tree = build_parallel(np.empty((0, 3)), cfg, 4)
    assert len(tree.leaf_ids()) == 0
    assert tree.node_ids().tolist() == [0]
    assert tree_fingerprint(tree) == tree_fingerprint(build_serial([], cfg))


@pytest.mark.parametrize("workers", [1, 2, 4, 8])
def test_parallel_matches_serial_10k(workers):
    cfg = compute_octree_config(WS, 0.5)
    pts = cloud(10_000, seed=workers)
    par = build_parallel(pts, cfg, workers, chunk_size=257)
    assert tree_fingerprint(par) == tree_fingerprint(build_serial(pts, cfg))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 3000), st.sampled_from([0.3, 0.5, 1.0, 2.5]),
       st.sampled_from([1, 2, 3, 8]), st.integers(1, 600), st.sampled_from([2, 3]))
def test_parallel_matches_serial_property(seed, n, r, workers, chunk, dim):
    cfg = compute_octree_config(WS, r, dimensionality=dim)
    pts = cloud(n, seed)
    if dim == 2:
        pts = pts[:, :2]
    a = build_parallel(pts, cfg, workers, chunk_size=chunk)
    b = build_serial(pts, cfg)
    assert tree_fingerprint(a) == tree_fingerprint(b)


def test_fingerprint_ignores_input_order_but_sees_state_flips():
    cfg = compute_octree_config(WS, 0.5)
    pts = cloud(5000, 7)
    a = build_parallel(pts, cfg, 3)
    b = build_parallel(pts[::-1].copy(), cfg, 3)
    assert tree_fingerprint(a) == tree_fingerprint(a)
    assert tree_fingerprint(a) == tree_fingerprint(b)
    b._states[b.leaf_ids()[5]] ^= np.uint16(1 << 9)
    assert tree_fingerprint(a) != tree_fingerprint(b)


def test_no_lost_points_and_rejections_counted():
    cfg = compute_octree_config(WS, 0.5)
    inside = cloud(2000, 1)
    outside = np.array([[100.0, 0, 0], [0, -8.5, 0], [0, 0, 5.0 + cfg.root_size]])
    tree = build_parallel(np.vstack([inside, outside]), cfg, 4)
    assert tree.rejected_count == 3
    _, offsets, pts = tree.leaf_point_groups()
    assert offsets[-1] == 2000 == tree.point_count
    np.testing.assert_array_equal(np.sort(pts, axis=0), np.sort(inside, axis=0))


def test_points_stay_inside_their_leaf():
    cfg = compute_octree_config(WS, 0.5)
    tree = build_parallel(cloud(3000, 2), cfg, 2)
    for leaf in tree.leaves()[:200]:
        c = np.array(leaf.center)
        p = leaf.points
        assert np.all(p >= c - 0.25) and np.all(p < c + 0.25)
        assert leaf.node_size == 0.5 and leaf.is_leaf


def test_state_soundness_against_rescan():
    for ratio in (0.1, 0.5, 0.95):
        cfg = compute_octree_config(WS, 1.0, ratio)
        tree = build_parallel(cloud(20_000, 3), cfg, 4)
        leaves, expect = rescan_states(tree)
        np.testing.assert_array_equal(tree._states[leaves], expect)


def test_lower_ratio_only_adds_unsafe_bits():
    pts = cloud(20_000, 4)
    trees = [build_serial(pts, compute_octree_config(WS, 1.0, r)) for r in (0.9, 0.5, 0.2)]
    for hi, lo in zip(trees, trees[1:]):
        assert np.array_equal(hi.leaf_keys(), lo.leaf_keys())
        u_hi = hi.leaf_states() & 0xFF
        u_lo = lo.leaf_states() & 0xFF
        assert np.all((u_hi & ~u_lo) == 0)


def test_single_point_near_root_center():
    cfg = compute_octree_config(WS, 0.5)
    eps = 1e-3
    tree = build_parallel([[eps, eps, eps]], cfg, 1)
    leaves = tree.leaves()
    assert len(leaves) == 1
    assert len(tree.node_ids()) == cfg.depth + 1
    bits = leaves[0].state
    # the point sits in the low corner of its leaf: far from the leaf centre
    assert bin(bits).count("1") == 1


def test_set_safe_state_examples():
    tree = unit_leaf_tree()
    leaf = tree.root
    set_safe_state((0.1, 0.1, 0.1), leaf, 0.5)
    assert leaf.state == 1 << 15
    set_safe_state((0.4, 0.1, 0.1), leaf, 0.5)
    assert leaf.state == (1 << 15) | (1 << 7)
    assert region_state(leaf, 7) == RegionState.UNSAFE


def test_threshold_boundary_is_unsafe():
    tree = unit_leaf_tree()
    set_safe_state((0.25, 0.0, 0.0), tree.root, 0.5)
    assert tree.root.state == 1 << 7
    tree2 = unit_leaf_tree()
    set_safe_state((np.nextafter(0.25, 0), 0.0, 0.0), tree2.root, 0.5)
    assert tree2.root.state == 1 << 15


def test_region_state_decoding():
    assert region_state_from_bits(0, 3) == RegionState.CLEAR
    assert region_state_from_bits((1 << 3) | (1 << 11), 3) == RegionState.UNSAFE
    assert region_state_from_bits(1 << 11, 3) == RegionState.SAFE
    assert region_state_from_bits(1 << 5, 1, dimensionality=2) == RegionState.SAFE


def test_depth_zero_insert_goes_to_root():
    tree = unit_leaf_tree()
    insert_point((0.2, -0.2, 0.0), tree.root)
    assert tree.root.is_leaf
    np.testing.assert_array_equal(tree.root.points, [[0.2, -0.2, 0.0]])


def test_splitting_plane_goes_to_upper_child():
    cfg = compute_octree_config(WS, 2.5)
    tree = build_serial([[0.0, 0.0, 0.0]], cfg)
    child = tree.root.children[7]
    assert child is not None and all(c > 0 for c in child.center)


def test_insert_point_below_subtree():
    cfg = compute_octree_config(WS, 0.5)
    tree = build_serial(cloud(100, 5), cfg)
    node = tree.root.children[7] or tree.root.children[0]
    before = tree.point_count
    p = np.array(node.center) + 0.01
    insert_point(p, node)
    assert tree.point_count == before + 1
    ref = build_serial(np.vstack([cloud(100, 5), p]), cfg)
    assert tree_fingerprint(tree) == tree_fingerprint(ref)


def test_incremental_insert_equals_batch():
    cfg = compute_octree_config(WS, 0.5)
    pts = cloud(9000, 6)
    tree = Octree(cfg)
    for part in np.array_split(pts, 7):
        tree.insert(part, 3)
    assert tree_fingerprint(tree) == tree_fingerprint(build_serial(pts, cfg))


def test_duplicates_are_kept():
    cfg = compute_octree_config(WS, 0.5)
    tree = build_parallel(np.tile([[1.0, 1.0, 1.0]], (50, 1)), cfg, 4, chunk_size=3)
    assert len(tree.leaves()[0].points) == 50


def test_rejects_nan_points():
    cfg = compute_octree_config(WS, 0.5)
    with pytest.raises(ValueError):
        build_parallel([[0.0, np.nan, 0.0]], cfg)


def test_claim_child_race_has_one_winner():
    # many threads race to publish different nodes into one empty slot
    for trial in range(50):
        children = np.full(8, -1, np.int32)
        start = threading.Barrier(8)
        results = [None] * 8

        def racer(k):
            start.wait()
            results[k] = claim_child(children, 3, 100 + k)

        threads = [threading.Thread(target=racer, args=(k,)) for k in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        winners = [k for k, (child, won) in enumerate(results) if won]
        assert len(winners) == 1
        assert children[3] == 100 + winners[0]
        assert all(child == 100 + winners[0] for child, _ in results)


def test_contended_children_keep_all_points():
    # every point heads into the same handful of absent subtrees at once
    cfg = compute_octree_config(WS, 0.05)
    rng = np.random.default_rng(8)
    pts = rng.normal(0.0, 0.02, (40_000, 3))
    par = build_parallel(pts, cfg, 8, chunk_size=1)
    ser = build_serial(pts, cfg)
    assert par.point_count == 40_000
    assert tree_fingerprint(par) == tree_fingerprint(ser)
    assert par.lost_races >= 0


def test_point_free_tree_matches_states():
    cfg = compute_octree_config(WS, 0.5)
    pts = cloud(5000, 9)
    a = build_parallel(pts, cfg, 4, store_points=False)
    b = build_serial(pts, cfg)
    np.testing.assert_array_equal(a.leaf_keys(), b.leaf_keys())
    np.testing.assert_array_equal(a.leaf_states(), b.leaf_states())
    assert a._points.shape[0] == 0
