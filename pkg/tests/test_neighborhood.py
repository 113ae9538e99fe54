import numpy as np
import pytest

from pointdet import neighborhood
from pointdet.neighborhood import SpatialIndex, ball_query
from pointdet.sampling import PointCloud


def brute_ball_query(coords, centers, radius, nquery):
    m = len(centers)
    idxs = np.zeros((m, nquery), dtype=np.int64)
    valid = np.zeros((m, nquery), dtype=bool)
    empty = np.zeros(m, dtype=bool)
    for i, c in enumerate(centers):
        d2 = np.sum((coords - c) ** 2, axis=1)
        hit = np.flatnonzero(d2 <= radius * radius)
        if len(hit) == 0:
            idxs[i, :] = np.argmin(d2)
            empty[i] = True
            continue
        order = hit[np.lexsort((hit, d2[hit]))][:nquery]
        idxs[i, : len(order)] = order
        valid[i, : len(order)] = True
        if len(order) < nquery:
            idxs[i, len(order):] = order[0]
    return idxs, valid, empty


def test_ball_query_rejects_bad_args():
    cloud = PointCloud(np.zeros((4, 3)))
    with pytest.raises(ValueError):
        ball_query(cloud, np.zeros((1, 3)), -1.0, 4)
    with pytest.raises(ValueError):
        ball_query(cloud, np.zeros((1, 3)), 1.0, 0)


def test_ball_query_basic_ordering():
    coords = np.array([[0, 0, 0], [0.5, 0, 0], [0.2, 0, 0], [5, 5, 5.0]])
    cloud = PointCloud(coords)
    out = ball_query(cloud, np.zeros((1, 3)), 1.0, 3)
    np.testing.assert_array_equal(out.indices[0], [0, 2, 1])
    assert out.valid.all()
    assert not out.empty[0]


def test_ball_query_padding_repeats_nearest():
    coords = np.array([[0, 0, 0], [0.5, 0, 0], [9, 9, 9.0]])
    cloud = PointCloud(coords)
    out = ball_query(cloud, np.zeros((1, 3)), 1.0, 4)
    np.testing.assert_array_equal(out.indices[0], [0, 1, 0, 0])
    np.testing.assert_array_equal(out.valid[0], [True, True, False, False])


def test_ball_query_empty_group_falls_back_to_nearest():
    coords = np.array([[5, 0, 0], [7, 0, 0.0]])
    cloud = PointCloud(coords)
    out = ball_query(cloud, np.zeros((1, 3)), 1.0, 2)
    assert out.empty[0]
    np.testing.assert_array_equal(out.indices[0], [0, 0])
    assert not out.valid.any()


def test_ball_query_tie_break_prefers_lower_index():
    # Two points at exactly the same distance from the center.
    coords = np.array([[1, 0, 0], [-1, 0, 0], [0.2, 0, 0.0]])
    cloud = PointCloud(coords)
    out = ball_query(cloud, np.zeros((1, 3)), 1.5, 2)
    np.testing.assert_array_equal(out.indices[0], [2, 0])


@pytest.mark.parametrize("use_grid", [False, True])
def test_ball_query_matches_brute_force(use_grid):
    r = np.random.default_rng(0)
    for _ in range(60):
        n = int(r.integers(3, 250))
        m = int(r.integers(1, 12))
        radius = float(r.uniform(0.3, 2.0))
        nq = int(r.integers(1, 10))
        coords = r.uniform(-4, 4, size=(n, 3))
        centers = r.uniform(-4, 4, size=(m, 3))
        # Quantize to force exact distance ties sometimes.
        coords = np.round(coords, 1)
        cloud = PointCloud(coords)
        index = SpatialIndex(coords, radius) if use_grid else None
        got = ball_query(cloud, centers, radius, nq, index=index)
        ei, ev, ee = brute_ball_query(coords, centers, radius, nq)
        np.testing.assert_array_equal(got.indices, ei)
        np.testing.assert_array_equal(got.valid, ev)
        np.testing.assert_array_equal(got.empty, ee)


def test_grid_and_dense_paths_agree_on_large_input():
    r = np.random.default_rng(1)
    coords = r.uniform(-10, 10, size=(3000, 3))
    centers = r.uniform(-10, 10, size=(64, 3))
    cloud = PointCloud(coords)
    dense = ball_query(cloud, centers, 0.9, 8)
    grid = ball_query(cloud, centers, 0.9, 8, index=SpatialIndex(coords, 0.9))
    np.testing.assert_array_equal(dense.indices, grid.indices)
    np.testing.assert_array_equal(dense.valid, grid.valid)
    np.testing.assert_array_equal(dense.empty, grid.empty)


def test_spatial_index_buckets_cover_all_points():
    r = np.random.default_rng(2)
    coords = r.uniform(-5, 5, size=(500, 3))
    index = SpatialIndex(coords, 0.7)
    total = np.concatenate(list(index.buckets.values()))
    np.testing.assert_array_equal(np.sort(total), np.arange(500))


def test_group_and_canonicalize_relative_coords():
    coords = np.array([[1.0, 1.0, 1.0], [2.0, 1.0, 1.0]])
    feats = np.array([[10.0], [20.0]])
    cloud = PointCloud(coords, features=feats)
    groups = ball_query(cloud, np.array([[1.0, 1.0, 1.0]]), 2.0, 2)
    block = neighborhood.group_and_canonicalize(cloud, np.array([[1.0, 1.0, 1.0]]), groups)
    assert block.shape == (1, 2, 4)
    np.testing.assert_allclose(block[0, 0], [0, 0, 0, 10.0])
    np.testing.assert_allclose(block[0, 1], [1, 0, 0, 20.0])


def test_multi_scale_group_validates_radii():
    cloud = PointCloud(np.zeros((4, 3)))
    with pytest.raises(ValueError):
        neighborhood.multi_scale_group(cloud, np.zeros((1, 3)), [1.0, 0.5], [4, 4])
    with pytest.raises(ValueError):
        neighborhood.multi_scale_group(cloud, np.zeros((1, 3)), [1.0], [4, 4])


def test_multi_scale_group_shapes():
    r = np.random.default_rng(3)
    coords = r.uniform(-2, 2, size=(100, 3))
    cloud = PointCloud(coords, features=r.uniform(size=(100, 2)))
    blocks = neighborhood.multi_scale_group(cloud, coords[:10], [0.5, 1.5], [4, 8])
    assert blocks[0].shape == (10, 4, 5)
    assert blocks[1].shape == (10, 8, 5)
