"""Spatial index queries checked against brute-force linear scans."""

import numpy as np
import pytest

from voxloc.errors import DataError
from voxloc.spatial import SpatialIndex


def _brute_knn(points, q, k):
    """All (index, distance) sorted by (distance, index), truncated to k."""
    dist = np.linalg.norm(points - q, axis=1)
    order = np.lexsort((np.arange(len(points)), dist))
    return [(int(i), float(dist[i])) for i in order[:k]]


def _brute_radius(points, q, r):
    dist = np.linalg.norm(points - q, axis=1)
    inside = np.flatnonzero(dist <= r)
    order = inside[np.lexsort((inside, dist[inside]))]
    return [(int(i), float(dist[i])) for i in order]


def test_empty_index():
    index = SpatialIndex(np.empty((0, 3)))
    assert index.count == 0
    idx, dist = index.k_nearest(np.zeros(3), 4)
    assert len(idx) == 0
    idx, dist = index.radius_query(np.zeros(3), 1.0)
    assert len(idx) == 0


def test_single_point_is_its_own_neighbor():
    index = SpatialIndex(np.array([[1.0, 2.0, 3.0]]))
    idx, dist = index.k_nearest(np.array([1.0, 2.0, 3.0]), 1)
    assert idx[0] == 0
    assert dist[0] == 0.0


def test_k_larger_than_set_returns_all(rng):
    pts = rng.normal(size=(7, 3))
    index = SpatialIndex(pts)
    idx, _ = index.k_nearest(np.zeros(3), 50)
    assert sorted(idx) == list(range(7))


def test_k_nearest_matches_brute_force(rng):
    pts = rng.normal(scale=5.0, size=(2000, 3))
    index = SpatialIndex(pts)
    for _ in range(100):
        q = rng.normal(scale=5.0, size=3)
        got_idx, got_dist = index.k_nearest(q, 5)
        expected = _brute_knn(pts, q, 5)
        assert [int(i) for i in got_idx] == [e[0] for e in expected]
        np.testing.assert_allclose(got_dist, [e[1] for e in expected], rtol=1e-12)


def test_k_nearest_prefix_property(rng):
    pts = rng.normal(size=(300, 3))
    index = SpatialIndex(pts)
    q = rng.normal(size=3)
    i5, _ = index.k_nearest(q, 5)
    i6, _ = index.k_nearest(q, 6)
    assert list(i6[:5]) == list(i5)


def test_radius_query_matches_brute_force(rng):
    pts = rng.normal(scale=3.0, size=(2000, 3))
    index = SpatialIndex(pts)
    for _ in range(100):
        q = rng.normal(scale=3.0, size=3)
        r = rng.uniform(0.5, 4.0)
        got_idx, got_dist = index.radius_query(q, r)
        expected = _brute_radius(pts, q, r)
        assert [int(i) for i in got_idx] == [e[0] for e in expected]


def test_radius_boundary_is_inclusive():
    pts = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [2.0001, 0.0, 0.0]])
    index = SpatialIndex(pts)
    idx, _ = index.radius_query(np.zeros(3), 2.0)
    assert list(idx) == [0, 1]


def test_radius_saturation(rng):
    pts = rng.normal(size=(40, 3))
    index = SpatialIndex(pts)
    idx, _ = index.radius_query(np.zeros(3), 1e6)
    assert len(idx) == 40


def test_pairs_within_matches_brute_force(rng):
    pts = rng.normal(scale=2.0, size=(300, 3))
    index = SpatialIndex(pts)
    pairs, dist = index.pairs_within(1.5)
    expected = set()
    for i in range(len(pts)):
        d = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
        for j in np.flatnonzero(d <= 1.5):
            expected.add((i, int(i + 1 + j)))
    got = {(min(a, b), max(a, b)) for a, b in pairs}
    assert got == expected
    np.testing.assert_allclose(
        dist, np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1), rtol=1e-12
    )


def test_descriptor_space_nearest(rng):
    """The same index type serves 33-dimensional descriptor matching."""
    desc = rng.random(size=(50, 33))
    queries = rng.random(size=(8, 33))
    index = SpatialIndex(desc)
    nn, dist = index.nearest(queries)
    brute = np.linalg.norm(desc[None] - queries[:, None], axis=2)
    np.testing.assert_array_equal(nn, brute.argmin(axis=1))
    np.testing.assert_allclose(dist, brute.min(axis=1), rtol=1e-12)


def test_nearest_with_max_distance(rng):
    pts = np.array([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
    index = SpatialIndex(pts)
    nn, dist = index.nearest(np.array([[0.1, 0.0, 0.0], [50.0, 0.0, 0.0]]), max_distance=1.0)
    assert nn[0] == 0
    assert nn[1] == -1  # nothing within reach


def test_nonfinite_input_rejected():
    with pytest.raises(DataError):
        SpatialIndex(np.array([[0.0, np.nan, 0.0]]))
