import numpy as np
import pytest

import woundpatch
from woundpatch._kernels import _fallback, count_within_radius, points_in_polygon

try:
    from woundpatch._kernels import _core
except ImportError:
    _core = None


def brute_counts(points, queries, radius):
    out = np.zeros(len(queries), dtype=np.int64)
    for qi, q in enumerate(queries):
        d2 = ((points - points[q]) ** 2).sum(axis=1)
        out[qi] = int((d2 <= radius * radius).sum()) - 1
    return out


class TestCountWithinRadius:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(500, 3))
        queries = rng.integers(0, 500, size=100).astype(np.int64)
        radius = float(rng.uniform(0.1, 0.8))
        got = count_within_radius(pts, queries, radius)
        assert np.array_equal(got, brute_counts(pts, queries, radius))

    def test_compiled_and_fallback_agree(self):
        rng = np.random.default_rng(42)
        pts = rng.uniform(0, 0.1, size=(3000, 3))
        queries = np.arange(0, 3000, 3, dtype=np.int64)
        for radius in (0.001, 0.005, 0.02):
            a = count_within_radius(pts, queries, radius)
            b = _fallback.count_within_radius(pts, queries, radius)
            assert np.array_equal(a, b)

    def test_duplicate_points(self):
        pts = np.zeros((5, 3))
        got = count_within_radius(pts, np.arange(5, dtype=np.int64), 0.1)
        assert np.array_equal(got, np.full(5, 4))

    def test_empty(self):
        assert len(count_within_radius(np.zeros((0, 3)), np.zeros(0, np.int64), 1.0)) == 0


class TestPointsInPolygon:
    def test_compiled_and_fallback_agree(self):
        rng = np.random.default_rng(1)
        ang = np.sort(rng.uniform(0, 2 * np.pi, 17))
        poly = np.column_stack([10 * np.cos(ang) + 10, 10 * np.sin(ang) + 10])
        pts = rng.uniform(-2, 22, size=(4000, 2))
        a = points_in_polygon(pts, poly)
        b = _fallback.points_in_polygon(pts, poly)
        assert np.array_equal(a, b)

    def test_on_edge_counts_inside(self):
        poly = np.array([[0, 0], [10, 0], [10, 10], [0, 10]], float)
        pts = np.array([[5, 0], [10, 5], [0, 0], [5, 10], [5, 5], [11, 5], [-1e-13, 5], [-1e-9, 5]])
        got = points_in_polygon(pts, poly)
        # within tol (1e-12) of the edge counts inside; farther out does not
        assert got.tolist() == [1, 1, 1, 1, 1, 0, 1, 0]

    def test_nonconvex(self):
        poly = np.array([[0, 0], [10, 0], [10, 10], [5, 5], [0, 10]], float)
        pts = np.array([[5, 7], [5, 4], [2, 6], [8, 6]])
        assert points_in_polygon(pts, poly).tolist() == [0, 1, 1, 1]


def test_flag_reports_backend():
    assert isinstance(woundpatch.USING_COMPILED, bool)


@pytest.mark.skipif(_core is None, reason="extension not built")
def test_compiled_backend_active_when_built():
    assert woundpatch.USING_COMPILED
