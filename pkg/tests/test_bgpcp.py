import math

import numpy as np
import pytest

from woundpatch.bgpcp import (
    PointCloud,
    ProcessingBand,
    band_distance_px,
    build_band,
    build_cloud,
    default_filter_radius,
    distance_transform,
    radius_filter,
)
from woundpatch.capture import DepthMap, Intrinsics
from woundpatch.errors import BandError, EmptyMaskError
from woundpatch.segmentation import redraw


def brute_distance_to_pixels(shape, boundary_raster):
    ys, xs = np.nonzero(boundary_raster)
    out = np.zeros(shape)
    for y in range(shape[0]):
        for x in range(shape[1]):
            out[y, x] = math.sqrt(min((y - by) ** 2 + (x - bx) ** 2 for by, bx in zip(ys, xs)))
    return out


def brute_point_segment_distance(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    len2 = dx * dx + dy * dy
    if len2 == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / len2))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def brute_polyline_distance(px, py, vertices):
    n = len(vertices)
    return min(
        brute_point_segment_distance(
            px, py, *vertices[i], *vertices[(i + 1) % n]
        )
        for i in range(n)
    )


def brute_neighbor_counts(positions, radius):
    n = len(positions)
    counts = np.zeros(n, dtype=int)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = positions[i] - positions[j]
            if float(d @ d) <= radius * radius:
                counts[i] += 1
    return counts


def grid_cloud(nx=12, ny=12, pitch=0.001, depth=0.2, band_mask=None, shape=(16, 16)):
    xs, ys = np.meshgrid(np.arange(nx), np.arange(ny))
    xs, ys = xs.ravel(), ys.ravel()
    positions = np.column_stack([xs * pitch, ys * pitch, np.full(xs.size, depth)])
    pixels = np.column_stack([xs + 0.5, ys + 0.5]).astype(float)
    if band_mask is None:
        in_band = np.ones(len(positions), dtype=bool)
    else:
        in_band = band_mask
    return PointCloud(positions=positions, pixels=pixels, in_band=in_band)


class TestDistanceTransform:
    def test_single_boundary_pixel(self):
        raster = np.zeros((9, 9), bool)
        raster[4, 4] = True
        dist = distance_transform(raster)
        yy, xx = np.mgrid[0:9, 0:9]
        assert np.allclose(dist, np.hypot(yy - 4, xx - 4))

    def test_zero_at_boundary_pixels(self):
        raster = np.zeros((5, 5), bool)
        raster[1, 2] = raster[3, 0] = True
        dist = distance_transform(raster)
        assert dist[1, 2] == 0 and dist[3, 0] == 0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        raster = rng.random((20, 20)) > 0.9
        raster[0, 0] = True  # ensure nonempty
        dist = distance_transform(raster)
        brute = brute_distance_to_pixels((20, 20), raster)
        assert np.abs(dist - brute).max() <= 0.5
        assert np.allclose(dist, brute, atol=1e-9)  # scipy's EDT is exact

    def test_empty_raster_rejected(self):
        with pytest.raises(EmptyMaskError):
            distance_transform(np.zeros((4, 4), bool))


class TestBuildBand:
    def test_distance_formula(self):
        square = redraw([[0, 0], [20, 0], [20, 20], [0, 20]])  # area 400
        assert band_distance_px(square) == pytest.approx(2.0)
        big = redraw([[0, 0], [100, 0], [100, 100], [0, 100]])  # area 10000
        assert band_distance_px(big) == pytest.approx(10.0)

    def test_band_matches_brute_force_scan(self):
        square = redraw([[10, 10], [60, 10], [60, 60], [10, 60]])  # 50x50
        band = build_band(square, shape=(80, 80))
        d = band_distance_px(square)
        brute = np.zeros((80, 80), bool)
        for y in range(80):
            for x in range(80):
                brute[y, x] = (
                    brute_polyline_distance(x + 0.5, y + 0.5, square.vertices.tolist()) <= d
                )
        assert np.array_equal(band.mask, brute)

    def test_band_clipped_to_raster(self):
        square = redraw([[0, 0], [30, 0], [30, 30], [0, 30]])
        band = build_band(square, shape=(20, 20))
        assert band.mask.shape == (20, 20)


class TestBuildCloud:
    def make_depth(self, w=40, h=40, value=0.2):
        return DepthMap(values=np.full((h, w), value)), Intrinsics(
            fx=50.0, fy=50.0, cx=w / 2, cy=h / 2, width=w, height=h
        )

    def test_pixels_inside_polygon_only(self):
        depth, k = self.make_depth()
        square = redraw([[10, 10], [30, 10], [30, 30], [10, 30]])
        cloud = build_cloud(depth, k, square)
        assert len(cloud) == 400  # 20x20 pixel centers strictly inside
        assert cloud.pixels[:, 0].min() >= 10 and cloud.pixels[:, 0].max() <= 30

    def test_holes_excluded(self):
        depth, k = self.make_depth()
        depth.values[15:20, 15:20] = 0.0
        square = redraw([[10, 10], [30, 10], [30, 30], [10, 30]])
        cloud = build_cloud(depth, k, square)
        assert len(cloud) == 400 - 25

    def test_all_invalid_depth_rejected(self):
        depth, k = self.make_depth(value=0.0)
        square = redraw([[10, 10], [30, 10], [30, 30], [10, 30]])
        with pytest.raises(EmptyMaskError):
            build_cloud(depth, k, square)


class TestRadiusFilter:
    def test_displaced_point_removed(self):
        cloud = grid_cloud(nx=15, ny=15, pitch=0.001)
        positions = cloud.positions.copy()
        victim = 7 * 15 + 7
        radius = 0.0025
        positions[victim, 2] += 10 * radius
        noisy = PointCloud(positions=positions, pixels=cloud.pixels, in_band=cloud.in_band)
        out = radius_filter(noisy, radius=radius, min_neighbors=5)
        assert len(out) == len(noisy) - 1
        # exhaustive oracle agrees on exactly who goes
        counts = brute_neighbor_counts(positions, radius)
        assert set(np.nonzero(counts < 5)[0]) == {victim}

    def test_empty_band_is_identity(self):
        cloud = grid_cloud(band_mask=np.zeros(144, dtype=bool))
        out = radius_filter(cloud, radius=1e-9, min_neighbors=5)
        assert len(out) == len(cloud)
        assert np.array_equal(out.positions, cloud.positions)

    def test_out_of_band_points_untouched(self):
        # wild outliers out of band survive any radius
        rng = np.random.default_rng(1)
        positions = rng.normal(scale=10.0, size=(50, 3))
        pixels = rng.uniform(0, 10, size=(50, 2))
        cloud = PointCloud(positions=positions, pixels=pixels, in_band=np.zeros(50, bool))
        out = radius_filter(cloud, radius=0.001, min_neighbors=5)
        assert len(out) == 50

    def test_banded_equals_whole_cloud_restricted(self):
        rng = np.random.default_rng(2)
        for trial in range(10):
            n = 400
            positions = rng.uniform(0, 0.05, size=(n, 3))
            pixels = rng.uniform(0, 20, size=(n, 2))
            in_band = rng.random(n) < 0.3
            cloud = PointCloud(positions=positions, pixels=pixels, in_band=in_band)
            radius = 0.004
            out = radius_filter(cloud, radius=radius, min_neighbors=4)
            counts = brute_neighbor_counts(positions, radius)
            whole_cloud_removed = counts < 4
            expect_keep = ~(whole_cloud_removed & in_band)
            assert np.array_equal(out.positions, positions[expect_keep])

    def test_clean_grid_idempotent(self):
        # radius large enough that even grid corners keep 8 neighbors
        pitch = 0.001
        cloud = grid_cloud(nx=10, ny=10, pitch=pitch)
        for k in range(1, 9):
            out = radius_filter(cloud, radius=2.9 * pitch, min_neighbors=k)
            assert len(out) == len(cloud), f"min_neighbors={k}"

    def test_parameter_validation(self):
        cloud = grid_cloud()
        with pytest.raises(BandError):
            radius_filter(cloud, radius=0.0, min_neighbors=5)
        with pytest.raises(BandError):
            radius_filter(cloud, radius=0.01, min_neighbors=0)

    def test_default_radius_scales_with_depth(self):
        k = Intrinsics(fx=500.0, fy=500.0, cx=20, cy=20, width=40, height=40)
        cloud = grid_cloud(depth=0.2)
        r = default_filter_radius(cloud, k)
        assert r == pytest.approx(3.0 * 0.2 / 500.0)
