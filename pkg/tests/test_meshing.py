import numpy as np
import pytest
from shapely.geometry import Point, Polygon

from woundpatch.bgpcp import PointCloud, build_band, build_cloud, radius_filter
from woundpatch.capture import DepthMap, Intrinsics, back_project_many
from woundpatch.errors import MeshError
from woundpatch.meshing import (
    densify_polyline,
    SurfaceMesh,
    carve_concavity,
    lift,
    mesh_region,
    triangulate,
    write_obj,
)
from woundpatch.segmentation import extract_boundary, redraw


def incircle_violations(points, triangles, rel_tol=1e-9):
    """Brute-force empty-circumcircle check; returns violating triangle count."""
    pts = np.asarray(points, float)
    bad = 0
    for tri in triangles:
        a, b, c = pts[tri]
        # CCW orientation
        if (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) < 0:
            b, c = c, b
        d = pts
        adx, ady = a[0] - d[:, 0], a[1] - d[:, 1]
        bdx, bdy = b[0] - d[:, 0], b[1] - d[:, 1]
        cdx, cdy = c[0] - d[:, 0], c[1] - d[:, 1]
        det = (
            (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
            + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
            + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady)
        )
        scale = max(
            np.abs(a).max(), np.abs(b).max(), np.abs(c).max(), 1.0
        )
        mask = np.ones(len(pts), bool)
        mask[tri] = False
        if np.any(det[mask] > rel_tol * scale**4):
            bad += 1
    return bad


def shapely_midpoint_survivors(points, triangles, boundary_vertices):
    """Independent carve oracle: shapely covers() on all edge midpoints."""
    poly = Polygon(boundary_vertices)
    keep = []
    pts = np.asarray(points, float)
    for tri in triangles:
        mids = [(pts[tri[i]] + pts[tri[(i + 1) % 3]]) / 2.0 for i in range(3)]
        if all(poly.covers(Point(m)) for m in mids):
            keep.append(tri)
    return np.asarray(keep)


def fit_plane_normal(positions):
    centered = positions - positions.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    n = vt[-1]
    return n / np.linalg.norm(n)


class TestTriangulate:
    def test_three_points(self):
        tris = triangulate([[0, 0], [1, 0], [0, 1]])
        assert tris.shape == (1, 3)

    def test_four_convex_points_two_triangles(self):
        pts = np.array([[0, 0], [4, 0.2], [4.3, 3.6], [0.2, 3.0]])
        tris = triangulate(pts)
        assert len(tris) == 2
        assert incircle_violations(pts, tris) == 0

    def test_random_points_pass_brute_force(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, 100, size=(1000, 2))
        tris = triangulate(pts)
        assert incircle_violations(pts, tris) == 0

    def test_too_few_points(self):
        with pytest.raises(MeshError):
            triangulate([[0, 0], [1, 1]])

    def test_collinear_points(self):
        with pytest.raises(MeshError):
            triangulate([[0, 0], [1, 1], [2, 2], [3, 3]])

    def test_triangles_ccw(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(0, 10, size=(50, 2))
        tris = triangulate(pts)
        a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
        signed = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (
            c[:, 0] - a[:, 0]
        )
        assert (signed > 0).all()


class TestCarveConcavity:
    def grid_points(self, w, h):
        ys, xs = np.mgrid[0:h, 0:w]
        return np.column_stack([xs.ravel() + 0.5, ys.ravel() + 0.5]).astype(float)

    def test_convex_boundary_keeps_everything(self):
        pts = self.grid_points(12, 12)
        square = redraw([[0, 0], [12, 0], [12, 12], [0, 12]])
        tris = triangulate(pts)
        carved = carve_concavity(tris, pts, square)
        assert len(carved) == len(tris)

    def test_notched_boundary_matches_oracle_and_area(self):
        # C-shape: square with a deep rectangular notch cut from the right
        outline = [
            [0, 0], [30, 0], [30, 10], [8, 10], [8, 20], [30, 20], [30, 30], [0, 30],
        ]
        boundary = redraw(outline)
        pts = self.grid_points(30, 30)
        inside = boundary.contains_points(pts)
        # interior pixel centers plus points along the polyline, as the
        # pipeline meshes them; without rim points the mesh stops half a
        # pixel short of the boundary everywhere
        pts = np.vstack([pts[inside], densify_polyline(boundary.vertices, 1.0)])
        tris = triangulate(pts)
        carved = carve_concavity(tris, pts, boundary)

        oracle = shapely_midpoint_survivors(pts, tris, boundary.vertices.tolist())
        largest_set = {tuple(sorted(t)) for t in carved}
        oracle_set = {tuple(sorted(t)) for t in oracle}
        # carve keeps the largest component of the oracle's survivors
        assert largest_set <= oracle_set

        a, b, c = pts[carved[:, 0]], pts[carved[:, 1]], pts[carved[:, 2]]
        area = float(
            np.abs(
                (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
            ).sum()
            / 2
        )
        assert abs(area - boundary.area) / boundary.area < 0.02

    def test_notch_spanning_triangles_removed(self):
        outline = [
            [0, 0], [30, 0], [30, 10], [8, 10], [8, 20], [30, 20], [30, 30], [0, 30],
        ]
        boundary = redraw(outline)
        pts = self.grid_points(30, 30)
        pts = np.vstack([pts[boundary.contains_points(pts)], densify_polyline(boundary.vertices, 1.0)])
        carved = carve_concavity(triangulate(pts), pts, boundary)
        # no carved triangle crosses the notch: midpoints all covered
        oracle = shapely_midpoint_survivors(pts, carved, boundary.vertices.tolist())
        assert len(oracle) == len(carved)

    def test_single_triangle_region(self):
        pts = np.array([[0.0, 0.0], [10.0, 0.0], [5.0, 8.0]])
        boundary = redraw(pts)
        tris = triangulate(pts)
        carved = carve_concavity(tris, pts, boundary)
        assert len(carved) == 1

    def test_idempotent(self):
        outline = [
            [0, 0], [30, 0], [30, 10], [8, 10], [8, 20], [30, 20], [30, 30], [0, 30],
        ]
        boundary = redraw(outline)
        pts = self.grid_points(30, 30)
        pts = pts[boundary.contains_points(pts)]
        once = carve_concavity(triangulate(pts), pts, boundary)
        twice = carve_concavity(once, pts, boundary)
        assert np.array_equal(once, twice)

    def test_carve_to_nothing_errors(self):
        pts = np.array([[0.0, 0.0], [10.0, 0.0], [5.0, 8.0]])
        tiny = redraw([[100, 100], [101, 100], [101, 101], [100, 101]])
        with pytest.raises(MeshError):
            carve_concavity(triangulate(pts), pts, tiny)


def make_cloud(w, h, depth_fn, k=None):
    if k is None:
        k = Intrinsics(fx=100.0, fy=100.0, cx=w / 2, cy=h / 2, width=w, height=h)
    ys, xs = np.mgrid[0:h, 0:w]
    xs, ys = xs.ravel() + 0.5, ys.ravel() + 0.5
    z = depth_fn(xs, ys)
    positions = back_project_many(xs, ys, z, k)
    return PointCloud(
        positions=positions,
        pixels=np.column_stack([xs, ys]),
        in_band=np.zeros(xs.size, bool),
    ), k


class TestLift:
    def test_flat_region_planar_at_depth(self):
        cloud, _ = make_cloud(10, 10, lambda x, y: np.full(x.size, 0.3))
        tris = triangulate(cloud.pixels)
        mesh = lift(tris, cloud.pixels, cloud)
        assert np.allclose(mesh.positions[:, 2], 0.3)
        assert mesh.euler_characteristic() == 1

    def test_depth_ramp_normal_matches_plane(self):
        # depth varies linearly in x: surface ~ tilted plane
        slope = 0.001  # meters per pixel
        cloud, k = make_cloud(20, 20, lambda x, y: 0.3 + slope * x)
        tris = triangulate(cloud.pixels)
        mesh = lift(tris, cloud.pixels, cloud)
        got = fit_plane_normal(mesh.positions)
        # analytic: fit the same plane from exact 3D corner points
        want = fit_plane_normal(cloud.positions)
        angle = np.degrees(np.arccos(np.clip(abs(got @ want), -1, 1)))
        assert angle < 0.5

    def test_dropped_rim_vertex_removes_incident_triangles(self):
        cloud, _ = make_cloud(8, 8, lambda x, y: np.full(x.size, 0.3))
        tris = triangulate(cloud.pixels)
        # remove a hull-corner cloud point: triangles go, mesh stays a disk
        victim = 0
        keep = np.ones(len(cloud), bool)
        keep[victim] = False
        filtered = PointCloud(
            positions=cloud.positions[keep],
            pixels=cloud.pixels[keep],
            in_band=cloud.in_band[keep],
        )
        mesh = lift(tris, cloud.pixels, filtered)
        assert len(mesh) == 63
        mesh.validate()  # still one loop, disk
        assert not np.any((mesh.pixels == cloud.pixels[victim]).all(axis=1))

    def test_dropped_interior_vertex_breaks_disk(self):
        # an interior drop punches a hole; lift must refuse, the pipeline
        # avoids this by triangulating the already-filtered points
        cloud, _ = make_cloud(8, 8, lambda x, y: np.full(x.size, 0.3))
        tris = triangulate(cloud.pixels)
        victim = 3 * 8 + 3
        keep = np.ones(len(cloud), bool)
        keep[victim] = False
        filtered = PointCloud(
            positions=cloud.positions[keep],
            pixels=cloud.pixels[keep],
            in_band=cloud.in_band[keep],
        )
        with pytest.raises(MeshError):
            lift(tris, cloud.pixels, filtered)

    def test_euler_characteristic_is_one(self):
        cloud, _ = make_cloud(15, 9, lambda x, y: np.full(x.size, 0.25))
        mesh = lift(triangulate(cloud.pixels), cloud.pixels, cloud)
        assert mesh.euler_characteristic() == 1


class TestMeshRegion:
    def test_flat_disk_area_matches_pixel_footprint(self):
        w = h = 64
        k = Intrinsics(fx=120.0, fy=110.0, cx=32.0, cy=32.0, width=w, height=h)
        depth = DepthMap(values=np.full((h, w), 0.3))
        yy, xx = np.mgrid[0:h, 0:w]
        mask = (xx - 32) ** 2 + (yy - 32) ** 2 <= 24**2
        boundary = extract_boundary(mask)
        band = build_band(boundary, (h, w))
        cloud = build_cloud(depth, k, boundary, band)
        mesh = mesh_region(cloud, boundary, k)
        expected = boundary.area * (0.3 / k.fx) * (0.3 / k.fy)
        assert abs(mesh.surface_area() - expected) / expected < 0.01

    def test_survives_radius_filtering(self):
        w = h = 48
        k = Intrinsics(fx=100.0, fy=100.0, cx=24.0, cy=24.0, width=w, height=h)
        values = np.full((h, w), 0.3)
        rng = np.random.default_rng(3)
        # spike a few rim pixels hard
        values[10, 20] += 0.05
        values[36, 30] -= 0.05
        depth = DepthMap(values=values)
        yy, xx = np.mgrid[0:h, 0:w]
        mask = (xx - 24) ** 2 + (yy - 24) ** 2 <= 15**2
        boundary = extract_boundary(mask)
        band = build_band(boundary, (h, w))
        cloud = build_cloud(depth, k, boundary, band)
        filtered = radius_filter(cloud, radius=3 * 0.3 / 100.0, min_neighbors=5)
        assert len(filtered) < len(cloud)
        mesh = mesh_region(filtered, boundary, k)
        mesh.validate()
        expected = boundary.area * (0.3 / k.fx) * (0.3 / k.fy)
        assert abs(mesh.surface_area() - expected) / expected < 0.02

    def test_obj_export(self, tmp_path):
        cloud, k = make_cloud(6, 6, lambda x, y: np.full(x.size, 0.2))
        mesh = lift(triangulate(cloud.pixels), cloud.pixels, cloud)
        out = tmp_path / "mesh.obj"
        write_obj(mesh, out)
        text = out.read_text()
        assert text.count("\nv ") + text.startswith("v ") == len(mesh)
        assert text.count("f ") == len(mesh.triangles)
