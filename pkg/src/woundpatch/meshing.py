"""Delaunay meshing of the wound region and lifting to a 3D surface.

The 2D triangulation covers the convex hull of the wound points; concavity is
recovered by dropping every triangle that has an edge midpoint strictly
outside the confirmed boundary (points on the polyline count as inside). The
remaining largest component is lifted through the point cloud to 3D and must
be a topological disk.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from . import _kernels
from .bgpcp import PointCloud, polyline_distance
from .errors import MeshError
from .segmentation import BoundaryPolygon

MAX_MESH_VERTICES = 20_000
RIM_SPACING_PX = 2.0
RIM_DEPTH_SEARCH_PX = 3.0


@dataclass(frozen=True)
class SurfaceMesh:
    """Indexed triangle mesh with per-vertex 3D position and source pixel."""

    positions: np.ndarray  # (n, 3) float64 meters
    pixels: np.ndarray  # (n, 2) float64 image coords
    triangles: np.ndarray  # (m, 3) int32
    boundary_loop: np.ndarray  # (k,) int32, ordered

    def __len__(self) -> int:
        return len(self.positions)

    def surface_area(self) -> float:
        a = self.positions[self.triangles[:, 0]]
        b = self.positions[self.triangles[:, 1]]
        c = self.positions[self.triangles[:, 2]]
        return float(np.linalg.norm(np.cross(b - a, c - a), axis=1).sum() / 2.0)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def euler_characteristic(self) -> int:
        return len(self.positions) - len(self.edges()) + len(self.triangles)

    def validate(self) -> None:
        """Disk topology: manifold, Euler characteristic 1, one boundary loop."""
        if len(self.triangles) == 0:
            raise MeshError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.positions):
            raise MeshError("triangle indices out of range")
        chi = self.euler_characteristic()
        if chi != 1:
            raise MeshError(f"mesh is not a disk (Euler characteristic {chi})")
        counts = _edge_use_counts(self.triangles)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge (used by more than two triangles)")
        areas = self._areas()
        if np.any(areas <= 0):
            raise MeshError("degenerate zero-area triangle")

    def _areas(self) -> np.ndarray:
        a = self.positions[self.triangles[:, 0]]
        b = self.positions[self.triangles[:, 1]]
        c = self.positions[self.triangles[:, 2]]
        return np.linalg.norm(np.cross(b - a, c - a), axis=1) / 2.0


def _edge_use_counts(triangles: np.ndarray) -> np.ndarray:
    t = triangles
    e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e = np.sort(e, axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return counts


def triangulate(points2d: np.ndarray) -> np.ndarray:
    """Delaunay triangulation; triangles returned CCW as (m, 3) indices."""
    pts = np.asarray(points2d, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise MeshError(f"points must be (n, 2), got {pts.shape}")
    if len(pts) < 3:
        raise MeshError(f"need at least 3 points, got {len(pts)}")
    try:
        tri = Delaunay(pts)
    except QhullError as exc:
        raise MeshError(f"triangulation failed (collinear input?): {exc}") from exc
    simplices = tri.simplices.astype(np.int32)
    a, b, c = pts[simplices[:, 0]], pts[simplices[:, 1]], pts[simplices[:, 2]]
    signed = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    flip = signed < 0
    simplices[flip] = simplices[flip][:, [0, 2, 1]]
    # collinear inputs (densified points along a straight boundary edge) make
    # qhull emit hull slivers of essentially zero area; drop by relative
    # flatness so they cannot corrupt the boundary topology downstream
    edge2 = np.maximum(
        np.maximum(
            ((b - a) ** 2).sum(axis=1), ((c - b) ** 2).sum(axis=1)
        ),
        ((a - c) ** 2).sum(axis=1),
    )
    keep = np.abs(signed) > 1e-9 * edge2
    return simplices[keep]


def _triangle_components(triangles: np.ndarray) -> np.ndarray:
    """Label triangles by edge-connected component."""
    m = len(triangles)
    edges = {}
    adj = [[] for _ in range(m)]
    for ti, tri in enumerate(triangles):
        for k in range(3):
            key = tuple(sorted((int(tri[k]), int(tri[(k + 1) % 3]))))
            other = edges.get(key)
            if other is None:
                edges[key] = ti
            else:
                adj[ti].append(other)
                adj[other].append(ti)
    labels = np.full(m, -1, dtype=np.int32)
    current = 0
    for start in range(m):
        if labels[start] != -1:
            continue
        stack = [start]
        labels[start] = current
        while stack:
            t = stack.pop()
            for nb in adj[t]:
                if labels[nb] == -1:
                    labels[nb] = current
                    stack.append(nb)
        current += 1
    return labels


def _split_vertex_pinches(triangles: np.ndarray) -> np.ndarray:
    """Drop the smaller fans at vertices where disjoint triangle fans meet.

    Carving can leave a surviving set that touches itself at a single vertex;
    such a vertex has more than one edge-connected fan of incident triangles
    and breaks the single-boundary-loop walk. Keep the largest fan per pinch,
    iterating because a removal can expose a new pinch.
    """
    tris = triangles
    while True:
        incident: dict[int, list[int]] = {}
        for ti, tri in enumerate(tris):
            for v in tri:
                incident.setdefault(int(v), []).append(ti)
        drop: set[int] = set()
        for v, tlist in incident.items():
            if len(tlist) <= 1:
                continue
            # union incident triangles along edges through v
            parent = {ti: ti for ti in tlist}

            def find(x):
                while parent[x] != x:
                    parent[x] = parent[parent[x]]
                    x = parent[x]
                return x

            edge_map: dict[int, int] = {}
            for ti in tlist:
                for o in tris[ti]:
                    o = int(o)
                    if o == v:
                        continue
                    if o in edge_map:
                        ra, rb = find(edge_map[o]), find(ti)
                        if ra != rb:
                            parent[ra] = rb
                    else:
                        edge_map[o] = ti
            fans: dict[int, list[int]] = {}
            for ti in tlist:
                fans.setdefault(find(ti), []).append(ti)
            if len(fans) > 1:
                largest = max(fans.values(), key=len)
                for fan in fans.values():
                    if fan is not largest:
                        drop.update(fan)
        if not drop:
            return tris
        keep = np.ones(len(tris), dtype=bool)
        keep[list(drop)] = False
        tris = tris[keep]
        if len(tris) == 0:
            raise MeshError("pinch removal emptied the mesh")


def carve_concavity(triangles: np.ndarray, points2d: np.ndarray, boundary: BoundaryPolygon) -> np.ndarray:
    """Drop triangles with any edge midpoint strictly outside the boundary.

    Midpoints on the polyline count as inside. Keeps the largest edge-connected
    component of the survivors and splits single-vertex pinches so the result
    stays a disk.
    """
    triangles = np.asarray(triangles, dtype=np.int32)
    pts = np.asarray(points2d, dtype=np.float64)
    if len(triangles) == 0:
        raise MeshError("empty triangulation")
    mids = np.concatenate(
        [
            (pts[triangles[:, 0]] + pts[triangles[:, 1]]) / 2.0,
            (pts[triangles[:, 1]] + pts[triangles[:, 2]]) / 2.0,
            (pts[triangles[:, 2]] + pts[triangles[:, 0]]) / 2.0,
        ]
    )
    inside = _kernels.points_in_polygon(mids, boundary.vertices).astype(bool)
    inside = inside.reshape(3, len(triangles))
    survivors = triangles[inside.all(axis=0)]
    if len(survivors) == 0:
        raise MeshError("carving removed every triangle")
    while True:
        labels = _triangle_components(survivors)
        counts = np.bincount(labels)
        survivors = survivors[labels == int(np.argmax(counts))]
        cleaned = _split_vertex_pinches(survivors)
        if len(cleaned) == len(survivors):
            return cleaned
        survivors = cleaned


def _boundary_loop(triangles: np.ndarray, n_vertices: int) -> np.ndarray:
    """Ordered boundary loop of a CCW-oriented disk triangulation."""
    directed = {}
    for tri in triangles:
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            directed[(a, b)] = directed.get((a, b), 0) + 1
    # boundary edges appear in one direction only
    nxt = {}
    for (a, b), cnt in directed.items():
        if cnt == 1 and (b, a) not in directed:
            if a in nxt:
                raise MeshError("boundary is not a single loop (branching vertex)")
            nxt[a] = b
    if not nxt:
        raise MeshError("mesh has no boundary (not a disk)")
    start = next(iter(nxt))
    loop = [start]
    cur = nxt[start]
    while cur != start:
        loop.append(cur)
        if cur not in nxt:
            raise MeshError("boundary loop is not closed")
        cur = nxt[cur]
        if len(loop) > len(nxt):
            raise MeshError("boundary loop walk did not terminate")
    if len(loop) != len(nxt):
        raise MeshError(f"mesh has {len(nxt) - len(loop)} extra boundary edges (multiple loops)")
    return np.asarray(loop, dtype=np.int32)


def lift(triangles: np.ndarray, points2d: np.ndarray, cloud: PointCloud) -> SurfaceMesh:
    """Map 2D vertices onto surviving cloud points and assemble the 3D mesh.

    Vertices without a surviving cloud point (removed by filtering) are dropped
    together with their incident triangles. Positions come from the cloud,
    which already holds the intrinsics-based back-projection of each pixel.
    """
    triangles = np.asarray(triangles, dtype=np.int32)
    pts = np.asarray(points2d, dtype=np.float64)
    index_of = {(float(x), float(y)): i for i, (x, y) in enumerate(cloud.pixels)}
    cloud_idx = np.full(len(pts), -1, dtype=np.int64)
    for i, (x, y) in enumerate(pts):
        cloud_idx[i] = index_of.get((float(x), float(y)), -1)
    alive = cloud_idx >= 0
    tri_alive = alive[triangles].all(axis=1)
    kept = triangles[tri_alive]
    if len(kept) == 0:
        raise MeshError("no triangles survive vertex drops")

    used = np.unique(kept)
    remap = np.full(len(pts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    mesh_tris = remap[kept].astype(np.int32)
    src = cloud_idx[used]
    mesh = SurfaceMesh(
        positions=cloud.positions[src],
        pixels=cloud.pixels[src],
        triangles=mesh_tris,
        boundary_loop=_boundary_loop(mesh_tris, len(used)),
    )
    mesh.validate()
    return mesh


def densify_polyline(vertices: np.ndarray, max_spacing: float = RIM_SPACING_PX) -> np.ndarray:
    """Insert points along polygon edges so no segment exceeds max_spacing."""
    out = []
    n = len(vertices)
    for i in range(n):
        a = vertices[i]
        b = vertices[(i + 1) % n]
        seg = np.hypot(*(b - a))
        steps = max(int(np.ceil(seg / max_spacing)), 1)
        for s in range(steps):
            out.append(a + (b - a) * (s / steps))
    return np.asarray(out)


def rim_points(
    boundary: BoundaryPolygon, cloud: PointCloud, intrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """3D points along the boundary polyline, depth interpolated from the cloud.

    The mesh's outermost interior samples sit up to a pixel inside the polygon;
    adding rim vertices recovers that half-pixel ring so measured area tracks
    the confirmed boundary. Depth is inverse-distance weighted over surviving
    cloud points near each rim point (robust to rim noise the filter removed).
    Rim points with no survivor nearby are skipped.
    """
    from .capture import back_project_many

    ring = densify_polyline(boundary.vertices)
    tree = cKDTree(cloud.pixels)
    dists, idxs = tree.query(ring, k=min(4, len(cloud)), distance_upper_bound=RIM_DEPTH_SEARCH_PX)
    if dists.ndim == 1:
        dists = dists[:, None]
        idxs = idxs[:, None]
    depths = np.zeros(len(ring))
    ok = np.zeros(len(ring), dtype=bool)
    cloud_z = cloud.positions[:, 2]
    for i in range(len(ring)):
        valid = np.isfinite(dists[i])
        if not valid.any():
            continue
        d = np.maximum(dists[i][valid], 1e-6)
        w = 1.0 / (d * d)
        depths[i] = float(np.dot(w, cloud_z[idxs[i][valid]]) / w.sum())
        ok[i] = True
    ring, depths = ring[ok], depths[ok]
    if len(ring) == 0:
        return np.zeros((0, 3)), np.zeros((0, 2))
    positions = back_project_many(ring[:, 0], ring[:, 1], depths, intrinsics)
    return positions, ring


def subsample_interior(cloud: PointCloud, boundary: BoundaryPolygon, max_vertices: int = MAX_MESH_VERTICES) -> np.ndarray:
    """Indices of cloud points to mesh; stride-grids the interior when large.

    Points near the polyline are always kept at full density so the rim stays
    sharp; only the interior is thinned.
    """
    n = len(cloud)
    if n <= max_vertices:
        return np.arange(n)
    stride = int(np.ceil(np.sqrt(n / max_vertices)))
    xs = np.floor(cloud.pixels[:, 0]).astype(np.int64)
    ys = np.floor(cloud.pixels[:, 1]).astype(np.int64)
    on_grid = (xs % stride == 0) & (ys % stride == 0)
    near_rim = polyline_distance(cloud.pixels, boundary.vertices) <= stride + 1.0
    return np.nonzero(on_grid | near_rim)[0]


def mesh_region(cloud: PointCloud, boundary: BoundaryPolygon, intrinsics) -> SurfaceMesh:
    """Filtered cloud + confirmed boundary -> lifted surface mesh."""
    keep = subsample_interior(cloud, boundary)
    rim_pos, rim_px = rim_points(boundary, cloud, intrinsics)
    positions = np.vstack([cloud.positions[keep], rim_pos])
    pixels = np.vstack([cloud.pixels[keep], rim_px])
    # deduplicate coincident pixels (a rim point can land on a pixel center)
    _, unique_idx = np.unique(pixels.round(9), axis=0, return_index=True)
    unique_idx.sort()
    positions, pixels = positions[unique_idx], pixels[unique_idx]

    merged = PointCloud(
        positions=positions,
        pixels=pixels,
        in_band=np.zeros(len(positions), dtype=bool),
    )
    tris = triangulate(merged.pixels)
    tris = carve_concavity(tris, merged.pixels, boundary)
    return lift(tris, merged.pixels, merged)


def write_obj(mesh: SurfaceMesh, path: str | Path) -> None:
    """Debug OBJ export, positions only."""
    lines = [f"v {x:.9f} {y:.9f} {z:.9f}" for x, y, z in mesh.positions]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")
