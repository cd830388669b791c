"""Conformal flattening of the wound surface and extrusion to a solid patch.

Flattening is boundary-first in the free-boundary, minimal-distortion mode:
log scale factors are pinned to zero on the boundary, the linearized Yamabe
equation gives interior factors and the new boundary turning angles, the
boundary curve is laid out (its closure repaired by a least-squares length
adjustment), and the interior is extended harmonically. Everything is
intrinsic, so the result is invariant to rigid motion of the input. The flat
mesh is rescaled so total area matches the 3D surface area, then extruded to
a closed solid of the requested thickness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FlattenError
from .meshing import SurfaceMesh


@dataclass(frozen=True)
class FlatMesh:
    """Planar embedding of a SurfaceMesh, same connectivity."""

    uv: np.ndarray  # (n, 2) float64 meters
    triangles: np.ndarray  # (m, 3) int32
    boundary_loop: np.ndarray  # (k,) int32
    pixels: np.ndarray  # (n, 2) source image coords

    def triangle_areas(self) -> np.ndarray:
        a = self.uv[self.triangles[:, 0]]
        b = self.uv[self.triangles[:, 1]]
        c = self.uv[self.triangles[:, 2]]
        return 0.5 * (
            (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
            - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        )

    def area(self) -> float:
        return float(self.triangle_areas().sum())


@dataclass(frozen=True)
class PatchSolid:
    """Closed extruded solid: flat patch bottom at z=0, top at z=thickness."""

    vertices: np.ndarray  # (2n, 3) float64 meters
    triangles: np.ndarray  # (f, 3) int32, outward-oriented
    thickness: float
    flat_area: float

    def volume(self) -> float:
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def is_watertight(self) -> bool:
        """Every undirected edge used exactly twice, once per direction."""
        t = self.triangles
        directed = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        und = np.sort(directed, axis=1)
        _, counts = np.unique(und, axis=0, return_counts=True)
        if not np.all(counts == 2):
            return False
        _, dcounts = np.unique(directed, axis=0, return_counts=True)
        return bool(np.all(dcounts == 1))


def _edge_lengths(mesh: SurfaceMesh) -> np.ndarray:
    """Per-triangle side lengths (l0 opposite vertex 0, etc.)."""
    p = mesh.positions
    t = mesh.triangles
    l0 = np.linalg.norm(p[t[:, 1]] - p[t[:, 2]], axis=1)
    l1 = np.linalg.norm(p[t[:, 2]] - p[t[:, 0]], axis=1)
    l2 = np.linalg.norm(p[t[:, 0]] - p[t[:, 1]], axis=1)
    return np.column_stack([l0, l1, l2])


def _corner_angles(lengths: np.ndarray) -> np.ndarray:
    """Interior angle at each triangle corner from the law of cosines."""
    l0, l1, l2 = lengths[:, 0], lengths[:, 1], lengths[:, 2]
    if np.any(lengths <= 0):
        raise FlattenError("degenerate edge of zero length")

    def angle(opp, s1, s2):
        c = (s1**2 + s2**2 - opp**2) / (2 * s1 * s2)
        return np.arccos(np.clip(c, -1.0, 1.0))

    return np.column_stack([angle(l0, l1, l2), angle(l1, l2, l0), angle(l2, l0, l1)])


def _cotan_laplacian(
    mesh: SurfaceMesh, angles: np.ndarray, clamp_negative: bool = False
) -> sp.csr_matrix:
    """Intrinsic cotan operator: (Au)_i = sum_j w_ij (u_i - u_j).

    With clamp_negative, weights are floored at a small positive value, which
    trades exact conformality for a Tutte-style no-flip tendency; used only as
    a fallback extension operator on badly crumpled (e.g. depth-quantized)
    geometry.
    """
    t = mesh.triangles
    n = len(mesh.positions)
    cot = np.cos(angles) / np.maximum(np.sin(angles), 1e-14)
    if clamp_negative:
        cot = np.maximum(cot, 1e-3)
    rows, cols, vals = [], [], []
    for corner, (i, j) in enumerate([(1, 2), (2, 0), (0, 1)]):
        w = 0.5 * cot[:, corner]
        rows += [t[:, i], t[:, j], t[:, i], t[:, j]]
        cols += [t[:, j], t[:, i], t[:, i], t[:, j]]
        vals += [-w, -w, w, w]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _vertex_curvatures(mesh: SurfaceMesh, angles: np.ndarray, is_boundary: np.ndarray) -> np.ndarray:
    n = len(mesh.positions)
    angle_sum = np.zeros(n)
    np.add.at(angle_sum, mesh.triangles.ravel(), angles.ravel())
    curv = np.where(is_boundary, np.pi - angle_sum, 2 * np.pi - angle_sum)
    return curv


def _layout_boundary(lengths: np.ndarray, turning: np.ndarray) -> np.ndarray:
    """Lay out the boundary as a closed planar curve.

    `lengths[i]` is the target length of boundary edge i -> i+1; `turning[i]`
    the target exterior angle at boundary vertex i. Turning-angle closure is
    exact by Gauss-Bonnet; the residual endpoint gap is repaired by the
    least-squares length adjustment (minimal relative length change subject
    to closure).
    """
    m = len(lengths)
    phi = np.cumsum(turning) - turning[0]  # edge i direction; edge 0 along +x
    tangents = np.column_stack([np.cos(phi), np.sin(phi)])

    gap = tangents.T @ lengths
    mat = (tangents * lengths[:, None]).T @ tangents  # 2x2
    try:
        lam = np.linalg.solve(mat, gap)
    except np.linalg.LinAlgError as exc:
        raise FlattenError(f"boundary layout is degenerate: {exc}") from exc
    adjusted = lengths * (1.0 - tangents @ lam)
    if np.any(adjusted <= 0):
        raise FlattenError("boundary closure would invert an edge")

    pos = np.zeros((m, 2))
    pos[1:] = np.cumsum((adjusted[:, None] * tangents)[:-1], axis=0)
    return pos


def _untangle(uv: np.ndarray, triangles: np.ndarray, movable: np.ndarray, max_iter: int = 100) -> np.ndarray:
    """Repair isolated inverted triangles (noisy rim slivers).

    Each movable vertex of a flipped triangle is pushed along the inward
    normal of its opposite edge by the height deficit plus a small margin;
    boundary vertices never move. Iterates because a push can brush a
    neighboring triangle.
    """
    uv = uv.copy()

    def signed_areas():
        a = uv[triangles[:, 0]]
        b = uv[triangles[:, 1]]
        c = uv[triangles[:, 2]]
        return 0.5 * (
            (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
            - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        )

    for _ in range(max_iter):
        areas = signed_areas()
        bad = np.nonzero(areas <= 0)[0]
        if len(bad) == 0:
            return uv
        progressed = False
        for ti in bad:
            tri = triangles[ti]
            for corner in range(3):
                v = int(tri[corner])
                if not movable[v]:
                    continue
                a = uv[int(tri[(corner + 1) % 3])]
                b = uv[int(tri[(corner + 2) % 3])]
                edge = b - a
                elen = float(np.hypot(*edge))
                if elen == 0:
                    continue
                # signed height of v over edge (a, b); negative when flipped
                height = ((edge[0]) * (uv[v][1] - a[1]) - (edge[1]) * (uv[v][0] - a[0])) / elen
                if height <= 0:
                    normal = np.array([-edge[1], edge[0]]) / elen
                    uv[v] = uv[v] + normal * (-height + 0.05 * elen)
                    progressed = True
        if not progressed:
            break
    return uv


def flatten(mesh: SurfaceMesh) -> FlatMesh:
    """Flatten a disk-topology surface mesh with minimal conformal distortion."""
    mesh.validate()
    n = len(mesh.positions)
    loop = mesh.boundary_loop.astype(np.int64)
    is_boundary = np.zeros(n, dtype=bool)
    is_boundary[loop] = True
    interior = np.nonzero(~is_boundary)[0]

    lengths = _edge_lengths(mesh)
    angles = _corner_angles(lengths)
    A = _cotan_laplacian(mesh, angles)
    curv = _vertex_curvatures(mesh, angles, is_boundary)

    # linearized Yamabe with u = 0 on the boundary: interior curvature to zero
    u = np.zeros(n)
    if len(interior):
        A_ii = A[interior][:, interior].tocsc()
        try:
            solve_interior = spla.factorized(A_ii)
        except RuntimeError as exc:
            raise FlattenError(f"conformal system is singular: {exc}") from exc
        u[interior] = solve_interior(-curv[interior])

    # new boundary turning angles; boundary lengths keep scale e^0 = 1
    k_new = curv[loop] + np.asarray(A[loop] @ u).ravel()

    p = mesh.positions
    nxt = np.roll(loop, -1)
    boundary_lengths = np.linalg.norm(p[nxt] - p[loop], axis=1)
    gamma = _layout_boundary(boundary_lengths, k_new)

    def extend(op_matrix, boundary_uv) -> FlatMesh:
        uv = np.zeros((n, 2))
        uv[loop] = boundary_uv
        if len(interior):
            op_ii = op_matrix[interior][:, interior].tocsc()
            rhs = -op_matrix[interior][:, loop] @ boundary_uv
            solve = spla.factorized(op_ii)
            uv[interior, 0] = solve(rhs[:, 0])
            uv[interior, 1] = solve(rhs[:, 1])
        return FlatMesh(
            uv=uv, triangles=mesh.triangles, boundary_loop=mesh.boundary_loop,
            pixels=mesh.pixels,
        )

    # harmonic extension of both coordinates from the laid-out boundary.
    # Crumpled inputs (depth noise or mm quantization) can invert isolated
    # rim slivers; retry with clamped positive weights, then repair leftovers
    # by local untangling. Exact inputs never fall through the first attempt.
    flat = extend(A, gamma)
    if np.any(flat.triangle_areas() <= 0):
        flat = extend(_cotan_laplacian(mesh, angles, clamp_negative=True), gamma)
    if np.any(flat.triangle_areas() <= 0):
        repaired = _untangle(flat.uv, mesh.triangles, movable=~is_boundary)
        flat = FlatMesh(
            uv=repaired, triangles=mesh.triangles, boundary_loop=mesh.boundary_loop,
            pixels=mesh.pixels,
        )
    uv = flat.uv
    areas = flat.triangle_areas()
    if np.all(areas < 0):
        # consistent reflection: mirror rather than reject
        uv = uv * np.array([1.0, -1.0])
        flat = FlatMesh(
            uv=uv, triangles=mesh.triangles, boundary_loop=mesh.boundary_loop, pixels=mesh.pixels
        )
        areas = flat.triangle_areas()
    if np.any(areas <= 0):
        raise FlattenError(
            f"{int((areas <= 0).sum())} flipped triangles after flattening"
        )

    # preserve total surface area, drop the layout's arbitrary placement
    scale = float(np.sqrt(mesh.surface_area() / flat.area()))
    uv = (uv - uv.mean(axis=0)) * scale
    return FlatMesh(
        uv=uv, triangles=mesh.triangles, boundary_loop=mesh.boundary_loop, pixels=mesh.pixels
    )


def extrude(flat: FlatMesh, thickness: float) -> PatchSolid:
    """Extrude the flat patch into a watertight solid of the given thickness."""
    if thickness <= 0:
        raise FlattenError(f"thickness must be positive, got {thickness}")
    areas = flat.triangle_areas()
    if np.any(areas <= 0):
        raise FlattenError("flat mesh has flipped triangles")

    n = len(flat.uv)
    bottom = np.column_stack([flat.uv, np.zeros(n)])
    top = np.column_stack([flat.uv, np.full(n, thickness)])
    vertices = np.vstack([bottom, top])

    top_tris = flat.triangles + n  # CCW from +z: outward up
    bottom_tris = flat.triangles[:, [0, 2, 1]]  # flipped: outward down

    loop = flat.boundary_loop.astype(np.int64)
    nxt = np.roll(loop, -1)
    # CCW top loop: outward wall normals point right of the walk direction
    wall_a = np.column_stack([loop, nxt, nxt + n])
    wall_b = np.column_stack([loop, nxt + n, loop + n])

    triangles = np.vstack([bottom_tris, top_tris, wall_a, wall_b]).astype(np.int32)
    solid = PatchSolid(
        vertices=vertices,
        triangles=triangles,
        thickness=float(thickness),
        flat_area=flat.area(),
    )
    if not solid.is_watertight():
        raise FlattenError("extruded solid is not watertight")
    return solid
