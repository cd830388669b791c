"""Pure-NumPy/SciPy versions of the compiled kernels.

Same contracts as ``_core``; used when the extension is not built.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


def count_within_radius(points: np.ndarray, query_idx: np.ndarray, radius: float) -> np.ndarray:
    """Count, for each query point, the other points within `radius` (inclusive)."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    query_idx = np.asarray(query_idx, dtype=np.int64)
    if len(points) == 0 or len(query_idx) == 0:
        return np.zeros(len(query_idx), dtype=np.int64)
    tree = cKDTree(points)
    counts = tree.query_ball_point(points[query_idx], r=radius, return_length=True)
    # the query point is in the tree and always counts itself
    return np.asarray(counts, dtype=np.int64) - 1


def points_in_polygon(pts: np.ndarray, poly: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Winding-number inclusion test; points within `tol` of the polyline are inside."""
    pts = np.asarray(pts, dtype=np.float64)
    poly = np.asarray(poly, dtype=np.float64)
    px = pts[:, 0][:, None]
    py = pts[:, 1][:, None]
    ax, ay = poly[:, 0][None, :], poly[:, 1][None, :]
    bx = np.roll(poly[:, 0], -1)[None, :]
    by = np.roll(poly[:, 1], -1)[None, :]

    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay)
    len2 = (bx - ax) ** 2 + (by - ay) ** 2
    on_edge = (np.abs(cross) <= tol) & (dot >= -tol) & (dot <= len2 + tol)

    up = (ay <= py) & (by > py) & (cross > 0)
    down = (ay > py) & (by <= py) & (cross < 0)
    wn = up.sum(axis=1) - down.sum(axis=1)
    return ((wn != 0) | on_edge.any(axis=1)).astype(np.uint8)
