"""Boundary-guided point-cloud processing.

The confirmed boundary defines a thin band (distance transform thresholded at
0.1 * sqrt(boundary area)); depth outliers are removed by radius filtering
restricted to points inside that band, which is where RGB-D sensors get
confused. Out-of-band points always pass through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _kernels
from .capture import DepthMap, Intrinsics, back_project_many
from .errors import BandError, EmptyMaskError
from .segmentation import BoundaryPolygon

BAND_DISTANCE_FACTOR = 0.1
DEFAULT_MIN_NEIGHBORS = 5
DEFAULT_RADIUS_PITCH_FACTOR = 3.0


@dataclass(frozen=True)
class ProcessingBand:
    """Pixels within `distance_px` of the boundary polyline."""

    mask: np.ndarray  # (h, w) bool
    distance_px: float

    def contains(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.intp)
        ys = np.asarray(ys, dtype=np.intp)
        h, w = self.mask.shape
        inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        out = np.zeros(xs.shape, dtype=bool)
        out[inside] = self.mask[ys[inside], xs[inside]]
        return out


@dataclass(frozen=True)
class PointCloud:
    """Back-projected wound pixels with their source image coordinates.

    `pixels` are continuous image coordinates (a pixel's center sits at
    x + 0.5, y + 0.5); `in_band` marks points subject to radius filtering.
    """

    positions: np.ndarray  # (n, 3) float64, meters
    pixels: np.ndarray  # (n, 2) float64
    in_band: np.ndarray  # (n,) bool

    def __post_init__(self):
        n = len(self.positions)
        if self.pixels.shape != (n, 2) or self.in_band.shape != (n,):
            raise BandError("point cloud arrays disagree on length")
        if n and not np.all(np.isfinite(self.positions)):
            raise BandError("point positions must be finite")

    def __len__(self) -> int:
        return len(self.positions)


def distance_transform(boundary_raster: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance (pixels) to the nearest marked boundary pixel."""
    boundary_raster = np.asarray(boundary_raster).astype(bool)
    if not boundary_raster.any():
        raise EmptyMaskError("boundary raster is empty")
    return ndimage.distance_transform_edt(~boundary_raster)


def polyline_distance(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Distance from each point to a closed polyline, vectorized per segment."""
    points = np.asarray(points, dtype=np.float64)
    a = np.asarray(vertices, dtype=np.float64)
    b = np.roll(a, -1, axis=0)
    best = np.full(len(points), np.inf)
    for s in range(len(a)):
        d = b[s] - a[s]
        len2 = d @ d
        rel = points - a[s]
        if len2 == 0:
            dist = np.hypot(rel[:, 0], rel[:, 1])
        else:
            t = np.clip((rel @ d) / len2, 0.0, 1.0)
            proj = a[s] + t[:, None] * d
            dist = np.hypot(points[:, 0] - proj[:, 0], points[:, 1] - proj[:, 1])
        np.minimum(best, dist, out=best)
    return best


def band_distance_px(boundary: BoundaryPolygon) -> float:
    """Band half-width: 0.1 * sqrt(area inside the boundary)."""
    return BAND_DISTANCE_FACTOR * float(np.sqrt(boundary.area))


def build_band(boundary: BoundaryPolygon, shape: tuple[int, int]) -> ProcessingBand:
    """Mark pixels whose centers lie within the band distance of the polyline.

    `shape` is the (height, width) of the depth raster.
    """
    h, w = shape
    d = band_distance_px(boundary)
    x0, y0, x1, y1 = boundary.bounds()
    # only pixels near the polyline can be in the band
    cx0 = max(int(np.floor(x0 - d - 1)), 0)
    cy0 = max(int(np.floor(y0 - d - 1)), 0)
    cx1 = min(int(np.ceil(x1 + d + 1)), w)
    cy1 = min(int(np.ceil(y1 + d + 1)), h)
    mask = np.zeros((h, w), dtype=bool)
    if cx1 > cx0 and cy1 > cy0:
        ys, xs = np.mgrid[cy0:cy1, cx0:cx1]
        centers = np.column_stack([xs.ravel() + 0.5, ys.ravel() + 0.5])
        dist = polyline_distance(centers, boundary.vertices)
        mask[cy0:cy1, cx0:cx1] = (dist <= d).reshape(cy1 - cy0, cx1 - cx0)
    return ProcessingBand(mask=mask, distance_px=d)


def build_cloud(
    depth: DepthMap,
    intrinsics: Intrinsics,
    boundary: BoundaryPolygon,
    band: ProcessingBand | None = None,
) -> PointCloud:
    """Back-project every valid-depth pixel whose center is inside the boundary."""
    if band is None:
        band = build_band(boundary, depth.values.shape)
    x0, y0, x1, y1 = boundary.bounds()
    cx0 = max(int(np.floor(x0)), 0)
    cy0 = max(int(np.floor(y0)), 0)
    cx1 = min(int(np.ceil(x1)), depth.width)
    cy1 = min(int(np.ceil(y1)), depth.height)
    if cx1 <= cx0 or cy1 <= cy0:
        raise EmptyMaskError("boundary lies outside the depth raster")
    ys, xs = np.mgrid[cy0:cy1, cx0:cx1]
    xs = xs.ravel()
    ys = ys.ravel()
    centers = np.column_stack([xs + 0.5, ys + 0.5])
    inside = _kernels.points_in_polygon(centers, boundary.vertices).astype(bool)
    valid = depth.values[ys, xs] > 0
    keep = inside & valid
    xs, ys = xs[keep], ys[keep]
    if len(xs) == 0:
        raise EmptyMaskError("no valid depth pixels inside the boundary")
    z = depth.values[ys, xs]
    positions = back_project_many(xs + 0.5, ys + 0.5, z, intrinsics)
    return PointCloud(
        positions=positions,
        pixels=np.column_stack([xs + 0.5, ys + 0.5]).astype(np.float64),
        in_band=band.contains(xs, ys),
    )


def default_filter_radius(cloud: PointCloud, intrinsics: Intrinsics) -> float:
    """3x the median pixel pitch back-projected at scene depth (meters)."""
    depths = cloud.positions[:, 2]
    pitch = float(np.median(depths)) * 0.5 * (1.0 / intrinsics.fx + 1.0 / intrinsics.fy)
    return DEFAULT_RADIUS_PITCH_FACTOR * pitch


def radius_filter(
    cloud: PointCloud,
    band: ProcessingBand | None = None,
    radius: float = 0.0,
    min_neighbors: int = DEFAULT_MIN_NEIGHBORS,
) -> PointCloud:
    """Drop in-band points with fewer than `min_neighbors` points within `radius`.

    Neighbor counts are taken against the whole cloud, so the result is
    identical to running an unrestricted radius filter and applying its
    verdicts only inside the band. Out-of-band points pass through untouched.
    """
    if radius <= 0:
        raise BandError(f"radius must be positive, got {radius}")
    if min_neighbors < 1:
        raise BandError(f"min_neighbors must be >= 1, got {min_neighbors}")
    if band is not None:
        xs = np.floor(cloud.pixels[:, 0]).astype(np.intp)
        ys = np.floor(cloud.pixels[:, 1]).astype(np.intp)
        in_band = band.contains(xs, ys)
    else:
        in_band = cloud.in_band
    query_idx = np.nonzero(in_band)[0].astype(np.int64)
    if len(query_idx) == 0 or len(cloud) == 0:
        return cloud
    counts = _kernels.count_within_radius(cloud.positions, query_idx, radius)
    drop = np.zeros(len(cloud), dtype=bool)
    drop[query_idx[counts < min_neighbors]] = True
    keep = ~drop
    return PointCloud(
        positions=cloud.positions[keep],
        pixels=cloud.pixels[keep],
        in_band=in_band[keep],
    )
