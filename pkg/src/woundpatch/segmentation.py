"""From score rasters to a confirmed wound boundary.

Pixel conventions used throughout: a pixel (x, y) is column x / row y of the
raster and occupies the unit square [x, x+1] x [y, y+1]; its center is at
(x + 0.5, y + 0.5). Components are 4-connected; boundaries trace pixel borders
so that polygon area equals the (hole-filled) pixel count exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _kernels
from .capture import ScoreMap
from .errors import (
    EmptyMaskError,
    PolygonError,
    SeedBelowThresholdError,
    SeedOutsideRasterError,
    SelfIntersectionError,
)

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
UI_SIMPLIFY_TOLERANCE_PX = 1.5


@dataclass(frozen=True)
class AttentionStack:
    """Per-branch score logits (pre-sigmoid) and attention logits (pre-softmax)."""

    score_logits: np.ndarray  # (k, h, w)
    attention_logits: np.ndarray  # (k, h, w)

    def __post_init__(self):
        s, a = self.score_logits, self.attention_logits
        if s.ndim != 3 or a.shape != s.shape:
            raise PolygonError(
                f"score {s.shape} and attention {a.shape} must be matching (k, h, w) stacks"
            )
        if s.shape[0] < 1:
            raise PolygonError("need at least one branch")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(a))):
            raise PolygonError("logits must be finite")


def fuse_attention(stack: AttentionStack) -> ScoreMap:
    """Attention-weighted fusion: softmax weights over branches x sigmoid scores."""
    att = stack.attention_logits.astype(np.float64)
    att = att - att.max(axis=0, keepdims=True)
    weights = np.exp(att)
    weights /= weights.sum(axis=0, keepdims=True)
    scores = 1.0 / (1.0 + np.exp(-stack.score_logits.astype(np.float64)))
    fused = np.einsum("khw,khw->hw", weights, scores)
    return ScoreMap(values=np.clip(fused, 0.0, 1.0).astype(np.float32))


def select_component(score: ScoreMap, seed: tuple[int, int], threshold: float) -> np.ndarray:
    """4-connected component of {score >= threshold} containing the seed pixel."""
    if not (0.0 <= threshold <= 1.0):
        raise PolygonError(f"threshold {threshold} outside [0, 1]")
    values = score.values
    x, y = int(seed[0]), int(seed[1])
    h, w = values.shape
    if not (0 <= x < w and 0 <= y < h):
        raise SeedOutsideRasterError(f"seed ({x}, {y}) outside raster {w}x{h}")
    if values[y, x] < threshold:
        raise SeedBelowThresholdError(
            f"seed score {values[y, x]:.3f} below threshold {threshold:.3f}"
        )
    above = values >= threshold
    labels, _ = ndimage.label(above, structure=FOUR_CONNECTED)
    return labels == labels[y, x]


# ---------------------------------------------------------------------------
# boundary polygons


def _signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_intersect_report(vertices: np.ndarray) -> list[tuple[int, int]]:
    """Indices (i, j) of non-adjacent edges that intersect, plus degenerate spikes."""
    n = len(vertices)
    a = vertices
    b = np.roll(vertices, -1, axis=0)
    bad: list[tuple[int, int]] = []

    # zero-length edges and 180-degree spikes at a vertex
    edge = b - a
    lengths2 = np.einsum("ij,ij->i", edge, edge)
    for i in np.nonzero(lengths2 == 0)[0]:
        bad.append((int(i), int(i)))
    nxt = np.roll(edge, -1, axis=0)
    cross_adj = edge[:, 0] * nxt[:, 1] - edge[:, 1] * nxt[:, 0]
    dot_adj = np.einsum("ij,ij->i", edge, nxt)
    for i in np.nonzero((cross_adj == 0) & (dot_adj < 0))[0]:
        bad.append((int(i), int((i + 1) % n)))

    # all non-adjacent pairs, vectorized orientation tests
    ii, jj = np.triu_indices(n, k=2)
    keep = ~((ii == 0) & (jj == n - 1))
    ii, jj = ii[keep], jj[keep]
    if len(ii) == 0:
        return bad
    p1, p2 = a[ii], b[ii]
    p3, p4 = a[jj], b[jj]

    def orient(p, q, r):
        return (q[:, 0] - p[:, 0]) * (r[:, 1] - p[:, 1]) - (q[:, 1] - p[:, 1]) * (
            r[:, 0] - p[:, 0]
        )

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    proper = (np.sign(d1) * np.sign(d2) < 0) & (np.sign(d3) * np.sign(d4) < 0)

    def on_segment(p, q, r):
        return (
            (np.minimum(p[:, 0], q[:, 0]) <= r[:, 0])
            & (r[:, 0] <= np.maximum(p[:, 0], q[:, 0]))
            & (np.minimum(p[:, 1], q[:, 1]) <= r[:, 1])
            & (r[:, 1] <= np.maximum(p[:, 1], q[:, 1]))
        )

    touching = (
        ((d1 == 0) & on_segment(p3, p4, p1))
        | ((d2 == 0) & on_segment(p3, p4, p2))
        | ((d3 == 0) & on_segment(p1, p2, p3))
        | ((d4 == 0) & on_segment(p1, p2, p4))
    )
    for i, j in zip(ii[proper | touching], jj[proper | touching]):
        bad.append((int(i), int(j)))
    return bad


@dataclass(frozen=True)
class BoundaryPolygon:
    """Closed simple polygon in pixel coordinates, counter-clockwise.

    Construct via `redraw` (validating) or `from_vertices`; `extract_boundary`
    builds directly from traced masks, which are simple by construction.
    """

    vertices: np.ndarray  # (n, 2) float64
    area: float = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise PolygonError(f"polygon needs >= 3 (x, y) vertices, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise PolygonError("polygon vertices must be finite")
        object.__setattr__(self, "vertices", v)
        area = _signed_area(v)
        if area <= 0:
            raise PolygonError(f"polygon must be counter-clockwise (signed area {area})")
        object.__setattr__(self, "area", area)

    @classmethod
    def from_vertices(cls, vertices, validate: bool = True) -> "BoundaryPolygon":
        v = np.asarray(vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise PolygonError(f"polygon needs >= 3 (x, y) vertices, got shape {v.shape}")
        if _signed_area(v) < 0:
            v = v[::-1].copy()
        if validate:
            bad = _segments_intersect_report(v)
            if bad:
                raise SelfIntersectionError(
                    f"polygon self-intersects at edge pairs {bad[:8]}", segments=bad
                )
        return cls(vertices=v)

    def contains_points(self, pts: np.ndarray) -> np.ndarray:
        """Winding-number test; points on the polyline count as inside."""
        return _kernels.points_in_polygon(
            np.ascontiguousarray(pts, dtype=np.float64), self.vertices
        ).astype(bool)

    def bounds(self) -> tuple[float, float, float, float]:
        v = self.vertices
        return float(v[:, 0].min()), float(v[:, 1].min()), float(v[:, 0].max()), float(v[:, 1].max())


def redraw(vertices) -> BoundaryPolygon:
    """Validating constructor: simplicity enforced, orientation normalized to CCW."""
    return BoundaryPolygon.from_vertices(vertices, validate=True)


def move_vertex(polygon: BoundaryPolygon, index: int, new_xy: tuple[float, float]) -> BoundaryPolygon:
    """Replace one vertex; reject the edit if it breaks simplicity."""
    n = len(polygon.vertices)
    if not (0 <= index < n):
        raise PolygonError(f"vertex index {index} out of range 0..{n - 1}")
    v = polygon.vertices.copy()
    v[index] = new_xy
    return BoundaryPolygon.from_vertices(v, validate=True)


def extract_boundary(mask: np.ndarray) -> BoundaryPolygon:
    """Outer contour of a 4-connected mask as a CCW pixel-border polygon.

    Interior holes are filled first, so the polygon area equals the hole-filled
    pixel count.
    """
    mask = np.asarray(mask).astype(bool)
    if mask.ndim != 2 or not mask.any():
        raise EmptyMaskError("mask is empty")
    filled = ndimage.binary_fill_holes(mask)

    padded = np.zeros((filled.shape[0] + 2, filled.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = filled

    # Directed border edges with the interior on the left (Cartesian reading of
    # (x, y)), so the outer loop comes out counter-clockwise by signed area.
    ys, xs = np.nonzero(filled)
    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(p, q):
        edges.setdefault(p, []).append(q)

    for x, y in zip(xs, ys):
        if not padded[y, x + 1]:  # (x, y-1) empty
            add((x, y), (x + 1, y))
        if not padded[y + 1, x + 2]:  # (x+1, y) empty
            add((x + 1, y), (x + 1, y + 1))
        if not padded[y + 2, x + 1]:  # (x, y+1) empty
            add((x + 1, y + 1), (x, y + 1))
        if not padded[y + 1, x]:  # (x-1, y) empty
            add((x, y + 1), (x, y))

    # left-hand walk: prefer the sharpest left turn at pinch vertices
    left_of = {(1, 0): (0, 1), (0, 1): (-1, 0), (-1, 0): (0, -1), (0, -1): (1, 0)}
    right_of = {v: k for k, v in left_of.items()}

    def trace_loop(start):
        loop = [start]
        prev_dir = None
        current = start
        while True:
            options = edges[current]
            if len(options) == 1 or prev_dir is None:
                nxt = options[0]
            else:
                nxt = None
                for want in (left_of[prev_dir], prev_dir, right_of[prev_dir]):
                    for cand in options:
                        d = (cand[0] - current[0], cand[1] - current[1])
                        if d == want:
                            nxt = cand
                            break
                    if nxt is not None:
                        break
                if nxt is None:
                    nxt = options[0]
            options.remove(nxt)
            if not options:
                del edges[current]
            prev_dir = (nxt[0] - current[0], nxt[1] - current[1])
            current = nxt
            if current == start:
                return loop
            loop.append(current)

    # holes are filled, so normally there is exactly one loop; keep the
    # largest by area if a pinch ever yields more
    best = None
    best_area = -1.0
    while edges:
        loop = trace_loop(next(iter(edges)))
        arr = np.asarray(loop, dtype=np.float64)
        area = abs(_signed_area(arr))
        if area > best_area:
            best, best_area = arr, area
    verts = best
    # drop collinear lattice points, keeping only corners
    d_in = verts - np.roll(verts, 1, axis=0)
    d_out = np.roll(verts, -1, axis=0) - verts
    corner = (d_in[:, 0] * d_out[:, 1] - d_in[:, 1] * d_out[:, 0]) != 0
    verts = verts[corner]
    if _signed_area(verts) < 0:
        verts = verts[::-1].copy()
    return BoundaryPolygon.from_vertices(verts, validate=False)


def simplify_polygon(polygon: BoundaryPolygon, tolerance: float = UI_SIMPLIFY_TOLERANCE_PX) -> np.ndarray:
    """Douglas-Peucker simplification for UI vertex dragging.

    Returns the reduced vertex array; the caller keeps the full polygon for
    geometry. The result is not guaranteed simple for adversarial inputs, so
    submissions back from the UI are re-validated by `redraw`.
    """
    v = polygon.vertices
    n = len(v)
    if n <= 4:
        return v.copy()
    # split the closed loop at two mutually far points, simplify both chains
    far = int(np.argmax(np.einsum("ij,ij->i", v - v[0], v - v[0])))
    if far == 0:
        far = n // 2
    chain_a = v[: far + 1]
    chain_b = np.vstack([v[far:], v[:1]])

    def douglas_peucker(chain: np.ndarray) -> np.ndarray:
        keep = np.zeros(len(chain), dtype=bool)
        keep[0] = keep[-1] = True
        stack = [(0, len(chain) - 1)]
        while stack:
            lo, hi = stack.pop()
            if hi - lo < 2:
                continue
            a, b = chain[lo], chain[hi]
            ab = b - a
            seg = chain[lo + 1 : hi]
            denom = np.hypot(*ab)
            if denom == 0:
                dist = np.hypot(*(seg - a).T)
            else:
                dist = np.abs(ab[0] * (seg[:, 1] - a[1]) - ab[1] * (seg[:, 0] - a[0])) / denom
            imax = int(np.argmax(dist))
            if dist[imax] > tolerance:
                mid = lo + 1 + imax
                keep[mid] = True
                stack.append((lo, mid))
                stack.append((mid, hi))
        return chain[keep]

    out = np.vstack([douglas_peucker(chain_a)[:-1], douglas_peucker(chain_b)[:-1]])
    if len(out) < 3:
        return v.copy()
    return out
