"""Kernel selection: compiled extension when available, NumPy fallback otherwise.

``USING_COMPILED`` reports which implementation is active. Set the environment
variable ``WOUNDPATCH_PURE_PYTHON=1`` to force the fallback (used by the
benchmark that compares both).
"""

from __future__ import annotations

import os

from . import _fallback

if os.environ.get("WOUNDPATCH_PURE_PYTHON") == "1":
    _impl = _fallback
    USING_COMPILED = False
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        USING_COMPILED = True
    except ImportError:
        _impl = _fallback
        USING_COMPILED = False


def count_within_radius(points, query_idx, radius):
    import numpy as np

    points = np.ascontiguousarray(points, dtype=np.float64)
    query_idx = np.ascontiguousarray(query_idx, dtype=np.int64)
    return _impl.count_within_radius(points, query_idx, float(radius))


def points_in_polygon(pts, poly, tol=1e-12):
    import numpy as np

    pts = np.ascontiguousarray(pts, dtype=np.float64)
    poly = np.ascontiguousarray(poly, dtype=np.float64)
    return _impl.points_in_polygon(pts, poly, float(tol))
