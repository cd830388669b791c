# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops: spatial-hash neighbor counting and batch point-in-polygon."""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def count_within_radius(double[:, ::1] points, long long[::1] query_idx, double radius):
    """Count, for each query point, the other points within `radius` (inclusive).

    Queries are indices into `points`; the query point itself is excluded.
    Uniform hash grid with cell size = radius, so each query scans 27 cells.
    """
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t m = query_idx.shape[0]
    counts = np.zeros(m, dtype=np.int64)
    cdef long long[::1] counts_v = counts
    if n == 0 or m == 0:
        return counts

    cdef double inv = 1.0 / radius
    cdef double r2 = radius * radius
    cdef double minx = points[0, 0], miny = points[0, 1], minz = points[0, 2]
    cdef Py_ssize_t i
    for i in range(n):
        if points[i, 0] < minx: minx = points[i, 0]
        if points[i, 1] < miny: miny = points[i, 1]
        if points[i, 2] < minz: minz = points[i, 2]

    # 21-bit packed cell key; grids beyond 2^21 cells per axis would need a
    # larger radius, which callers always have (radius ~ point pitch).
    keys = np.empty(n, dtype=np.int64)
    cdef long long[::1] keys_v = keys
    cdef long long cx, cy, cz
    for i in range(n):
        cx = <long long>floor((points[i, 0] - minx) * inv)
        cy = <long long>floor((points[i, 1] - miny) * inv)
        cz = <long long>floor((points[i, 2] - minz) * inv)
        keys_v[i] = (cx << 42) | (cy << 21) | cz

    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    cdef long long[::1] order_v = order
    cdef long long[::1] skeys_v = sorted_keys

    cdef Py_ssize_t q, j, lo, hi, mid, p
    cdef long long qi, key, base_x, base_y, base_z
    cdef int dx, dy, dz
    cdef double px, py, pz, ddx, ddy, ddz, dd
    cdef long long cnt
    for q in range(m):
        qi = query_idx[q]
        px = points[qi, 0]
        py = points[qi, 1]
        pz = points[qi, 2]
        base_x = <long long>floor((px - minx) * inv)
        base_y = <long long>floor((py - miny) * inv)
        base_z = <long long>floor((pz - minz) * inv)
        cnt = 0
        for dx in range(-1, 2):
            for dy in range(-1, 2):
                for dz in range(-1, 2):
                    cx = base_x + dx
                    cy = base_y + dy
                    cz = base_z + dz
                    if cx < 0 or cy < 0 or cz < 0:
                        continue
                    key = (cx << 42) | (cy << 21) | cz
                    # binary search for the cell's slice in sorted_keys
                    lo = 0
                    hi = n
                    while lo < hi:
                        mid = (lo + hi) // 2
                        if skeys_v[mid] < key:
                            lo = mid + 1
                        else:
                            hi = mid
                    j = lo
                    while j < n and skeys_v[j] == key:
                        p = order_v[j]
                        j += 1
                        if p == qi:
                            continue
                        ddx = points[p, 0] - px
                        ddy = points[p, 1] - py
                        ddz = points[p, 2] - pz
                        dd = ddx * ddx + ddy * ddy + ddz * ddz
                        if dd <= r2:
                            cnt += 1
        counts_v[q] = cnt
    return counts


def points_in_polygon(double[:, ::1] pts, double[:, ::1] poly, double tol=1e-12):
    """Winding-number inclusion test for a batch of points.

    Points within `tol` of the polyline count as inside.
    Returns a uint8 mask of length len(pts).
    """
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t k = poly.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] out_v = out
    cdef Py_ssize_t i, j, jn
    cdef double px, py, ax, ay, bx, by, cross, dot, len2
    cdef int wn, on_edge
    for i in range(n):
        px = pts[i, 0]
        py = pts[i, 1]
        wn = 0
        on_edge = 0
        for j in range(k):
            jn = j + 1
            if jn == k:
                jn = 0
            ax = poly[j, 0]
            ay = poly[j, 1]
            bx = poly[jn, 0]
            by = poly[jn, 1]
            cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
            if cross <= tol and cross >= -tol:
                dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay)
                len2 = (bx - ax) * (bx - ax) + (by - ay) * (by - ay)
                if dot >= -tol and dot <= len2 + tol:
                    on_edge = 1
                    break
            if ay <= py:
                if by > py and cross > 0:
                    wn += 1
            else:
                if by <= py and cross < 0:
                    wn -= 1
        if on_edge or wn != 0:
            out_v[i] = 1
    return out
