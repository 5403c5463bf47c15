# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend.

Mirrors ``pure.py`` operation-for-operation: identical formulas in identical
order so both backends produce bit-equal results. Keep in sync when editing.
"""

from libc.math cimport atan2, ceil, cos, fabs, floor, fmod, sin, sqrt, tan, INFINITY, M_PI

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double TOUCH_EPS = 1e-9


cpdef double norm_angle(double a):
    """Wrap an angle to (-pi, pi]."""
    a = fmod(a, 2.0 * M_PI)
    if a > M_PI:
        a -= 2.0 * M_PI
    elif a <= -M_PI:
        a += 2.0 * M_PI
    return a


cdef double _project_gap(const double[:, ::1] poly_a, const double[:, ::1] poly_b,
                         double nx, double ny) noexcept nogil:
    cdef double amin, amax, bmin, bmax, d, g1, g2
    cdef Py_ssize_t i
    amin = amax = poly_a[0, 0] * nx + poly_a[0, 1] * ny
    for i in range(1, poly_a.shape[0]):
        d = poly_a[i, 0] * nx + poly_a[i, 1] * ny
        if d < amin:
            amin = d
        elif d > amax:
            amax = d
    bmin = bmax = poly_b[0, 0] * nx + poly_b[0, 1] * ny
    for i in range(1, poly_b.shape[0]):
        d = poly_b[i, 0] * nx + poly_b[i, 1] * ny
        if d < bmin:
            bmin = d
        elif d > bmax:
            bmax = d
    g1 = bmin - amax
    g2 = amin - bmax
    return g1 if g1 > g2 else g2


cpdef bint convex_overlap(const double[:, ::1] poly_a, const double[:, ::1] poly_b):
    """Separating-axis overlap test; touching within TOUCH_EPS counts."""
    cdef Py_ssize_t i, j, n, which
    cdef double ex, ey, ln
    cdef const double[:, ::1] poly
    for which in range(2):
        poly = poly_a if which == 0 else poly_b
        n = poly.shape[0]
        for i in range(n):
            j = i + 1 if i + 1 < n else 0
            ex = poly[j, 0] - poly[i, 0]
            ey = poly[j, 1] - poly[i, 1]
            ln = sqrt(ex * ex + ey * ey)
            if ln < 1e-12:
                continue
            if _project_gap(poly_a, poly_b, ey / ln, -ex / ln) > TOUCH_EPS:
                return False
    return True


cpdef bint point_in_convex(double px, double py, const double[:, ::1] poly, double eps=1e-9):
    """Point containment in a CCW convex polygon, inclusive within eps."""
    cdef Py_ssize_t i, j, n = poly.shape[0]
    cdef double cr
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        cr = (poly[j, 0] - poly[i, 0]) * (py - poly[i, 1]) - \
             (poly[j, 1] - poly[i, 1]) * (px - poly[i, 0])
        if cr < -eps:
            return False
    return True


cpdef bint point_in_triangles(double px, double py, const double[:, :, ::1] tris, double eps=1e-9):
    """True if the point lies in any of the CCW triangles."""
    cdef Py_ssize_t k, i, j
    cdef double cr
    cdef bint inside
    for k in range(tris.shape[0]):
        inside = True
        for i in range(3):
            j = i + 1 if i < 2 else 0
            cr = (tris[k, j, 0] - tris[k, i, 0]) * (py - tris[k, i, 1]) - \
                 (tris[k, j, 1] - tris[k, i, 1]) * (px - tris[k, i, 0])
            if cr < -eps:
                inside = False
                break
        if inside:
            return True
    return False


cpdef double segment_point_distance(double px, double py, double ax, double ay,
                                    double bx, double by):
    cdef double dx = bx - ax
    cdef double dy = by - ay
    cdef double len2 = dx * dx + dy * dy
    cdef double t, ex, ey
    if len2 < 1e-24:
        ex = px - ax
        ey = py - ay
        return sqrt(ex * ex + ey * ey)
    t = ((px - ax) * dx + (py - ay) * dy) / len2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    ex = px - (ax + t * dx)
    ey = py - (ay + t * dy)
    return sqrt(ex * ex + ey * ey)


cpdef double polygon_min_distance(double px, double py, const double[:, ::1] poly):
    """Distance from a point to a CCW convex polygon; 0 when inside."""
    cdef Py_ssize_t i, j, n = poly.shape[0]
    cdef double best, d
    if point_in_convex(px, py, poly, 0.0):
        return 0.0
    best = INFINITY
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        d = segment_point_distance(px, py, poly[i, 0], poly[i, 1], poly[j, 0], poly[j, 1])
        if d < best:
            best = d
    return best


cpdef bint circle_polygon_overlap(double cx, double cy, double r, const double[:, ::1] poly):
    """Disc vs convex polygon; touching within TOUCH_EPS counts."""
    return polygon_min_distance(cx, cy, poly) <= r + TOUCH_EPS


cpdef double raycast_segments(double ox, double oy, double dx, double dy,
                              const double[:, ::1] segs):
    """Smallest nonnegative ray parameter hitting any segment, else +inf."""
    cdef double best = INFINITY
    cdef double sx, sy, denom, qx, qy, t, u
    cdef Py_ssize_t i
    for i in range(segs.shape[0]):
        sx = segs[i, 2] - segs[i, 0]
        sy = segs[i, 3] - segs[i, 1]
        denom = dx * sy - dy * sx
        if -1e-12 < denom < 1e-12:
            continue
        qx = segs[i, 0] - ox
        qy = segs[i, 1] - oy
        t = (qx * sy - qy * sx) / denom
        u = (qx * dy - qy * dx) / denom
        if u < -1e-12 or u > 1.0 + 1e-12:
            continue
        if t < -1e-12:
            continue
        if t < 0.0:
            t = 0.0
        if t < best:
            best = t
    return best


cpdef scan_rays(double ox, double oy, const double[::1] angles, const double[:, ::1] segs,
                double max_range):
    """Batch raycast; one clamped range per angle (max_range when no hit)."""
    cdef Py_ssize_t k, n = angles.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double t
    for k in range(n):
        t = raycast_segments(ox, oy, cos(angles[k]), sin(angles[k]), segs)
        ov[k] = max_range if t > max_range else t
    return out


cpdef tuple project_polyline(double px, double py, const double[:, ::1] pts, const double[::1] cum):
    """Closest-point projection onto a polyline -> (s, d, idx)."""
    cdef Py_ssize_t m = pts.shape[0] - 1
    cdef double best_d2 = INFINITY
    cdef Py_ssize_t best_i = 0
    cdef double best_t = 0.0
    cdef double ax, ay, dx, dy, len2, t, ex, ey, d2, s, cross, dist
    cdef Py_ssize_t i
    for i in range(m):
        ax = pts[i, 0]
        ay = pts[i, 1]
        dx = pts[i + 1, 0] - ax
        dy = pts[i + 1, 1] - ay
        len2 = dx * dx + dy * dy
        t = ((px - ax) * dx + (py - ay) * dy) / len2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        ex = px - (ax + t * dx)
        ey = py - (ay + t * dy)
        d2 = ex * ex + ey * ey
        if d2 < best_d2:
            best_d2 = d2
            best_i = i
            best_t = t
    i = best_i
    s = cum[i] + best_t * (cum[i + 1] - cum[i])
    if s < 0.0:
        s = 0.0
    elif s > cum[cum.shape[0] - 1]:
        s = cum[cum.shape[0] - 1]
    dx = pts[i + 1, 0] - pts[i, 0]
    dy = pts[i + 1, 1] - pts[i, 1]
    cross = dx * (py - pts[i, 1]) - dy * (px - pts[i, 0])
    dist = sqrt(best_d2)
    return s, (dist if cross >= 0.0 else -dist), i


cpdef tuple polyline_point_at(const double[:, ::1] pts, const double[::1] cum, double s):
    """Point and tangent heading at arc length s (clamped to the polyline)."""
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t lo = 0, hi = n, mid, i
    cdef double t, dx, dy
    if s < 0.0:
        s = 0.0
    elif s > cum[n - 1]:
        s = cum[n - 1]
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] <= s:
            lo = mid + 1
        else:
            hi = mid
    i = lo - 1
    if i < 0:
        i = 0
    elif i > n - 2:
        i = n - 2
    t = (s - cum[i]) / (cum[i + 1] - cum[i])
    dx = pts[i + 1, 0] - pts[i, 0]
    dy = pts[i + 1, 1] - pts[i, 1]
    return pts[i, 0] + t * dx, pts[i, 1] + t * dy, atan2(dy, dx)


cpdef double min_distance_polyline(double px, double py, const double[:, ::1] pts):
    """Smallest distance from a point to any polyline segment."""
    cdef double best = INFINITY
    cdef double d
    cdef Py_ssize_t i
    for i in range(pts.shape[0] - 1):
        d = segment_point_distance(px, py, pts[i, 0], pts[i, 1],
                                   pts[i + 1, 0], pts[i + 1, 1])
        if d < best:
            best = d
    return best


cpdef tuple bicycle_step(double x, double y, double th, double v, double accel,
                         double steer, double dt, int substeps, double wheelbase,
                         double max_speed):
    """Forward-Euler kinematic bicycle; returns (x, y, heading, speed)."""
    cdef double h = dt / substeps
    cdef double tan_s = tan(steer)
    cdef double nx, ny, nth, nv
    cdef int k
    for k in range(substeps):
        nx = x + v * cos(th) * h
        ny = y + v * sin(th) * h
        nth = th + v * tan_s / wheelbase * h
        nv = v + accel * h
        if nv < 0.0:
            nv = 0.0
        elif nv > max_speed:
            nv = max_speed
        x = nx
        y = ny
        th = nth
        v = nv
    return x, y, norm_angle(th), v


cpdef fill_convex_cells(cnp.uint8_t[:, ::1] mask, const double[:, ::1] poly, double eps=1e-12):
    """Set mask cells whose centers lie inside a convex polygon (grid coords)."""
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    cdef Py_ssize_t n = poly.shape[0]
    cdef double area2 = 0.0
    cdef double sign, xmin, xmax, ymin, ymax, cr, px, py
    cdef Py_ssize_t i, j, r, c
    cdef long c0, c1, r0, r1
    cdef bint inside
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        area2 += poly[i, 0] * poly[j, 1] - poly[j, 0] * poly[i, 1]
    sign = 1.0 if area2 >= 0.0 else -1.0
    xmin = xmax = poly[0, 0]
    ymin = ymax = poly[0, 1]
    for i in range(1, n):
        if poly[i, 0] < xmin:
            xmin = poly[i, 0]
        elif poly[i, 0] > xmax:
            xmax = poly[i, 0]
        if poly[i, 1] < ymin:
            ymin = poly[i, 1]
        elif poly[i, 1] > ymax:
            ymax = poly[i, 1]
    c0 = <long>floor(xmin - 0.5)
    c1 = <long>ceil(xmax - 0.5)
    r0 = <long>floor(ymin - 0.5)
    r1 = <long>ceil(ymax - 0.5)
    if c0 < 0:
        c0 = 0
    if r0 < 0:
        r0 = 0
    if c1 > w - 1:
        c1 = w - 1
    if r1 > h - 1:
        r1 = h - 1
    for r in range(r0, r1 + 1):
        py = r + 0.5
        for c in range(c0, c1 + 1):
            px = c + 0.5
            inside = True
            for i in range(n):
                j = i + 1 if i + 1 < n else 0
                cr = (poly[j, 0] - poly[i, 0]) * (py - poly[i, 1]) - \
                     (poly[j, 1] - poly[i, 1]) * (px - poly[i, 0])
                if sign * cr < -eps:
                    inside = False
                    break
            if inside:
                mask[r, c] = 1


cpdef fill_capsule_cells(cnp.uint8_t[:, ::1] mask, double x0, double y0,
                         double x1, double y1, double half_width):
    """Set mask cells whose centers are within half_width of a segment."""
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    cdef double lo_x = (x0 if x0 < x1 else x1) - half_width
    cdef double hi_x = (x0 if x0 > x1 else x1) + half_width
    cdef double lo_y = (y0 if y0 < y1 else y1) - half_width
    cdef double hi_y = (y0 if y0 > y1 else y1) + half_width
    cdef long c0 = <long>floor(lo_x - 0.5)
    cdef long c1 = <long>ceil(hi_x - 0.5)
    cdef long r0 = <long>floor(lo_y - 0.5)
    cdef long r1 = <long>ceil(hi_y - 0.5)
    cdef Py_ssize_t r, c
    if c0 < 0:
        c0 = 0
    if r0 < 0:
        r0 = 0
    if c1 > w - 1:
        c1 = w - 1
    if r1 > h - 1:
        r1 = h - 1
    for r in range(r0, r1 + 1):
        for c in range(c0, c1 + 1):
            if segment_point_distance(c + 0.5, r + 0.5, x0, y0, x1, y1) <= half_width:
                mask[r, c] = 1
