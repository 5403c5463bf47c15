"""Pure-Python kernel backend.

Reference implementation of the numeric hot paths. The compiled backend in
``_speedups.pyx`` mirrors these functions operation-for-operation so both
produce identical floating-point results; keep the two in sync when editing.

Conventions shared by both backends:
  * polygons are (n, 2) float64 arrays, vertices CCW;
  * triangles are (k, 3, 2) float64 arrays, each triangle CCW;
  * segments are (n, 4) float64 arrays of (ax, ay, bx, by);
  * angles are radians, normalized to (-pi, pi].
"""

import math

import numpy as np

# Boundaries closer than this count as touching (= overlapping).
TOUCH_EPS = 1e-9


def norm_angle(a):
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a > math.pi:
        a -= 2.0 * math.pi
    elif a <= -math.pi:
        a += 2.0 * math.pi
    return a


def _project_gap(poly_a, poly_b, nx, ny):
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


def convex_overlap(poly_a, poly_b):
    """Separating-axis overlap test; touching within TOUCH_EPS counts."""
    for poly in (poly_a, poly_b):
        n = poly.shape[0]
        for i in range(n):
            j = i + 1 if i + 1 < n else 0
            ex = poly[j, 0] - poly[i, 0]
            ey = poly[j, 1] - poly[i, 1]
            ln = math.sqrt(ex * ex + ey * ey)
            if ln < 1e-12:
                continue
            if _project_gap(poly_a, poly_b, ey / ln, -ex / ln) > TOUCH_EPS:
                return False
    return True


def point_in_convex(px, py, poly, eps=1e-9):
    """Point containment in a CCW convex polygon, inclusive within eps."""
    n = poly.shape[0]
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        cr = (poly[j, 0] - poly[i, 0]) * (py - poly[i, 1]) - (
            poly[j, 1] - poly[i, 1]
        ) * (px - poly[i, 0])
        if cr < -eps:
            return False
    return True


def point_in_triangles(px, py, tris, eps=1e-9):
    """True if the point lies in any of the CCW triangles."""
    for k in range(tris.shape[0]):
        inside = True
        for i in range(3):
            j = i + 1 if i < 2 else 0
            cr = (tris[k, j, 0] - tris[k, i, 0]) * (py - tris[k, i, 1]) - (
                tris[k, j, 1] - tris[k, i, 1]
            ) * (px - tris[k, i, 0])
            if cr < -eps:
                inside = False
                break
        if inside:
            return True
    return False


def segment_point_distance(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    len2 = dx * dx + dy * dy
    if len2 < 1e-24:
        ex = px - ax
        ey = py - ay
        return math.sqrt(ex * ex + ey * ey)
    t = ((px - ax) * dx + (py - ay) * dy) / len2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    ex = px - (ax + t * dx)
    ey = py - (ay + t * dy)
    return math.sqrt(ex * ex + ey * ey)


def polygon_min_distance(px, py, poly):
    """Distance from a point to a CCW convex polygon; 0 when inside."""
    if point_in_convex(px, py, poly, 0.0):
        return 0.0
    n = poly.shape[0]
    best = math.inf
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        d = segment_point_distance(
            px, py, poly[i, 0], poly[i, 1], poly[j, 0], poly[j, 1]
        )
        if d < best:
            best = d
    return best


def circle_polygon_overlap(cx, cy, r, poly):
    """Disc vs convex polygon; touching within TOUCH_EPS counts."""
    return polygon_min_distance(cx, cy, poly) <= r + TOUCH_EPS


def raycast_segments(ox, oy, dx, dy, segs):
    """Smallest nonnegative ray parameter hitting any segment, else +inf.

    The ray direction (dx, dy) must be unit length so the parameter is a
    metric distance. Rays parallel to a segment never hit it.
    """
    best = math.inf
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
    # Arithmetic on segs elements yields numpy scalars; return a plain float
    # so both backends are interchangeable down to the result type.
    return float(best)


def scan_rays(ox, oy, angles, segs, max_range):
    """Batch raycast; one clamped range per angle (max_range when no hit)."""
    out = np.empty(len(angles), dtype=np.float64)
    for k in range(len(angles)):
        t = raycast_segments(ox, oy, math.cos(angles[k]), math.sin(angles[k]), segs)
        out[k] = max_range if t > max_range else t
    return out


def project_polyline(px, py, pts, cum):
    """Closest-point projection onto a polyline.

    Returns (s, d, idx): arc length of the closest point, signed lateral
    offset (positive left of travel direction), and the segment index.
    Ties between segments resolve to the smallest index.
    """
    m = pts.shape[0] - 1
    best_d2 = math.inf
    best_i = 0
    best_t = 0.0
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
    elif s > cum[-1]:
        s = cum[-1]
    dx = pts[i + 1, 0] - pts[i, 0]
    dy = pts[i + 1, 1] - pts[i, 1]
    cross = dx * (py - pts[i, 1]) - dy * (px - pts[i, 0])
    dist = math.sqrt(best_d2)
    return float(s), (dist if cross >= 0.0 else -dist), i


def polyline_point_at(pts, cum, s):
    """Point and tangent heading at arc length s (clamped to the polyline)."""
    n = pts.shape[0]
    if s < 0.0:
        s = 0.0
    elif s > cum[n - 1]:
        s = cum[n - 1]
    # first index with cum[idx] > s, minus one (segment [cum_i, cum_{i+1}))
    lo = 0
    hi = n
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
    return float(pts[i, 0] + t * dx), float(pts[i, 1] + t * dy), math.atan2(dy, dx)


def min_distance_polyline(px, py, pts):
    """Smallest distance from a point to any polyline segment."""
    best = math.inf
    for i in range(pts.shape[0] - 1):
        d = segment_point_distance(
            px, py, pts[i, 0], pts[i, 1], pts[i + 1, 0], pts[i + 1, 1]
        )
        if d < best:
            best = d
    return best


def bicycle_step(x, y, th, v, accel, steer, dt, substeps, wheelbase, max_speed):
    """Forward-Euler kinematic bicycle; returns (x, y, heading, speed).

    Derivatives use the state at the start of each sub-step; speed is clamped
    to [0, max_speed] after every sub-step. Commands must be pre-clamped.
    """
    h = dt / substeps
    tan_s = math.tan(steer)
    for _ in range(substeps):
        nx = x + v * math.cos(th) * h
        ny = y + v * math.sin(th) * h
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


def fill_convex_cells(mask, poly, eps=1e-12):
    """Set mask cells whose centers lie inside a convex polygon.

    The polygon is given in continuous grid coordinates where the center of
    cell (row, col) sits at (col + 0.5, row + 0.5) — i.e. x is the column
    axis and y the row axis. Either winding is accepted.
    """
    h, w = mask.shape
    n = poly.shape[0]
    area2 = 0.0
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        area2 += poly[i, 0] * poly[j, 1] - poly[j, 0] * poly[i, 1]
    sign = 1.0 if area2 >= 0.0 else -1.0
    c0 = int(math.floor(poly[:, 0].min() - 0.5))
    c1 = int(math.ceil(poly[:, 0].max() - 0.5))
    r0 = int(math.floor(poly[:, 1].min() - 0.5))
    r1 = int(math.ceil(poly[:, 1].max() - 0.5))
    c0 = max(c0, 0)
    r0 = max(r0, 0)
    c1 = min(c1, w - 1)
    r1 = min(r1, h - 1)
    if c1 < c0 or r1 < r0:
        return
    cols = np.arange(c0, c1 + 1, dtype=np.float64) + 0.5
    rows = np.arange(r0, r1 + 1, dtype=np.float64) + 0.5
    cc = cols[None, :]
    rr = rows[:, None]
    inside = np.ones((r1 - r0 + 1, c1 - c0 + 1), dtype=bool)
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        cr = (poly[j, 0] - poly[i, 0]) * (rr - poly[i, 1]) - (
            poly[j, 1] - poly[i, 1]
        ) * (cc - poly[i, 0])
        inside &= sign * cr >= -eps
    sub = mask[r0 : r1 + 1, c0 : c1 + 1]
    sub[inside] = 1


def fill_capsule_cells(mask, x0, y0, x1, y1, half_width):
    """Set mask cells whose centers are within half_width of a segment.

    Same grid-coordinate convention as fill_convex_cells.
    """
    h, w = mask.shape
    lo_x = min(x0, x1) - half_width
    hi_x = max(x0, x1) + half_width
    lo_y = min(y0, y1) - half_width
    hi_y = max(y0, y1) + half_width
    c0 = max(int(math.floor(lo_x - 0.5)), 0)
    c1 = min(int(math.ceil(hi_x - 0.5)), w - 1)
    r0 = max(int(math.floor(lo_y - 0.5)), 0)
    r1 = min(int(math.ceil(hi_y - 0.5)), h - 1)
    if c1 < c0 or r1 < r0:
        return
    for r in range(r0, r1 + 1):
        py = r + 0.5
        for c in range(c0, c1 + 1):
            if segment_point_distance(c + 0.5, py, x0, y0, x1, y1) <= half_width:
                mask[r, c] = 1
