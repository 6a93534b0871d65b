"""2D geometry for the direct TX->RX ray.

Walls are treated as half-open segments: the start point ``a`` belongs to
the wall, the end point ``b`` does not.  A ray through the joint of two
chained walls (``a->b``, ``b->c``) therefore crosses exactly one of them,
and splitting a wall into collinear pieces never changes a crossing count.
A ray running along a wall's own line grazes it and crosses nothing; any
per-piece count there would change when the wall is subdivided.

The kernels here are written against numpy arrays so that the same code
path serves a single link and a full coverage grid.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .sitemodel import SiteModel

TOL = 1e-9  # metres
_PARALLEL_SINE = 1e-12
_BISECT_STEPS = 80


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def distance_to(self, other: Point) -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class Segment:
    """Directed segment ``a -> b``.

    Zero-length segments can be constructed (so that a site validator can
    report them) but never intersect anything.
    """

    a: Point
    b: Point

    @property
    def length(self) -> float:
        return self.a.distance_to(self.b)

    @property
    def is_degenerate(self) -> bool:
        return self.length <= TOL


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def _canonical_ray(px, py, qx, qy):
    """Order each ray's end points lexicographically.

    A closed ray has no meaningful direction; evaluating it one fixed way
    round makes ``p->q`` and ``q->p`` give bit-identical answers even at
    the tolerance boundaries.
    """
    swap = (qx < px) | ((qx == px) & (qy < py))
    return (np.where(swap, qx, px), np.where(swap, qy, py),
            np.where(swap, px, qx), np.where(swap, py, qy))


def crossing_mask(px, py, qx, qy, ax, ay, bx, by, tol=TOL, ray_closed=True):
    """Vectorised hit test of segments ``p->q`` against half-open ``a->b``.

    All arguments broadcast against each other.  With ``ray_closed`` the
    first segment includes both end points; otherwise it is half-open like
    the second one.  Returns a boolean array of the broadcast shape (at least 1-d).
    """
    px, py, qx, qy, ax, ay, bx, by = np.broadcast_arrays(
        *(np.atleast_1d(np.asarray(v, dtype=float)) for v in (px, py, qx, qy, ax, ay, bx, by)))
    if ray_closed:
        px, py, qx, qy = _canonical_ray(px, py, qx, qy)
    rx, ry = qx - px, qy - py
    sx, sy = bx - ax, by - ay
    wx, wy = ax - px, ay - py
    lr = np.hypot(rx, ry)
    ls = np.hypot(sx, sy)
    denom = _cross(rx, ry, sx, sy)
    parallel = np.abs(denom) <= _PARALLEL_SINE * lr * ls
    valid = (lr > tol) & (ls > tol)

    safe = np.where(parallel, 1.0, denom)
    tm = _cross(wx, wy, sx, sy) / safe * lr
    um = _cross(wx, wy, rx, ry) / safe * ls
    if ray_closed:
        ok_t = (tm >= -tol) & (tm <= lr + tol)
    else:
        ok_t = (tm >= -tol) & (tm < lr - tol)
    hit = ~parallel & ok_t & (um >= -tol) & (um < ls - tol)

    # a closed ray parallel to a wall grazes it (see module notes); only the
    # segment-vs-segment query looks for collinear overlap
    idx = np.nonzero(parallel & valid)
    if not ray_closed and idx[0].size:
        # positions of p and q measured along the wall
        r_x, r_y, w_x, w_y = rx[idx], ry[idx], wx[idx], wy[idx]
        s_x, s_y, l_s = sx[idx], sy[idx], ls[idx]
        off_line = np.abs(_cross(w_x, w_y, r_x, r_y)) / lr[idx]
        p0 = (-w_x * s_x - w_y * s_y) / l_s
        p1 = ((qx[idx] - ax[idx]) * s_x + (qy[idx] - ay[idx]) * s_y) / l_s
        overlap = np.where(p0 <= p1,
                           (p0 < l_s - tol) & (p1 > tol),
                           (p0 >= -tol) & (p1 < l_s - tol))
        hit[idx] = (off_line <= tol) & overlap
    return valid & hit


def segment_intersection(s1: Segment, s2: Segment, tol: float = TOL):
    """Intersection point of two half-open segments, or ``None``.

    For a collinear overlap the lexicographically smallest point of the
    overlap is returned.  The result does not depend on argument order.
    """
    if (*s2.a, *s2.b) < (*s1.a, *s1.b):
        s1, s2 = s2, s1
    p, q, a, b = s1.a, s1.b, s2.a, s2.b
    hit = crossing_mask(p.x, p.y, q.x, q.y, a.x, a.y, b.x, b.y,
                        tol=tol, ray_closed=False)
    if not hit[0]:
        return None

    rx, ry = q.x - p.x, q.y - p.y
    sx, sy = b.x - a.x, b.y - a.y
    ls = math.hypot(sx, sy)
    denom = _cross(rx, ry, sx, sy)
    if abs(denom) > _PARALLEL_SINE * math.hypot(rx, ry) * ls:
        u = _cross(a.x - p.x, a.y - p.y, rx, ry) / denom
        return Point(a.x + u * sx, a.y + u * sy)

    ux, uy = sx / ls, sy / ls
    p0 = (p.x - a.x) * ux + (p.y - a.y) * uy
    p1 = (q.x - a.x) * ux + (q.y - a.y) * uy
    lo = max(min(p0, p1), 0.0)
    hi = min(max(p0, p1), ls)
    ends = [Point(a.x + lo * ux, a.y + lo * uy), Point(a.x + hi * ux, a.y + hi * uy)]
    return min(ends, key=lambda pt: (pt.x, pt.y))


def crossing_counts(site: SiteModel, tx: Point, rx: Point) -> dict[str, int]:
    """Number of walls of each material crossed by the ray ``tx -> rx``.

    Materials that are not crossed are omitted from the result.
    """
    if tx.distance_to(rx) <= TOL:
        raise ValueError("tx and rx coincide")
    coords = site.wall_coords
    if len(coords) == 0:
        return {}
    hit = crossing_mask(tx.x, tx.y, rx.x, rx.y,
                        coords[:, 0], coords[:, 1], coords[:, 2], coords[:, 3])
    ids = site.wall_material_ids
    return dict(sorted(Counter(ids[i] for i in np.flatnonzero(hit)).items()))


def fresnel_radius(wavelength: float, d1: float, d2: float) -> float:
    """First Fresnel zone radius at the point splitting a path into d1 and d2."""
    if not wavelength > 0:
        raise ValueError(f"wavelength must be positive, got {wavelength}")
    if d1 < 0 or d2 < 0 or not d1 + d2 > 0:
        raise ValueError(f"invalid path split d1={d1}, d2={d2}")
    return math.sqrt(wavelength * d1 * d2 / (d1 + d2))


def _distance_to_filled_ellipse(x, y, a, b):
    """Distance from local-frame points to the solid ellipse x²/a²+y²/b² <= 1.

    Exterior points are handled by bisection on the Lagrange parameter of
    the closest-point problem; interior points are at distance 0.
    """
    x = np.abs(np.asarray(x, dtype=float))
    y = np.abs(np.asarray(y, dtype=float))
    a2, b2 = a * a, b * b
    inside = x * x / a2 + y * y / b2 <= 1.0
    lo = np.zeros(np.broadcast(x, y, a2, b2).shape)
    hi = np.maximum(a, b) * np.hypot(x, y) + 1.0
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        f = (a * x / (mid + a2)) ** 2 + (b * y / (mid + b2)) ** 2 - 1.0
        outside_root = f > 0
        lo = np.where(outside_root, mid, lo)
        hi = np.where(outside_root, hi, mid)
    t = 0.5 * (lo + hi)
    cx = a2 * x / (t + a2)
    cy = b2 * y / (t + b2)
    dist = np.hypot(x - cx, y - cy)
    return np.where(inside, 0.0, dist)


def clutter_mask(px, py, qx, qy, cx, cy, radius, wavelength, tol=TOL):
    """Vectorised test: does a disk encroach on the first Fresnel zone of
    ``p->q`` without touching the line of sight itself?

    The zone is the ellipse with foci p and q whose semi-minor axis is the
    mid-path Fresnel radius.  A disk that merely grazes the segment (at
    distance exactly ``radius``) is clutter, not a blocker.
    """
    px, py, qx, qy, cx, cy, radius = np.broadcast_arrays(
        *(np.atleast_1d(np.asarray(v, dtype=float)) for v in (px, py, qx, qy, cx, cy, radius)))
    px, py, qx, qy = _canonical_ray(px, py, qx, qy)
    dx, dy = qx - px, qy - py
    d = np.hypot(dx, dy)
    valid = d > tol
    d_safe = np.where(valid, d, 1.0)
    ux, uy = dx / d_safe, dy / d_safe
    mx, my = px + 0.5 * dx, py + 0.5 * dy
    along = (cx - mx) * ux + (cy - my) * uy
    across = -(cx - mx) * uy + (cy - my) * ux
    semi_minor = 0.5 * np.sqrt(wavelength * d_safe)

    s = np.clip(along + 0.5 * d_safe, 0.0, d_safe)
    seg_dist = np.hypot(cx - (px + s * ux), cy - (py + s * uy))
    blocks = seg_dist < radius - tol
    # the zone lies within semi_minor of the segment, so only disks that
    # close need the exact ellipse distance
    idx = np.nonzero(valid & ~blocks & (seg_dist <= radius + semi_minor + tol))
    out = np.zeros(d.shape, dtype=bool)
    if idx[0].size:
        b = semi_minor[idx]
        a = np.hypot(0.5 * d_safe[idx], b)
        out[idx] = _distance_to_filled_ellipse(along[idx], across[idx], a, b) <= radius[idx] + tol
    return out


def clutter_hits(site: SiteModel, tx: Point, rx: Point, wavelength: float) -> dict[str, int]:
    """Clutter objects encroaching on the Fresnel zone, counted per material."""
    if tx.distance_to(rx) <= TOL:
        raise ValueError("tx and rx coincide")
    coords = site.clutter_coords
    if len(coords) == 0:
        return {}
    hit = clutter_mask(tx.x, tx.y, rx.x, rx.y,
                       coords[:, 0], coords[:, 1], coords[:, 2], wavelength)
    ids = site.clutter_material_ids
    return dict(sorted(Counter(ids[i] for i in np.flatnonzero(hit)).items()))


def clutter_count(site: SiteModel, tx: Point, rx: Point, wavelength: float) -> int:
    return sum(clutter_hits(site, tx, rx, wavelength).values())
