"""Planar geometry and WGS84 <-> local-plane projection.

All planning and simulation math runs on LocalPoint (meters east/north of a
scenario origin). GeoPoint appears only at ingestion and export boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

EARTH_RADIUS_M = 6_371_000.0
LOCAL_RANGE_DEG = 1.0
LOCAL_RANGE_M = 100_000.0
_EPS = 1e-9


class GeoError(ValueError):
    pass


class OutOfLocalRange(GeoError):
    """Point too far from the scenario origin for the flat-plane projection."""


class InvalidPolygon(GeoError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 coordinate in degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise GeoError("latitude/longitude must be finite")
        if not -90.0 <= self.lat <= 90.0:
            raise GeoError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise GeoError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class LocalPoint:
    """Meters east (x) and north (y) of the scenario origin."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeoError("local coordinates must be finite")
        if abs(self.x) >= LOCAL_RANGE_M or abs(self.y) >= LOCAL_RANGE_M:
            raise GeoError(f"local point outside plane validity bound: ({self.x}, {self.y})")


def project(origin: GeoPoint, p: GeoPoint) -> LocalPoint:
    """Equirectangular projection of ``p`` onto the local plane at ``origin``."""
    dlat = p.lat - origin.lat
    dlon = p.lon - origin.lon
    if abs(dlat) >= LOCAL_RANGE_DEG or abs(dlon) >= LOCAL_RANGE_DEG:
        raise OutOfLocalRange(f"point more than {LOCAL_RANGE_DEG} deg from origin")
    x = math.radians(dlon) * EARTH_RADIUS_M * math.cos(math.radians(origin.lat))
    y = math.radians(dlat) * EARTH_RADIUS_M
    return LocalPoint(x, y)


def unproject(origin: GeoPoint, p: LocalPoint) -> GeoPoint:
    """Inverse of :func:`project`."""
    lat = origin.lat + math.degrees(p.y / EARTH_RADIUS_M)
    cos_lat = math.cos(math.radians(origin.lat))
    if abs(cos_lat) < 1e-12:
        raise OutOfLocalRange("cannot unproject at the poles")
    lon = origin.lon + math.degrees(p.x / (EARTH_RADIUS_M * cos_lat))
    return GeoPoint(lat, lon)


def dist(p: LocalPoint, q: LocalPoint) -> float:
    """Euclidean distance in meters."""
    return math.hypot(p.x - q.x, p.y - q.y)


def path_length(points: Sequence[LocalPoint]) -> float:
    return sum(dist(points[i - 1], points[i]) for i in range(1, len(points)))


def _on_segment(p: LocalPoint, a: LocalPoint, b: LocalPoint, eps: float = _EPS) -> bool:
    cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
    if abs(cross) > eps * max(1.0, dist(a, b)):
        return False
    dot = (p.x - a.x) * (p.x - b.x) + (p.y - a.y) * (p.y - b.y)
    return dot <= eps


def _segments_properly_intersect(a: LocalPoint, b: LocalPoint, c: LocalPoint, d: LocalPoint) -> bool:
    def orient(p: LocalPoint, q: LocalPoint, r: LocalPoint) -> float:
        return (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)

    o1 = orient(a, b, c)
    o2 = orient(a, b, d)
    o3 = orient(c, d, a)
    o4 = orient(c, d, b)
    return (o1 * o2 < 0) and (o3 * o4 < 0)


class Polygon:
    """Simple polygon over LocalPoints, implicitly closed.

    Validated on construction: at least 3 vertices, positive area and no
    self-intersection between non-adjacent edges.
    """

    __slots__ = ("vertices",)

    def __init__(self, vertices: Iterable[LocalPoint]):
        verts = tuple(vertices)
        if len(verts) >= 2 and dist(verts[0], verts[-1]) < _EPS:
            verts = verts[:-1]  # tolerate explicitly closed rings
        if len(verts) < 3:
            raise InvalidPolygon("polygon needs at least 3 distinct vertices")
        self.vertices: tuple[LocalPoint, ...] = verts
        if self.area() <= _EPS:
            raise InvalidPolygon("polygon area must be positive")
        n = len(verts)
        for i in range(n):
            a, b = verts[i], verts[(i + 1) % n]
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue
                c, d = verts[j], verts[(j + 1) % n]
                if _segments_properly_intersect(a, b, c, d):
                    raise InvalidPolygon("polygon is self-intersecting")

    def __repr__(self) -> str:
        return f"Polygon({len(self.vertices)} vertices)"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Polygon) and self.vertices == other.vertices

    def __hash__(self) -> int:
        return hash(self.vertices)

    def edges(self) -> Iterable[tuple[LocalPoint, LocalPoint]]:
        n = len(self.vertices)
        for i in range(n):
            yield self.vertices[i], self.vertices[(i + 1) % n]

    def area(self) -> float:
        """Unsigned shoelace area in square meters."""
        acc = 0.0
        n = len(self.vertices)
        for i in range(n):
            p, q = self.vertices[i], self.vertices[(i + 1) % n]
            acc += p.x * q.y - q.x * p.y
        return abs(acc) / 2.0

    def centroid(self) -> LocalPoint:
        sx = sum(v.x for v in self.vertices)
        sy = sum(v.y for v in self.vertices)
        n = len(self.vertices)
        return LocalPoint(sx / n, sy / n)

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [v.x for v in self.vertices]
        ys = [v.y for v in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def contains(self, p: LocalPoint) -> bool:
        """Ray-casting membership test; boundary points count as inside."""
        for a, b in self.edges():
            if _on_segment(p, a, b):
                return True
        return self._crossings_odd(p)

    def contains_strict(self, p: LocalPoint) -> bool:
        """Membership with the boundary excluded (open interior)."""
        for a, b in self.edges():
            if _on_segment(p, a, b):
                return False
        return self._crossings_odd(p)

    def _crossings_odd(self, p: LocalPoint) -> bool:
        inside = False
        n = len(self.vertices)
        for i in range(n):
            a, b = self.vertices[i], self.vertices[(i + 1) % n]
            if (a.y > p.y) != (b.y > p.y):
                x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y)
                if p.x < x_cross:
                    inside = not inside
        return inside

    def boundary_distance(self, p: LocalPoint) -> float:
        """Distance from ``p`` to the nearest point of the polygon boundary."""
        best = math.inf
        for a, b in self.edges():
            best = min(best, _point_segment_distance(p, a, b))
        return best


def _point_segment_distance(p: LocalPoint, a: LocalPoint, b: LocalPoint) -> float:
    ax, ay = b.x - a.x, b.y - a.y
    seg_len2 = ax * ax + ay * ay
    if seg_len2 <= 0.0:
        return dist(p, a)
    t = ((p.x - a.x) * ax + (p.y - a.y) * ay) / seg_len2
    t = max(0.0, min(1.0, t))
    return math.hypot(p.x - (a.x + t * ax), p.y - (a.y + t * ay))


def point_polyline_distance(p: LocalPoint, points: Sequence[LocalPoint]) -> float:
    if not points:
        return math.inf
    if len(points) == 1:
        return dist(p, points[0])
    return min(
        _point_segment_distance(p, points[i - 1], points[i]) for i in range(1, len(points))
    )


def _segment_line_hits(a: LocalPoint, b: LocalPoint, e1: LocalPoint, e2: LocalPoint) -> list[float]:
    """Parameters t in [0,1] where segment a->b meets edge e1->e2."""
    rx, ry = b.x - a.x, b.y - a.y
    sx, sy = e2.x - e1.x, e2.y - e1.y
    denom = rx * sy - ry * sx
    qpx, qpy = e1.x - a.x, e1.y - a.y
    if abs(denom) < 1e-15:
        # parallel; collinear overlap contributes the projected edge endpoints
        if abs(qpx * ry - qpy * rx) > 1e-9:
            return []
        r_len2 = rx * rx + ry * ry
        if r_len2 <= 0.0:
            return []
        hits = []
        for e in (e1, e2):
            t = ((e.x - a.x) * rx + (e.y - a.y) * ry) / r_len2
            if -1e-12 <= t <= 1.0 + 1e-12:
                hits.append(min(1.0, max(0.0, t)))
        return hits
    t = (qpx * sy - qpy * sx) / denom
    u = (qpx * ry - qpy * rx) / denom
    if -1e-12 <= t <= 1.0 + 1e-12 and -1e-12 <= u <= 1.0 + 1e-12:
        return [min(1.0, max(0.0, t))]
    return []


def clip_line_multi(
    a: LocalPoint,
    b: LocalPoint,
    include: Sequence[Polygon],
    exclude: Sequence[Polygon] = (),
) -> list[tuple[LocalPoint, LocalPoint]]:
    """Maximal sub-segments of a->b inside every ``include`` polygon and
    outside the open interior of every ``exclude`` polygon, ordered along a->b.
    """
    seg_len = dist(a, b)
    if seg_len < _EPS:
        return []
    ts = {0.0, 1.0}
    for poly in list(include) + list(exclude):
        for e1, e2 in poly.edges():
            for t in _segment_line_hits(a, b, e1, e2):
                ts.add(t)
    ordered = sorted(ts)

    def lerp(t: float) -> LocalPoint:
        return LocalPoint(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))

    def keep(p: LocalPoint) -> bool:
        if not all(poly.contains(p) for poly in include):
            return False
        return not any(poly.contains_strict(p) for poly in exclude)

    out: list[tuple[float, float]] = []
    for i in range(1, len(ordered)):
        t0, t1 = ordered[i - 1], ordered[i]
        if (t1 - t0) * seg_len < 1e-9:
            continue
        if keep(lerp((t0 + t1) / 2.0)):
            if out and abs(out[-1][1] - t0) < 1e-12:
                out[-1] = (out[-1][0], t1)
            else:
                out.append((t0, t1))
    return [(lerp(t0), lerp(t1)) for t0, t1 in out]


def clip_line(poly: Polygon, a: LocalPoint, b: LocalPoint) -> list[tuple[LocalPoint, LocalPoint]]:
    """Sub-segments of a->b interior to ``poly`` (boundary included)."""
    return clip_line_multi(a, b, [poly])


def contains(poly: Polygon, p: LocalPoint) -> bool:
    return poly.contains(p)


def area(poly: Polygon) -> float:
    return poly.area()


def rect(x0: float, y0: float, x1: float, y1: float) -> Polygon:
    """Axis-aligned rectangle helper used by scenarios and tests."""
    return Polygon(
        [LocalPoint(x0, y0), LocalPoint(x1, y0), LocalPoint(x1, y1), LocalPoint(x0, y1)]
    )
