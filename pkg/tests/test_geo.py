import math
import random

import pytest

from agrifleet.geo import (
    EARTH_RADIUS_M,
    GeoPoint,
    InvalidPolygon,
    LocalPoint,
    OutOfLocalRange,
    Polygon,
    clip_line,
    dist,
    project,
    rect,
    unproject,
)


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Independent great-circle oracle for projection distances."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.atan2(math.sqrt(h), math.sqrt(1 - h))


def winding_number_contains(poly: Polygon, p: LocalPoint) -> bool:
    """Winding-number oracle for the ray-casting implementation."""
    total = 0.0
    n = len(poly.vertices)
    for i in range(n):
        a = poly.vertices[i]
        b = poly.vertices[(i + 1) % n]
        ax, ay = a.x - p.x, a.y - p.y
        bx, by = b.x - p.x, b.y - p.y
        total += math.atan2(ax * by - ay * bx, ax * bx + ay * by)
    return abs(total) > math.pi


class TestProjection:
    def test_origin_projects_to_zero(self):
        o = GeoPoint(9.03, 38.74)
        p = project(o, o)
        assert p.x == 0.0 and p.y == 0.0

    def test_one_millidegree_north(self):
        o = GeoPoint(0.0, 0.0)
        p = GeoPoint(0.001, 0.0)
        local = project(o, p)
        assert local.x == 0.0
        oracle = haversine_m(o, p)
        assert abs(local.y - oracle) / oracle < 0.001
        assert local.y == pytest.approx(111.19, abs=0.01)

    def test_longitude_shrinks_with_latitude(self):
        o = GeoPoint(60.0, 0.0)
        p = GeoPoint(60.0, 0.001)
        local = project(o, p)
        oracle = haversine_m(o, p)
        assert abs(local.x - oracle) / oracle < 0.001
        assert local.x == pytest.approx(55.6, abs=0.05)

    def test_out_of_range(self):
        with pytest.raises(OutOfLocalRange):
            project(GeoPoint(0, 0), GeoPoint(1.5, 0))

    def test_roundtrip_within_nanodegree(self):
        rng = random.Random(7)
        origin = GeoPoint(9.03, 38.74)
        for _ in range(200):
            p = GeoPoint(origin.lat + rng.uniform(-0.5, 0.5), origin.lon + rng.uniform(-0.5, 0.5))
            back = unproject(origin, project(origin, p))
            assert abs(back.lat - p.lat) < 1e-9
            assert abs(back.lon - p.lon) < 1e-9

    def test_latlon_validation(self):
        with pytest.raises(ValueError):
            GeoPoint(91.0, 0.0)
        with pytest.raises(ValueError):
            GeoPoint(0.0, 181.0)


class TestDist:
    def test_identity(self):
        p = LocalPoint(12.5, -3.0)
        assert dist(p, p) == 0.0

    def test_three_four_five(self):
        assert dist(LocalPoint(0, 0), LocalPoint(3, 4)) == 5.0

    def test_symmetry_and_triangle_inequality(self):
        rng = random.Random(11)
        for _ in range(300):
            pts = [LocalPoint(rng.uniform(-500, 500), rng.uniform(-500, 500)) for _ in range(3)]
            a, b, c = pts
            assert dist(a, b) == dist(b, a)
            assert dist(a, c) <= dist(a, b) + dist(b, c) + 1e-9


class TestPolygon:
    def test_needs_three_vertices(self):
        with pytest.raises(InvalidPolygon):
            Polygon([LocalPoint(0, 0), LocalPoint(1, 0)])

    def test_rejects_zero_area(self):
        with pytest.raises(InvalidPolygon):
            Polygon([LocalPoint(0, 0), LocalPoint(1, 1), LocalPoint(2, 2)])

    def test_rejects_bowtie(self):
        with pytest.raises(InvalidPolygon):
            Polygon([LocalPoint(0, 0), LocalPoint(1, 1), LocalPoint(1, 0), LocalPoint(0, 1)])

    def test_contains_unit_square(self):
        square = rect(0, 0, 1, 1)
        assert square.contains(LocalPoint(0.5, 0.5))
        assert not square.contains(LocalPoint(2.0, 0.5))

    def test_boundary_counts_as_inside(self):
        square = rect(0, 0, 1, 1)
        assert square.contains(LocalPoint(0.0, 0.5))
        assert square.contains(LocalPoint(1.0, 1.0))
        assert not square.contains_strict(LocalPoint(0.0, 0.5))

    def test_convex_centroid_against_winding_oracle(self):
        rng = random.Random(3)
        for _ in range(50):
            cx, cy = rng.uniform(-100, 100), rng.uniform(-100, 100)
            n = rng.randint(3, 9)
            angles = sorted(rng.uniform(0, 2 * math.pi) for _ in range(n))
            if min(b - a for a, b in zip(angles, angles[1:])) < 0.05:
                continue
            r = rng.uniform(5, 40)
            poly = Polygon(
                [LocalPoint(cx + r * math.cos(t), cy + r * math.sin(t)) for t in angles]
            )
            c = poly.centroid()
            assert poly.contains(c)
            assert winding_number_contains(poly, c)

    def test_contains_matches_winding_oracle_on_random_points(self):
        poly = Polygon(
            [
                LocalPoint(0, 0),
                LocalPoint(10, 0),
                LocalPoint(10, 4),
                LocalPoint(6, 4),
                LocalPoint(6, 8),
                LocalPoint(10, 8),
                LocalPoint(10, 12),
                LocalPoint(0, 12),
            ]
        )
        rng = random.Random(5)
        for _ in range(500):
            p = LocalPoint(rng.uniform(-2, 12), rng.uniform(-2, 14))
            assert poly.contains(p) == winding_number_contains(poly, p)


class TestArea:
    def test_unit_square(self):
        assert rect(0, 0, 1, 1).area() == 1.0

    def test_four_hectare_square(self):
        assert rect(0, 0, 200, 200).area() == 40_000.0

    def test_random_triangle_matches_cross_product(self):
        rng = random.Random(9)
        for _ in range(100):
            a, b, c = (
                LocalPoint(rng.uniform(-50, 50), rng.uniform(-50, 50)) for _ in range(3)
            )
            expected = abs((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)) / 2
            if expected < 1e-6:
                continue
            assert Polygon([a, b, c]).area() == pytest.approx(expected, rel=1e-12)

    def test_invariant_under_rotation_and_translation(self):
        verts = [LocalPoint(0, 0), LocalPoint(5, 1), LocalPoint(6, 7), LocalPoint(-1, 4)]
        base = Polygon(verts).area()
        for k in range(1, 4):
            rotated = verts[k:] + verts[:k]
            assert Polygon(rotated).area() == pytest.approx(base, rel=1e-12)
        moved = [LocalPoint(v.x + 123.4, v.y - 77.7) for v in verts]
        assert Polygon(moved).area() == pytest.approx(base, rel=1e-9)


class TestClipLine:
    def test_horizontal_through_unit_square(self):
        square = rect(0, 0, 1, 1)
        segs = clip_line(square, LocalPoint(-1, 0.5), LocalPoint(2, 0.5))
        assert len(segs) == 1
        (p, q) = segs[0]
        assert (p.x, p.y) == pytest.approx((0.0, 0.5))
        assert (q.x, q.y) == pytest.approx((1.0, 0.5))

    def test_miss_is_empty(self):
        square = rect(0, 0, 1, 1)
        assert clip_line(square, LocalPoint(-1, 5), LocalPoint(2, 5)) == []

    def test_concave_u_gives_two_segments(self):
        u_shape = Polygon(
            [
                LocalPoint(0, 0),
                LocalPoint(10, 0),
                LocalPoint(10, 10),
                LocalPoint(7, 10),
                LocalPoint(7, 3),
                LocalPoint(3, 3),
                LocalPoint(3, 10),
                LocalPoint(0, 10),
            ]
        )
        a, b = LocalPoint(-1, 6), LocalPoint(11, 6)
        segs = clip_line(u_shape, a, b)
        assert len(segs) == 2
        # dense-sampling oracle: every sampled point of every output segment is inside,
        # and sampled points in the notch are not covered by any segment
        for p, q in segs:
            for i in range(1, 50):
                t = i / 50
                mid = LocalPoint(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
                assert u_shape.contains(mid)
        xs_covered = [(min(p.x, q.x), max(p.x, q.x)) for p, q in segs]
        for i in range(1200):
            x = -1 + 12 * i / 1200
            sample = LocalPoint(x, 6.0)
            covered = any(lo - 1e-9 <= x <= hi + 1e-9 for lo, hi in xs_covered)
            assert covered == u_shape.contains(sample)

    def test_segments_disjoint_and_ordered(self):
        u_shape = Polygon(
            [
                LocalPoint(0, 0),
                LocalPoint(10, 0),
                LocalPoint(10, 10),
                LocalPoint(7, 10),
                LocalPoint(7, 3),
                LocalPoint(3, 3),
                LocalPoint(3, 10),
                LocalPoint(0, 10),
            ]
        )
        segs = clip_line(u_shape, LocalPoint(-1, 6), LocalPoint(11, 6))
        assert segs[0][1].x <= segs[1][0].x
