"""Projection, containment, distance, and index tests, each against an
independent oracle (closed forms, winding numbers, brute-force scans)."""

import math

import numpy as np
import pytest

from camsurvey.geo import (
    EARTH_RADIUS_M,
    GeoPoint,
    LocalPoint,
    Polygon,
    Polyline,
    SpatialIndex,
    distance_point_to_polygon,
    nearest_point_on_polyline,
    point_in_polygon,
    project,
    project_many,
    unproject,
)

rng = np.random.default_rng(91)

ORIGIN = GeoPoint(37.7749, -122.4194)

# R * pi / 180: meters per degree of latitude under the spherical model.
M_PER_DEG_LAT = EARTH_RADIUS_M * math.pi / 180.0


class TestProjection:
    def test_one_degree_north_lands_on_y_axis(self):
        p = project(GeoPoint(ORIGIN.lat + 1.0, ORIGIN.lon), ORIGIN)
        assert p.x == pytest.approx(0.0, abs=1e-9)
        assert p.y == pytest.approx(111194.93, abs=0.01)
        assert p.y == pytest.approx(M_PER_DEG_LAT, abs=1e-6)

    def test_one_degree_east_scales_by_cos_lat(self):
        p = project(GeoPoint(ORIGIN.lat, ORIGIN.lon + 1.0), ORIGIN)
        assert p.y == pytest.approx(0.0, abs=1e-9)
        assert p.x == pytest.approx(M_PER_DEG_LAT * math.cos(math.radians(ORIGIN.lat)), abs=1e-6)

    def test_round_trip_within_city_extent(self):
        # 500 random points within ~50 km of the origin
        for _ in range(500):
            dx, dy = rng.uniform(-50_000, 50_000, size=2)
            geo = unproject(LocalPoint(dx, dy), ORIGIN)
            back = unproject(project(geo, ORIGIN), ORIGIN)
            assert abs(back.lat - geo.lat) < 1e-9
            assert abs(back.lon - geo.lon) < 1e-9

    def test_project_many_matches_scalar(self):
        lats = ORIGIN.lat + rng.uniform(-0.3, 0.3, size=50)
        lons = ORIGIN.lon + rng.uniform(-0.3, 0.3, size=50)
        xy = project_many(lats, lons, ORIGIN)
        for k in range(50):
            p = project(GeoPoint(lats[k], lons[k]), ORIGIN)
            assert xy[k, 0] == pytest.approx(p.x, abs=1e-9)
            assert xy[k, 1] == pytest.approx(p.y, abs=1e-9)

    def test_coordinate_range_validation(self):
        with pytest.raises(ValueError):
            GeoPoint(91.0, 0.0)
        with pytest.raises(ValueError):
            GeoPoint(0.0, 200.0)


def winding_number(x, y, ring):
    """Oracle containment test: nonzero winding number (strict interior)."""
    wn = 0
    for (ax, ay), (bx, by) in zip(ring[:-1], ring[1:]):
        if ay <= y:
            if by > y and (bx - ax) * (y - ay) - (by - ay) * (x - ax) > 0:
                wn += 1
        elif by <= y and (bx - ax) * (y - ay) - (by - ay) * (x - ax) < 0:
            wn -= 1
    return wn


# Concave (L-shaped) test polygon.
L_SHAPE = Polygon(
    [(0, 0), (40, 0), (40, 10), (10, 10), (10, 40), (0, 40), (0, 0)]
)

SQUARE_WITH_HOLE = Polygon(
    [(0, 0), (30, 0), (30, 30), (0, 30), (0, 0)],
    holes=[[(10, 10), (20, 10), (20, 20), (10, 20), (10, 10)]],
)


class TestPointInPolygon:
    def test_agrees_with_winding_oracle_on_concave_polygon(self):
        for _ in range(1000):
            x = rng.uniform(-5, 45)
            y = rng.uniform(-5, 45)
            expected = winding_number(x, y, L_SHAPE.exterior) != 0
            assert point_in_polygon((x, y), L_SHAPE) == expected, (x, y)

    def test_boundary_counts_as_inside(self):
        assert point_in_polygon((0, 0), L_SHAPE)          # vertex
        assert point_in_polygon((20, 0), L_SHAPE)         # edge midpoint
        assert point_in_polygon((10, 25), L_SHAPE)        # concave edge
        assert distance_point_to_polygon((20, 0), L_SHAPE) == 0.0

    def test_hole_is_outside_but_hole_boundary_is_inside(self):
        assert not point_in_polygon((15, 15), SQUARE_WITH_HOLE)
        assert point_in_polygon((15, 10), SQUARE_WITH_HOLE)
        assert point_in_polygon((5, 5), SQUARE_WITH_HOLE)
        assert distance_point_to_polygon((15, 15), SQUARE_WITH_HOLE) == 5.0

    def test_distance_zero_iff_inside(self):
        for _ in range(500):
            x = rng.uniform(-5, 45)
            y = rng.uniform(-5, 45)
            inside = point_in_polygon((x, y), L_SHAPE)
            dist = distance_point_to_polygon((x, y), L_SHAPE)
            assert (dist == 0.0) == inside

    def test_degenerate_ring_rejected(self):
        with pytest.raises(ValueError):
            Polygon([(0, 0), (1, 1), (0, 0)])
        with pytest.raises(ValueError):
            Polygon([(0, 0), (1, 1), (1, 1), (0, 0)])
        with pytest.raises(ValueError):
            Polygon([(0, 0), (1, 0), (1, 1)])  # not closed


class TestDistanceToPolygon:
    def test_outside_distance_matches_segment_scan(self):
        # independent scan over every edge with a dense parameter grid
        for _ in range(200):
            x = rng.uniform(-20, 60)
            y = rng.uniform(-20, 60)
            if point_in_polygon((x, y), SQUARE_WITH_HOLE):
                continue
            best = math.inf
            for ring in SQUARE_WITH_HOLE.rings():
                for (ax, ay), (bx, by) in zip(ring[:-1], ring[1:]):
                    for t in np.linspace(0, 1, 2001):
                        px, py = ax + t * (bx - ax), ay + t * (by - ay)
                        best = min(best, math.hypot(px - x, py - y))
            got = distance_point_to_polygon((x, y), SQUARE_WITH_HOLE)
            # the grid scan can only overestimate the true minimum
            assert got <= best + 1e-9
            assert got == pytest.approx(best, abs=1e-2)


class TestNearestPointOnPolyline:
    def test_clamps_to_vertex_when_foot_is_outside_segment(self):
        line = Polyline([(0, 0), (10, 0)])
        nearest, dist = nearest_point_on_polyline((15, 5), line)
        assert (nearest.x, nearest.y) == (10.0, 0.0)
        assert dist == pytest.approx(math.hypot(5, 5))

    def test_matches_dense_brute_force(self):
        for _ in range(50):
            verts = rng.uniform(0, 100, size=(5, 2))
            line = Polyline(verts)
            x, y = rng.uniform(-20, 120, size=2)
            best = math.inf
            for (ax, ay), (bx, by) in zip(verts[:-1], verts[1:]):
                for t in np.linspace(0, 1, 4001):
                    best = min(best, math.hypot(ax + t * (bx - ax) - x, ay + t * (by - ay) - y))
            _, dist = nearest_point_on_polyline((x, y), line)
            assert dist <= best + 1e-9
            assert dist == pytest.approx(best, abs=1e-3)

    def test_length_is_reversal_invariant(self):
        for _ in range(50):
            verts = rng.uniform(-1000, 1000, size=(8, 2))
            assert Polyline(verts).length == pytest.approx(Polyline(verts[::-1]).length, rel=1e-12)

    def test_too_few_vertices_rejected(self):
        with pytest.raises(ValueError):
            Polyline([(0, 0)])


class TestSpatialIndex:
    @pytest.mark.parametrize("cell_size", [10.0, 100.0, 250.0])
    def test_query_is_superset_of_linear_scan(self, cell_size):
        index = SpatialIndex(cell_size=cell_size)
        boxes = {}
        for fid in range(300):
            x, y = rng.uniform(-2000, 2000, size=2)
            w, h = rng.uniform(0, 300, size=2)
            boxes[fid] = (x, y, x + w, y + h)
            index.insert(fid, boxes[fid])
        for _ in range(200):
            qx, qy = rng.uniform(-2200, 2200, size=2)
            r = rng.uniform(0, 500)
            got = set(index.query((qx, qy), r))
            for fid, (x0, y0, x1, y1) in boxes.items():
                dx = max(x0 - qx, 0.0, qx - x1)
                dy = max(y0 - qy, 0.0, qy - y1)
                if math.hypot(dx, dy) <= r:
                    assert fid in got, (fid, r, cell_size)

    def test_zero_radius_query_still_covers_containing_boxes(self):
        index = SpatialIndex()
        index.insert("a", (0, 0, 50, 50))
        assert "a" in index.query((25, 25), 0.0)

    def test_malformed_bbox_rejected(self):
        index = SpatialIndex()
        with pytest.raises(ValueError):
            index.insert("bad", (10, 0, 0, 10))
        with pytest.raises(ValueError):
            SpatialIndex(cell_size=0)
