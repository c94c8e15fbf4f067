import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from articnav.geom2d import (GeometryError, Polyline, circle_polyline, fit_circle_from_chords, point_segment_distance,
                             raycast, raycast_many, signed_angle, subtended_angle, wrap_angle)

finite = st.floats(-1e4, 1e4, allow_nan=False)


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_wrap_angle_lands_in_half_open_interval(theta):
    w = wrap_angle(theta)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-6)
    assert math.isclose(math.sin(w), math.sin(theta), abs_tol=1e-6)


def test_wrap_angle_maps_minus_pi_to_pi():
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)


@given(finite, finite, finite, finite)
def test_signed_angle_is_antisymmetric(ax, ay, bx, by):
    if math.hypot(ax, ay) < 1e-3 or math.hypot(bx, by) < 1e-3:
        return
    a, b = signed_angle((ax, ay), (bx, by)), signed_angle((bx, by), (ax, ay))
    if abs(abs(a) - math.pi) > 1e-9:
        assert a == pytest.approx(-b, abs=1e-12)


def test_subtended_angle_right_angle_and_degenerate():
    assert subtended_angle((1, 0), (0, 0), (0, 1)) == pytest.approx(math.pi / 2)
    assert subtended_angle((1, 0), (0, 0), (-1, 0)) == pytest.approx(math.pi)
    with pytest.raises(GeometryError):
        subtended_angle((0, 0), (0, 0), (1, 1))


def test_polyline_points_are_read_only_and_closed_adds_segment():
    sq = Polyline(np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]]), closed=True)
    assert sq.segments().shape == (4, 4)
    assert sq.length() == pytest.approx(4.0)
    with pytest.raises(ValueError):
        sq.points[0, 0] = 5


def test_raycast_hits_wall_ahead_and_misses_behind():
    wall = np.array([[5.0, -1.0, 5.0, 1.0]])
    assert raycast((0, 0), (1, 0), wall, 50) == pytest.approx(5.0)
    assert raycast((0, 0), (-1, 0), wall, 50) == 50.0
    assert raycast((0, 0), (1, 0), np.zeros((0, 4)), 50) == 50.0


def test_raycast_counts_segment_end_point():
    wall = np.array([[5.0, 0.0, 5.0, 3.0]])
    assert raycast((0, 0), (1, 0), wall, 50) == pytest.approx(5.0)


def test_raycast_returns_nearest_of_several_walls_and_clips_range():
    walls = np.array([[9.0, -1, 9, 1], [4.0, -1, 4, 1]])
    assert raycast((0, 0), (1, 0), walls, 50) == pytest.approx(4.0)
    assert raycast((0, 0), (1, 0), walls, 3) == 3.0
    with pytest.raises(ValueError):
        raycast_many(np.zeros((1, 2)), np.array([[1.0, 0]]), walls, 0)


def test_point_segment_distance_interior_and_end_point():
    seg = np.array([[0.0, 0, 10, 0]])
    d = point_segment_distance(np.array([[5.0, 3], [-4, 3]]), seg)
    assert d[:, 0] == pytest.approx([3.0, 5.0])


@pytest.mark.parametrize("radius", [8.0, 10.0, 16.0, 25.0])
def test_circle_fit_recovers_radius_and_centre(radius):
    c = np.array([3.0, -2.0])
    t = np.linspace(0.2, 1.4, 11)
    pts = c + radius * np.column_stack([np.cos(t), np.sin(t)])
    est = fit_circle_from_chords(pts, 5)
    assert est.radius == pytest.approx(radius, abs=1e-9)
    assert est.center == pytest.approx(c, abs=1e-9)


def test_circle_fit_reports_straight_line():
    pts = np.column_stack([np.arange(11.0), 2 * np.arange(11.0)])
    est = fit_circle_from_chords(pts, 5)
    assert est.straight and est.radius == math.inf


def test_circle_fit_needs_enough_points():
    with pytest.raises(GeometryError):
        fit_circle_from_chords(np.zeros((10, 2)), 5)


@given(st.floats(1.0, 200.0), st.floats(0.005, 0.5))
def test_circle_polyline_respects_chord_error(radius, err):
    pts = circle_polyline((0, 0), radius, err)
    mids = 0.5 * (pts + np.roll(pts, -1, axis=0))
    sagitta = radius - np.hypot(mids[:, 0], mids[:, 1])
    assert sagitta.max() <= err + 1e-9


def test_circle_polyline_partial_sweep_negative():
    pts = circle_polyline((0, 0), 10, 0.01, start=0.0, sweep=-math.pi / 2)
    assert pts[0] == pytest.approx([10, 0])
    assert pts[-1] == pytest.approx([0, -10], abs=1e-9)
