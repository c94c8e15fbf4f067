import logging
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from articnav.vehicle import (FailureCause, Rect, TractorTrailerState, VehicleSpec, check_collision, footprints,
                              state_from_center, step_kinematics, step_rk4)

SPEC = VehicleSpec()


def drive_circle(radius, seconds=120.0, dt=0.05, speed=3.0):
    wheel = math.atan(SPEC.truck_wheelbase / radius)
    s = TractorTrailerState(0.0, 0.0, 0.0, 0.0, speed)
    for _ in range(int(seconds / dt)):
        s = step_kinematics(s, wheel, 0.0, dt, SPEC)
    return s


def test_straight_driving_keeps_articulation_zero():
    s = TractorTrailerState(0.0, 0.0, 0.3, 0.3, 5.0)
    for _ in range(100):
        s = step_kinematics(s, 0.0, 0.0, 0.05, SPEC)
    assert s.articulation == pytest.approx(0.0)
    assert np.hypot(s.x, s.y) == pytest.approx(25.0)


@pytest.mark.parametrize("radius", [10.0, 16.0, 25.0])
def test_trailer_settles_on_inner_circle(radius):
    s = drive_circle(radius)
    centre = np.array([0.0, radius])  # turning left from the origin facing +x
    truck_r = np.linalg.norm(s.position - centre)
    trailer_r = np.linalg.norm(s.trailer_axle(SPEC) - centre)
    assert truck_r == pytest.approx(radius, rel=1e-9)
    assert trailer_r == pytest.approx(math.sqrt(radius ** 2 - SPEC.trailer_length ** 2), rel=0.01)


def test_exact_arc_step_matches_rk4_reference():
    s = TractorTrailerState(0.0, 0.0, 0.1, -0.2, 8.0)
    a = step_kinematics(s, 0.4, 0.0, 0.05, SPEC)
    b = step_rk4(s, 0.4, 0.05, SPEC)
    assert a.x == pytest.approx(b.x, abs=1e-4)
    assert a.y == pytest.approx(b.y, abs=1e-4)
    assert a.heading == pytest.approx(b.heading, abs=1e-9)


def test_speed_never_negative():
    s = step_kinematics(TractorTrailerState(0, 0, 0, 0, 0.05), 0.0, -5.0, 0.05, SPEC)
    assert s.speed == 0.0


def test_wheel_angle_and_dt_are_clipped_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        s = step_kinematics(TractorTrailerState(0, 0, 0, 0, 1.0), 2.0, 0.0, 0.5, SPEC)
    assert s.wheel_angle == SPEC.max_wheel_angle
    assert "clipped" in caplog.text


def test_jackknife_flag():
    assert TractorTrailerState(0, 0, 1.2, 0.0).jackknifed(SPEC)
    assert not TractorTrailerState(0, 0, 0.5, 0.0).jackknifed(SPEC)


def test_state_from_center_puts_body_centre_where_asked():
    s = state_from_center((3.0, 4.0), 0.7, SPEC)
    assert s.truck_center(SPEC) == pytest.approx([3.0, 4.0])


def test_invalid_vehicle_spec_rejected():
    with pytest.raises(ValueError):
        VehicleSpec(trailer_length=-1)
    with pytest.raises(ValueError):
        VehicleSpec(jackknife_limit=2.0)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-math.pi, math.pi))
def test_rect_corners_are_inside_its_own_segments(cx, cy, heading):
    r = Rect(np.array([cx, cy]), heading, 3.0, 1.25)
    c = r.corners()
    assert np.hypot(*(c[0] - c[1])) == pytest.approx(2.5)
    assert np.hypot(*(c[1] - c[2])) == pytest.approx(6.0)
    inside = np.array([[cx - 0.1, cy - 0.1, cx + 0.1, cy + 0.1]])
    far = np.array([[cx + 20, cy + 20, cx + 21, cy + 20]])
    assert r.intersects(inside)[0] and not r.intersects(far)[0]


def test_collision_reports_trailer_before_truck():
    s = TractorTrailerState(0.0, 0.0, 0.0, 0.0)
    fp = footprints(s, SPEC)
    # a wall along y = 1.0 crosses both bodies
    wall = np.array([[-20.0, 1.0, 20.0, 1.0]])
    assert check_collision(fp, wall) is FailureCause.TRAILER_KERB
    # only the truck reaches x > 3
    wall = np.array([[4.5, -5.0, 4.5, 5.0]])
    assert check_collision(fp, wall) is FailureCause.TRUCK_KERB
    assert check_collision(fp, np.array([[-20.0, 9.0, 20.0, 9.0]])) is FailureCause.NONE
