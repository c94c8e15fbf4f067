"""Kinematic tractor with one semitrailer, footprints and kerb contact.

The truck pose is its rear-axle point. The trailer couples at the hitch, which
sits ``hitch_offset`` behind the rear axle (0 for an on-axle fifth wheel), and
swings about its own axle ``trailer_length`` behind the hitch.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .geom2d import Polyline, stack_segments, wrap_angle

log = logging.getLogger(__name__)

MAX_DT = 0.1


class FailureCause(str, enum.Enum):
    NONE = "none"
    TRUCK_KERB = "truck_kerb"
    TRAILER_KERB = "trailer_kerb"
    DIVERGENCE = "divergence"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class VehicleSpec:
    truck_wheelbase: float = 3.8
    truck_length: float = 6.0
    truck_width: float = 2.5
    truck_center_offset: float = 1.9
    trailer_length: float = 8.0
    trailer_body_length: float = 10.0
    trailer_width: float = 2.5
    trailer_front_overhang: float = 1.0
    hitch_offset: float = 0.0
    max_wheel_angle: float = 0.7
    jackknife_limit: float = 1.0

    def __post_init__(self):
        for name in ("truck_wheelbase", "truck_length", "truck_width", "trailer_length",
                     "trailer_body_length", "trailer_width", "max_wheel_angle", "jackknife_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"VehicleSpec.{name} must be positive")
        if self.hitch_offset < 0:
            raise ValueError("VehicleSpec.hitch_offset must be non-negative")
        if self.jackknife_limit >= math.pi / 2:
            raise ValueError("VehicleSpec.jackknife_limit must be below pi/2")
        if self.max_wheel_angle >= math.pi / 2:
            raise ValueError("VehicleSpec.max_wheel_angle must be below pi/2")


@dataclass(frozen=True)
class TractorTrailerState:
    x: float
    y: float
    heading: float
    trailer_heading: float
    speed: float = 0.0
    wheel_angle: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def articulation(self) -> float:
        return wrap_angle(self.heading - self.trailer_heading)

    def forward(self) -> np.ndarray:
        return np.array([math.cos(self.heading), math.sin(self.heading)])

    def trailer_forward(self) -> np.ndarray:
        return np.array([math.cos(self.trailer_heading), math.sin(self.trailer_heading)])

    def truck_center(self, spec: VehicleSpec) -> np.ndarray:
        return self.position + spec.truck_center_offset * self.forward()

    def hitch(self, spec: VehicleSpec) -> np.ndarray:
        return self.position - spec.hitch_offset * self.forward()

    def trailer_coupling(self, spec: VehicleSpec) -> np.ndarray:
        """Trailer kingpin, derived from the trailer side of the joint."""
        return self.trailer_axle(spec) + spec.trailer_length * self.trailer_forward()

    def trailer_axle(self, spec: VehicleSpec) -> np.ndarray:
        return self.hitch(spec) - spec.trailer_length * self.trailer_forward()

    def jackknifed(self, spec: VehicleSpec) -> bool:
        return abs(self.articulation) > spec.jackknife_limit


def state_from_center(center, heading: float, spec: VehicleSpec, trailer_heading: float | None = None,
                      speed: float = 0.0) -> TractorTrailerState:
    """Build a state whose truck body centre sits at ``center``."""
    x = center[0] - spec.truck_center_offset * math.cos(heading)
    y = center[1] - spec.truck_center_offset * math.sin(heading)
    return TractorTrailerState(float(x), float(y), wrap_angle(heading),
                               wrap_angle(heading if trailer_heading is None else trailer_heading), float(speed))


def _rates(heading, trailer_heading, speed, wheel_angle, spec):
    omega = speed * math.tan(wheel_angle) / spec.truck_wheelbase
    gamma = heading - trailer_heading
    trailer_rate = (speed * math.sin(gamma) - spec.hitch_offset * omega * math.cos(gamma)) / spec.trailer_length
    return speed * math.cos(heading), speed * math.sin(heading), omega, trailer_rate


def step_kinematics(state: TractorTrailerState, wheel_angle: float, acceleration: float, dt: float,
                    spec: VehicleSpec) -> TractorTrailerState:
    """Advance one explicit step of the single-track articulated model.

    Headings and speed use forward Euler; the rear axle moves along the exact
    arc implied by the start-of-step turn rate.
    """
    if abs(wheel_angle) > spec.max_wheel_angle:
        log.warning("wheel angle %.4f clipped to +/-%.4f", wheel_angle, spec.max_wheel_angle)
        wheel_angle = math.copysign(spec.max_wheel_angle, wheel_angle)
    if not 0.0 < dt <= MAX_DT:
        log.warning("dt %.4g clipped into (0, %.2f]", dt, MAX_DT)
        dt = min(max(dt, 1e-6), MAX_DT)
    _, _, omega, trailer_rate = _rates(state.heading, state.trailer_heading, state.speed, wheel_angle, spec)
    # exact chord of the constant-turn-rate arc keeps the heading tangent to the path
    half = 0.5 * omega * dt
    chord = state.speed * dt * (math.sin(half) / half if abs(half) > 1e-12 else 1.0)
    mid = state.heading + half
    return TractorTrailerState(
        state.x + chord * math.cos(mid),
        state.y + chord * math.sin(mid),
        wrap_angle(state.heading + omega * dt),
        wrap_angle(state.trailer_heading + trailer_rate * dt),
        max(0.0, state.speed + acceleration * dt),
        wheel_angle,
    )


def step_rk4(state: TractorTrailerState, wheel_angle: float, dt: float, spec: VehicleSpec) -> TractorTrailerState:
    """Constant-speed RK4 step; used as a reference integrator."""
    y0 = np.array([state.x, state.y, state.heading, state.trailer_heading])

    def f(y):
        return np.array(_rates(y[2], y[3], state.speed, wheel_angle, spec))

    k1 = f(y0)
    k2 = f(y0 + 0.5 * dt * k1)
    k3 = f(y0 + 0.5 * dt * k2)
    k4 = f(y0 + dt * k3)
    y = y0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return replace(state, x=y[0], y=y[1], heading=wrap_angle(y[2]), trailer_heading=wrap_angle(y[3]),
                   wheel_angle=wheel_angle)


@dataclass(frozen=True)
class Rect:
    center: np.ndarray
    heading: float
    half_length: float
    half_width: float

    def axes(self):
        c, s = math.cos(self.heading), math.sin(self.heading)
        return np.array([c, s]), np.array([-s, c])

    def corners(self) -> np.ndarray:
        """Corners front-left, front-right, rear-right, rear-left."""
        f, l = self.axes()
        hl, hw = self.half_length, self.half_width
        return np.array([self.center + hl * f + hw * l, self.center + hl * f - hw * l,
                         self.center - hl * f - hw * l, self.center - hl * f + hw * l])

    def intersects(self, segments: np.ndarray) -> np.ndarray:
        """Per-segment overlap test (Liang-Barsky clip in the box frame)."""
        if len(segments) == 0:
            return np.zeros(0, dtype=bool)
        f, l = self.axes()
        ax = segments[:, 0] - self.center[0]
        ay = segments[:, 1] - self.center[1]
        bx = segments[:, 2] - self.center[0]
        by = segments[:, 3] - self.center[1]
        px, py = ax * f[0] + ay * f[1], ax * l[0] + ay * l[1]
        dx = (bx * f[0] + by * f[1]) - px
        dy = (bx * l[0] + by * l[1]) - py
        hl, hw = self.half_length, self.half_width
        t0 = np.zeros(len(segments))
        t1 = np.ones(len(segments))
        ok = np.ones(len(segments), dtype=bool)
        for p, q in ((-dx, px + hl), (dx, hl - px), (-dy, py + hw), (dy, hw - py)):
            zero = p == 0.0
            ok &= ~(zero & (q < 0.0))
            r = q / np.where(zero, 1.0, p)
            t0 = np.where(~zero & (p < 0.0), np.maximum(t0, r), t0)
            t1 = np.where(~zero & (p > 0.0), np.minimum(t1, r), t1)
        return ok & (t0 <= t1)


@dataclass(frozen=True)
class Footprints:
    truck: Rect
    trailer: Rect


def footprints(state: TractorTrailerState, spec: VehicleSpec) -> Footprints:
    truck = Rect(state.truck_center(spec), state.heading, 0.5 * spec.truck_length, 0.5 * spec.truck_width)
    trailer_center = state.hitch(spec) + (spec.trailer_front_overhang - 0.5 * spec.trailer_body_length) \
        * state.trailer_forward()
    trailer = Rect(trailer_center, state.trailer_heading, 0.5 * spec.trailer_body_length, 0.5 * spec.trailer_width)
    return Footprints(truck, trailer)


def check_collision(fp: Footprints, boundaries) -> FailureCause:
    """First unit touching a kerb; the trailer is reported when both do."""
    segs = boundaries if isinstance(boundaries, np.ndarray) else stack_segments(
        [boundaries] if isinstance(boundaries, Polyline) else boundaries)
    if fp.trailer.intersects(segs).any():
        return FailureCause.TRAILER_KERB
    if fp.truck.intersects(segs).any():
        return FailureCause.TRUCK_KERB
    return FailureCause.NONE
