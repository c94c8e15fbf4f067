"""Observation vector: range sensors, waypoint geometry and route curvature.

Every entry is normalised. Distances, radii and speed land in ``[0, 1]``;
signed angles are divided by pi and land in ``[-1, 1]``. The layout is fixed
and versioned so checkpoints can refuse a featurizer they were not trained on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geom2d import GeometryError, fit_circle_from_chords, point_segment_distance, raycast_many, \
    subtended_angle
from .scenario import Scenario, WaypointRoute
from .vehicle import TractorTrailerState, VehicleSpec

LAYOUT_VERSION = 1

_SLICES = (
    ("truck_rays", 13),
    ("trailer_rays", 16),
    ("truck_wp_angles", 5),
    ("trailer_wp_angles", 5),
    ("articulation", 1),
    ("lane_center_angles", 5),
    ("curvature_current", 4),
    ("curvature_future", 4),
    ("radii", 10),
    ("forward_speed", 1),
    ("wp_hypot", 2),
    ("perp_line_dist", 2),
)

SIGNED_SLICES = frozenset({"truck_wp_angles", "trailer_wp_angles", "articulation", "lane_center_angles"})


class ObservationLayout:
    """Named, contiguous slices of the observation vector."""

    def __init__(self, slices=_SLICES, version: int = LAYOUT_VERSION):
        self.version = version
        self.slices: dict[str, slice] = {}
        off = 0
        for name, size in slices:
            self.slices[name] = slice(off, off + size)
            off += size
        self.size = off

    def __getitem__(self, name) -> slice:
        return self.slices[name]

    def bounds(self, name) -> tuple[float, float]:
        return (-1.0, 1.0) if name in SIGNED_SLICES else (0.0, 1.0)

    def labels(self) -> list[str]:
        out = []
        for name, sl in self.slices.items():
            n = sl.stop - sl.start
            out.extend([name] if n == 1 else [f"{name}[{i}]" for i in range(n)])
        return out

    def to_dict(self) -> dict:
        return {"version": self.version, "slices": [[k, v.stop - v.start] for k, v in self.slices.items()]}

    def __eq__(self, other):
        return isinstance(other, ObservationLayout) and self.to_dict() == other.to_dict()


LAYOUT = ObservationLayout()
OBS_SIZE = LAYOUT.size


@dataclass(frozen=True)
class FeatureConfig:
    ray_range: float = 50.0
    radius_max: float = 100.0
    target_speed: float = 30.0 / 3.6
    distance_scale: float = 20.0
    lookaheads: tuple[int, ...] = (1, 2, 5, 7, 10)
    curvature_distances: tuple[int, ...] = (5, 7, 10, 12)
    radius_windows: int = 10
    chord_step: int = 5
    truck_ray_step_deg: float = 15.0
    trailer_rays_per_side: int = 8
    pass_radius: float = 2.0

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d) -> "FeatureConfig":
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


# --- per-route precomputation ------------------------------------------------

@dataclass(frozen=True)
class RouteGeometry:
    curvature_current: np.ndarray
    curvature_future: np.ndarray
    radii: np.ndarray


_ROUTE_CACHE: dict[tuple, tuple[WaypointRoute, RouteGeometry]] = {}


def _subtended_or_straight(p, i, j, k):
    try:
        return subtended_angle(p[i], p[j], p[k])
    except GeometryError:
        return math.pi


def route_geometry(route: WaypointRoute, cfg: FeatureConfig = FeatureConfig()) -> RouteGeometry:
    """Curvature and radius features for every possible current index."""
    key = (id(route), cfg.curvature_distances, cfg.radius_windows, cfg.chord_step, cfg.radius_max)
    hit = _ROUTE_CACHE.get(key)
    if hit is not None and hit[0] is route:
        return hit[1]
    p = route.positions
    n = len(p)
    clamp = lambda i: min(max(i, 0), n - 1)  # noqa: E731
    cur = np.empty((n, len(cfg.curvature_distances)))
    fut = np.empty_like(cur)
    for c in range(n):
        for m, d in enumerate(cfg.curvature_distances):
            cur[c, m] = _subtended_or_straight(p, clamp(c - d), c, clamp(c + d)) / math.pi
            fut[c, m] = _subtended_or_straight(p, c, clamp(c + d), clamp(c + 2 * d)) / math.pi

    step = cfg.chord_step
    span = 2 * step
    starts = range(max(n - span, 0))
    fits = {}
    for s in starts:
        est = fit_circle_from_chords(p[s:s + span + 1], step)
        fits[s] = 1.0 if est.straight else min(est.radius, cfg.radius_max) / cfg.radius_max
    if n > span:
        tail = fits[n - span - 1]
    else:
        tail = 1.0
    radii = np.empty((n, cfg.radius_windows))
    for c in range(n):
        last = None
        for j in range(cfg.radius_windows):
            s = c + j * step
            if s in fits:
                last = fits[s]
            radii[c, j] = last if last is not None else tail
    geo = RouteGeometry(cur, fut, radii)
    _ROUTE_CACHE[key] = (route, geo)
    return geo


# --- tracker -------------------------------------------------------------------

@dataclass(frozen=True)
class RouteTracker:
    route: WaypointRoute
    current_index: int = 0
    pass_radius: float = 2.0
    geometry: RouteGeometry = field(default=None, compare=False, repr=False)

    @classmethod
    def start(cls, route: WaypointRoute, cfg: FeatureConfig = FeatureConfig()) -> "RouteTracker":
        return cls(route, 0, cfg.pass_radius, route_geometry(route, cfg))

    @property
    def remaining(self) -> int:
        return len(self.route) - self.current_index

    @property
    def finished(self) -> bool:
        return self.current_index >= len(self.route)

    def lookahead_index(self, k: int) -> int:
        """Index of the waypoint ``k`` ahead; ``k = 1`` is the next unpassed one."""
        return min(self.current_index + k - 1, len(self.route) - 1)


def advance_tracker(tracker: RouteTracker, point) -> tuple[RouteTracker, int]:
    """Mark waypoints passed by ``point`` (the truck centre).

    A waypoint counts as passed once the point lies on or beyond the line
    through it perpendicular to its forward vector, or within ``pass_radius``.
    """
    pos, fwd = tracker.route.positions, tracker.route.forwards
    i = tracker.current_index
    n = len(pos)
    px, py = float(point[0]), float(point[1])
    while i < n:
        dx, dy = px - pos[i, 0], py - pos[i, 1]
        if dx * fwd[i, 0] + dy * fwd[i, 1] >= 0.0 or math.hypot(dx, dy) < tracker.pass_radius:
            i += 1
        else:
            break
    passed = i - tracker.current_index
    return (replace(tracker, current_index=i) if passed else tracker), passed


def distance_to_route(point, route: WaypointRoute, index: int | None = None, window: int = 20) -> float:
    """Distance from ``point`` to the route polyline, optionally near ``index``."""
    segs = route.segments()
    if index is not None:
        lo = max(0, index - window)
        hi = min(len(segs), index + window)
        if hi > lo:
            segs = segs[lo:hi]
        else:
            segs = segs[-1:]
    return float(point_segment_distance(np.asarray(point, float), segs).min())


# --- sensors -------------------------------------------------------------------

def _ray_setup(state: TractorTrailerState, spec: VehicleSpec, cfg: FeatureConfig):
    center = state.truck_center(spec)
    k = np.arange(-6, 7)
    ang = state.heading + np.radians(cfg.truck_ray_step_deg) * k
    truck_o = np.repeat(center[None], len(k), axis=0)
    truck_d = np.column_stack([np.cos(ang), np.sin(ang)])

    m = cfg.trailer_rays_per_side
    tf = state.trailer_forward()
    left = np.array([-tf[1], tf[0]])
    front = state.hitch(spec) + spec.trailer_front_overhang * tf
    along = front[None] - ((np.arange(m) + 0.5) / m * spec.trailer_body_length)[:, None] * tf[None]
    hw = 0.5 * spec.trailer_width
    trailer_o = np.vstack([along + hw * left, along - hw * left])
    trailer_d = np.vstack([np.repeat(left[None], m, axis=0), np.repeat(-left[None], m, axis=0)])
    return np.vstack([truck_o, trailer_o]), np.vstack([truck_d, trailer_d])


def sensor_rays(state: TractorTrailerState, spec: VehicleSpec, segments: np.ndarray,
                cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """13 truck rays (-90..+90 deg about the heading) then 8 left and 8 right trailer rays, in metres."""
    origins, dirs = _ray_setup(state, spec, cfg)
    return raycast_many(origins, dirs, segments, cfg.ray_range)


def _signed(ax, ay, bx, by):
    return math.atan2(ax * by - ay * bx, ax * bx + ay * by)


def build_observation(state: TractorTrailerState, tracker: RouteTracker, scenario: Scenario | np.ndarray,
                      spec: VehicleSpec, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    segments = scenario if isinstance(scenario, np.ndarray) else scenario.kerb_segments
    obs = np.empty(OBS_SIZE)
    L = LAYOUT
    obs[L["truck_rays"].start:L["trailer_rays"].stop] = sensor_rays(state, spec, segments, cfg) / cfg.ray_range

    route = tracker.route
    pos, fwd = route.positions, route.forwards
    n = len(pos)
    c = min(tracker.current_index, n - 1)
    ahead = [min(c + k - 1, n - 1) for k in cfg.lookaheads]
    th, tt = state.heading, state.trailer_heading
    hx, hy = math.cos(th), math.sin(th)
    tx, ty = math.cos(tt), math.sin(tt)
    inv_pi = 1.0 / math.pi
    sl_truck, sl_trailer = L["truck_wp_angles"], L["trailer_wp_angles"]
    for m, i in enumerate(ahead):
        obs[sl_truck.start + m] = _signed(hx, hy, fwd[i, 0], fwd[i, 1]) * inv_pi
        obs[sl_trailer.start + m] = _signed(tx, ty, fwd[i, 0], fwd[i, 1]) * inv_pi
    obs[L["articulation"]] = state.articulation * inv_pi

    center = state.truck_center(spec)
    prev = pos[max(c - 1, 0)]
    vx, vy = center[0] - prev[0], center[1] - prev[1]
    sl = L["lane_center_angles"]
    for m, i in enumerate(ahead):
        ux, uy = pos[i, 0] - prev[0], pos[i, 1] - prev[1]
        if math.hypot(ux, uy) < 1e-9 or math.hypot(vx, vy) < 1e-9:
            obs[sl.start + m] = 0.0
        else:
            obs[sl.start + m] = _signed(ux, uy, vx, vy) * inv_pi

    geo = tracker.geometry if tracker.geometry is not None else route_geometry(route, cfg)
    obs[L["curvature_current"]] = geo.curvature_current[c]
    obs[L["curvature_future"]] = geo.curvature_future[c]
    obs[L["radii"]] = geo.radii[c]

    obs[L["forward_speed"]] = min(max(state.speed / (2.0 * cfg.target_speed), 0.0), 1.0)
    hyp, perp = L["wp_hypot"], L["perp_line_dist"]
    for m, k in enumerate((1, 2)):
        i = min(c + k - 1, n - 1)
        dx, dy = center[0] - pos[i, 0], center[1] - pos[i, 1]
        obs[hyp.start + m] = min(math.hypot(dx, dy) / cfg.distance_scale, 1.0)
        obs[perp.start + m] = min(abs(dx * fwd[i, 0] + dy * fwd[i, 1]) / cfg.distance_scale, 1.0)
    return obs


def describe(obs: np.ndarray, layout: ObservationLayout = LAYOUT) -> list[tuple[str, float]]:
    return list(zip(layout.labels(), map(float, obs)))
