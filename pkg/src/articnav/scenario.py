"""Roundabout maps: kerb polylines, lane-centre routes and scenario files.

Traffic drives on the right and circulates counter-clockwise. Every approach
road carries ``lanes_per_carriageway`` inbound lanes on its counter-clockwise
side and as many outbound lanes on the other. Lane 0 is the lane next to the
road axis (it feeds the inner circulating lane).
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .geom2d import Polyline, circle_polyline, stack_segments

SCENARIO_FORMAT = "articnav-scenario"
SCENARIO_VERSION = 1

KERB_FILLET_RADIUS = 8.0
DEFAULT_APPROACH_LENGTH = 40.0
KERB_CHORD_ERROR = 0.02


class ScenarioError(ValueError):
    """Invalid roundabout geometry."""


class ScenarioFormatError(ValueError):
    """Malformed or unsupported scenario file."""


@dataclass(frozen=True)
class Entry:
    angle: float
    approach_length: float = DEFAULT_APPROACH_LENGTH

    def __post_init__(self):
        object.__setattr__(self, "angle", float(self.angle))
        object.__setattr__(self, "approach_length", float(self.approach_length))


@dataclass(frozen=True)
class RoundaboutSpec:
    diameter: float
    entries: tuple[Entry, ...]
    lane_width: float = 3.7
    lanes_per_carriageway: int = 2

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(
            e if isinstance(e, Entry) else Entry(*e) if isinstance(e, (tuple, list)) else Entry(**e)
            for e in self.entries))
        object.__setattr__(self, "diameter", float(self.diameter))
        object.__setattr__(self, "lane_width", float(self.lane_width))
        if not self.diameter > 0:
            raise ScenarioError("diameter must be positive")
        if not self.lane_width > 0:
            raise ScenarioError("lane_width must be positive")
        if self.lanes_per_carriageway != 2:
            raise ScenarioError("only two-lane carriageways are supported")
        if not 3 <= len(self.entries) <= 4:
            raise ScenarioError("roundabouts need 3 or 4 entries")
        wrapped = [round(math.fmod(e.angle, 2 * math.pi) % (2 * math.pi), 12) for e in self.entries]
        if len(set(wrapped)) != len(wrapped):
            raise ScenarioError("entry angles must be pairwise distinct")
        for e in self.entries:
            if not e.approach_length > 0:
                raise ScenarioError("approach_length must be positive")

    @classmethod
    def evenly_spaced(cls, diameter: float, n_entries: int, offset: float = 0.0, **kw) -> "RoundaboutSpec":
        return cls(diameter, tuple(Entry(offset + 2 * math.pi * k / n_entries) for k in range(n_entries)), **kw)

    @property
    def island_radius(self) -> float:
        return 0.5 * self.diameter

    @property
    def half_road(self) -> float:
        return self.lanes_per_carriageway * self.lane_width

    @property
    def outer_radius(self) -> float:
        return self.island_radius + self.half_road

    def lane_offset(self, lane: int) -> float:
        return (lane + 0.5) * self.lane_width

    def ring_radius(self, lane: int) -> float:
        return self.island_radius + self.lane_offset(lane)


def benchmark_family() -> dict[str, RoundaboutSpec]:
    """The five diameters of the benchmark set; the 40 m one has three entries."""
    return {
        f"roundabout_{d}m": RoundaboutSpec.evenly_spaced(d, 3 if d == 40 else 4)
        for d in (16, 20, 32, 40, 50)
    }


@dataclass(frozen=True)
class WaypointRoute:
    positions: np.ndarray
    forwards: np.ndarray
    entry_index: int = 0
    exit_index: int = 0
    lane_sequence: tuple[str, ...] = ()

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        fwd = np.array(self.forwards, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape != fwd.shape or len(pos) < 2:
            raise ScenarioError("route needs matching (n, 2) positions and forwards, n >= 2")
        pos.setflags(write=False)
        fwd.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "forwards", fwd)
        object.__setattr__(self, "lane_sequence", tuple(self.lane_sequence))

    @classmethod
    def from_points(cls, points, **kw) -> "WaypointRoute":
        """Route whose forward vectors point at the next waypoint."""
        pts = np.asarray(points, dtype=float)
        d = np.diff(pts, axis=0)
        d /= np.hypot(d[:, 0], d[:, 1])[:, None]
        return cls(pts, np.vstack([d, d[-1:]]), **kw)

    def __len__(self):
        return len(self.positions)

    @property
    def length(self) -> float:
        return float(np.hypot(*np.diff(self.positions, axis=0).T).sum())

    def segments(self) -> np.ndarray:
        return np.hstack([self.positions[:-1], self.positions[1:]])

    def __eq__(self, other):
        if not isinstance(other, WaypointRoute):
            return NotImplemented
        return (self.entry_index == other.entry_index and self.exit_index == other.exit_index
                and self.lane_sequence == other.lane_sequence
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.forwards, other.forwards))

    __hash__ = None


@dataclass(frozen=True)
class Scenario:
    spec: RoundaboutSpec
    boundaries: tuple[Polyline, ...]
    routes: tuple[WaypointRoute, ...]
    name: str = ""
    waypoint_spacing: float = 1.0
    _segments: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "boundaries", tuple(self.boundaries))
        object.__setattr__(self, "routes", tuple(self.routes))
        segs = stack_segments(self.boundaries)
        segs.setflags(write=False)
        object.__setattr__(self, "_segments", segs)

    @property
    def kerb_segments(self) -> np.ndarray:
        return self._segments

    def route(self, route_id: int) -> WaypointRoute:
        if not 0 <= route_id < len(self.routes):
            raise IndexError(f"route {route_id} not in scenario {self.name!r} ({len(self.routes)} routes)")
        return self.routes[route_id]


# --- path primitives --------------------------------------------------------

@dataclass(frozen=True)
class _Line:
    start: np.ndarray
    end: np.ndarray

    @property
    def length(self):
        return float(math.hypot(*(self.end - self.start)))

    def point(self, s):
        return self.start + (self.end - self.start) * (s / self.length)

    def tangent(self, s):
        return (self.end - self.start) / self.length


@dataclass(frozen=True)
class _Arc:
    center: np.ndarray
    radius: float
    start: float
    sweep: float

    @property
    def length(self):
        return abs(self.sweep) * self.radius

    def point(self, s):
        a = self.start + math.copysign(s / self.radius, self.sweep)
        return self.center + self.radius * np.array([math.cos(a), math.sin(a)])

    def tangent(self, s):
        a = self.start + math.copysign(s / self.radius, self.sweep)
        t = np.array([-math.sin(a), math.cos(a)])
        return t if self.sweep > 0 else -t


class _Path:
    def __init__(self, parts):
        self.parts = [p for p in parts if p.length > 1e-12]
        self.cum = np.concatenate([[0.0], np.cumsum([p.length for p in self.parts])])

    @property
    def length(self):
        return float(self.cum[-1])

    def _locate(self, s):
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(max(i, 0), len(self.parts) - 1)
        return self.parts[i], min(max(s - self.cum[i], 0.0), self.parts[i].length)

    def point(self, s):
        part, local = self._locate(s)
        return part.point(local)

    def tangent(self, s):
        part, local = self._locate(s)
        return part.tangent(local)

    def sample(self, spacing: float) -> tuple[np.ndarray, np.ndarray]:
        """Points with consecutive Euclidean spacing exactly ``spacing``."""
        s_prev, p_prev = 0.0, self.point(0.0)
        pts = [p_prev]
        total = self.length
        while True:
            lo = s_prev + spacing
            if lo > total:
                break
            hi = min(s_prev + 2.0 * spacing, total)

            def gap(s, p=p_prev):
                return math.hypot(*(self.point(s) - p)) - spacing

            g_lo = gap(lo)
            if g_lo >= 0.0:
                s_new = lo
            else:
                if gap(hi) < 0.0:
                    break
                s_new = brentq(gap, lo, hi, xtol=1e-13, rtol=1e-15)
            p_prev = self.point(s_new)
            # pin the chord length exactly to the spacing
            d = p_prev - pts[-1]
            p_prev = pts[-1] + d * (spacing / math.hypot(*d))
            pts.append(p_prev)
            s_prev = s_new
        pts = np.array(pts)
        d = np.diff(pts, axis=0)
        fwd = d / np.hypot(d[:, 0], d[:, 1])[:, None]
        last = self.tangent(s_prev)
        return pts, np.vstack([fwd, last / math.hypot(*last)])


# --- construction ---------------------------------------------------------------

def _frame(angle):
    u = np.array([math.cos(angle), math.sin(angle)])
    return u, np.array([-u[1], u[0]])


def _geometry(spec: RoundaboutSpec):
    h = spec.half_road
    rf = KERB_FILLET_RADIUS
    dist = spec.outer_radius + rf
    beta = math.asin((h + rf) / dist)
    axial = dist * math.cos(beta)
    return h, rf, beta, axial


def _ccw_order(spec: RoundaboutSpec) -> list[int]:
    return sorted(range(len(spec.entries)), key=lambda i: spec.entries[i].angle % (2 * math.pi))


def _check_clearance(spec: RoundaboutSpec):
    _, _, beta, _ = _geometry(spec)
    order = _ccw_order(spec)
    angles = [spec.entries[i].angle % (2 * math.pi) for i in order]
    for k, a in enumerate(angles):
        b = angles[(k + 1) % len(angles)] + (2 * math.pi if k + 1 == len(angles) else 0.0)
        if b - a <= 2 * beta:
            raise ScenarioError(
                f"approach roads {order[k]} and {order[(k + 1) % len(order)]} overlap: "
                f"{math.degrees(b - a):.1f} deg apart, need > {math.degrees(2 * beta):.1f}")


def _kerbs(spec: RoundaboutSpec) -> list[Polyline]:
    h, rf, beta, axial = _geometry(spec)
    kerbs = [Polyline(circle_polyline((0.0, 0.0), spec.island_radius, KERB_CHORD_ERROR), closed=True)]
    order = _ccw_order(spec)
    for k, ia in enumerate(order):
        ib = order[(k + 1) % len(order)]
        ea, eb = spec.entries[ia], spec.entries[ib]
        ua, na = _frame(ea.angle)
        ub, nb = _frame(eb.angle)
        c_in = axial * ua + (h + rf) * na
        c_out = axial * ub - (h + rf) * nb
        gap = (eb.angle - beta) - (ea.angle + beta)
        gap = gap % (2 * math.pi)
        pieces = [
            np.array([(axial + ea.approach_length) * ua + h * na]),
            circle_polyline(c_in, rf, KERB_CHORD_ERROR, ea.angle - math.pi / 2, beta - math.pi / 2),
            circle_polyline((0.0, 0.0), spec.outer_radius, KERB_CHORD_ERROR, ea.angle + beta, gap),
            circle_polyline(c_out, rf, KERB_CHORD_ERROR, eb.angle - beta + math.pi, beta - math.pi / 2),
            np.array([(axial + eb.approach_length) * ub - h * nb]),
        ]
        pts = [pieces[0][0]]
        for piece in pieces[1:]:
            for p in piece:
                if math.hypot(*(p - pts[-1])) > 1e-6:
                    pts.append(p)
        kerbs.append(Polyline(np.array(pts)))
    return kerbs


def _route_path(spec: RoundaboutSpec, entry: int, exit_: int, lane: int) -> _Path:
    h, rf, beta, axial = _geometry(spec)
    o = spec.lane_offset(lane)
    rho = h + rf - o
    rc = spec.ring_radius(lane)
    ea, eb = spec.entries[entry], spec.entries[exit_]
    ua, na = _frame(ea.angle)
    ub, nb = _frame(eb.angle)
    c_in = axial * ua + (h + rf) * na
    c_out = axial * ub - (h + rf) * nb
    ring = ((eb.angle - beta) - (ea.angle + beta)) % (2 * math.pi)
    if entry == exit_:
        ring = 2 * math.pi - 2 * beta
    return _Path([
        _Line((axial + ea.approach_length) * ua + o * na, axial * ua + o * na),
        _Arc(c_in, rho, ea.angle - math.pi / 2, beta - math.pi / 2),
        _Arc(np.zeros(2), rc, ea.angle + beta, ring),
        _Arc(c_out, rho, eb.angle - beta + math.pi, beta - math.pi / 2),
        _Line(axial * ub - o * nb, (axial + eb.approach_length) * ub - o * nb),
    ])


def route_plan(spec: RoundaboutSpec) -> list[tuple[int, int, int]]:
    """``(entry, exit, lane)`` triples served by the roundabout.

    Each entry serves the next three exits counter-clockwise, wrapping to a
    U-turn on three-entry roundabouts. The first exit is reached from the
    outer lane only, a U-turn from the inner lane only, the rest from either.
    """
    order = _ccw_order(spec)
    n = len(order)
    plan = []
    for pos, entry in enumerate(order):
        for k in range(1, 4):
            exit_ = order[(pos + k) % n]
            if k == 1:
                lanes = [1]
            elif exit_ == entry:
                lanes = [0]
            else:
                lanes = [1, 0]
            plan.extend((entry, exit_, lane) for lane in lanes)
    plan.sort(key=lambda t: t[0])
    return plan


def enumerate_routes(scenario_or_spec, waypoint_spacing: float | None = None) -> list[WaypointRoute]:
    if isinstance(scenario_or_spec, Scenario):
        spec = scenario_or_spec.spec
        waypoint_spacing = waypoint_spacing or scenario_or_spec.waypoint_spacing
    else:
        spec = scenario_or_spec
    waypoint_spacing = waypoint_spacing or 1.0
    routes = []
    for entry, exit_, lane in route_plan(spec):
        pos, fwd = _route_path(spec, entry, exit_, lane).sample(waypoint_spacing)
        routes.append(WaypointRoute(pos, fwd, entry, exit_,
                                    (f"entry{entry}:lane{lane}", f"ring:lane{lane}", f"exit{exit_}:lane{lane}")))
    return routes


def analytic_route_length(spec: RoundaboutSpec, entry: int, exit_: int, lane: int) -> float:
    return _route_path(spec, entry, exit_, lane).length


def generate_roundabout(spec: RoundaboutSpec, waypoint_spacing: float = 1.0, name: str | None = None) -> Scenario:
    if not waypoint_spacing > 0:
        raise ScenarioError("waypoint_spacing must be positive")
    _check_clearance(spec)
    return Scenario(spec, tuple(_kerbs(spec)), tuple(enumerate_routes(spec, waypoint_spacing)),
                    name if name is not None else f"roundabout_{spec.diameter:g}m", waypoint_spacing)


# --- persistence ---------------------------------------------------------------

def scenario_to_dict(s: Scenario) -> dict:
    return {
        "format": SCENARIO_FORMAT,
        "version": SCENARIO_VERSION,
        "name": s.name,
        "waypoint_spacing": s.waypoint_spacing,
        "spec": {
            "diameter": s.spec.diameter,
            "lane_width": s.spec.lane_width,
            "lanes_per_carriageway": s.spec.lanes_per_carriageway,
            "entries": [{"angle": e.angle, "approach_length": e.approach_length} for e in s.spec.entries],
        },
        "boundaries": [{"closed": b.closed, "points": b.points.tolist()} for b in s.boundaries],
        "routes": [{
            "entry_index": r.entry_index,
            "exit_index": r.exit_index,
            "lane_sequence": list(r.lane_sequence),
            "positions": r.positions.tolist(),
            "forwards": r.forwards.tolist(),
        } for r in s.routes],
    }


def dumps_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=1) + "\n"


def save_scenario(s: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(dumps_scenario(s))
    return path


def _field(obj, key, where, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise ScenarioFormatError(f"{where}: missing field {key!r}")
    val = obj[key]
    if kind is not None and not isinstance(val, kind) or isinstance(val, bool) and kind is not bool:
        raise ScenarioFormatError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}")
    return val


def scenario_from_dict(d: dict) -> Scenario:
    if _field(d, "format", "scenario", str) != SCENARIO_FORMAT:
        raise ScenarioFormatError(f"scenario.format: expected {SCENARIO_FORMAT!r}")
    version = _field(d, "version", "scenario", int)
    if version != SCENARIO_VERSION:
        raise ScenarioFormatError(f"scenario.version: unsupported version {version} (supported: {SCENARIO_VERSION})")
    num = (int, float)
    sd = _field(d, "spec", "scenario", dict)
    entries = [Entry(float(_field(e, "angle", f"spec.entries[{i}]", num)),
                     float(_field(e, "approach_length", f"spec.entries[{i}]", num)))
               for i, e in enumerate(_field(sd, "entries", "spec", list))]
    try:
        spec = RoundaboutSpec(float(_field(sd, "diameter", "spec", num)), tuple(entries),
                              float(_field(sd, "lane_width", "spec", num)),
                              _field(sd, "lanes_per_carriageway", "spec", int))
    except ScenarioError as exc:
        raise ScenarioFormatError(f"spec: {exc}") from None
    try:
        bounds = tuple(Polyline(np.array(_field(b, "points", f"boundaries[{i}]", list), dtype=float),
                                bool(_field(b, "closed", f"boundaries[{i}]", bool)))
                       for i, b in enumerate(_field(d, "boundaries", "scenario", list)))
        routes = tuple(WaypointRoute(
            np.array(_field(r, "positions", f"routes[{i}]", list), dtype=float),
            np.array(_field(r, "forwards", f"routes[{i}]", list), dtype=float),
            _field(r, "entry_index", f"routes[{i}]", int),
            _field(r, "exit_index", f"routes[{i}]", int),
            tuple(_field(r, "lane_sequence", f"routes[{i}]", list)),
        ) for i, r in enumerate(_field(d, "routes", "scenario", list)))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ScenarioFormatError):
            raise
        raise ScenarioFormatError(f"geometry: {exc}") from None
    spacing = float(_field(d, "waypoint_spacing", "scenario", num))
    return Scenario(spec, bounds, routes, _field(d, "name", "scenario", str), spacing)


def loads_scenario(text: str) -> Scenario:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(d)


def load_scenario(path) -> Scenario:
    return loads_scenario(Path(path).read_text())


@functools.lru_cache(maxsize=4)
def _default_scenarios(waypoint_spacing: float) -> tuple:
    return tuple((name, generate_roundabout(spec, waypoint_spacing, name)) for name, spec in benchmark_family().items())


def default_scenarios(waypoint_spacing: float = 1.0) -> dict[str, Scenario]:
    """The benchmark family, generated once per spacing (scenarios are immutable)."""
    return dict(_default_scenarios(float(waypoint_spacing)))


def first_exit_route(scenario: Scenario, entry: int = 0) -> int:
    """Index of the first-exit route from ``entry``."""
    order = _ccw_order(scenario.spec)
    target = order[(order.index(entry) + 1) % len(order)]
    for i, r in enumerate(scenario.routes):
        if r.entry_index == entry and r.exit_index == target:
            return i
    raise LookupError(f"no first-exit route from entry {entry}")


def routes_by_entry(scenario: Scenario) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    for i, r in enumerate(scenario.routes):
        out.setdefault(r.entry_index, []).append(i)
    return out

