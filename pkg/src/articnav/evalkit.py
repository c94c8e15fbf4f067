"""Greedy-policy evaluation, success and failure statistics, and path-trace export.

Trace CSV format (stable)::

    # articnav-trace 1
    # terminal {"success": ..., "failure_cause": ..., "total_reward": ..., "steps": ..., ...}
    t,x,y,heading,trailer_heading,speed,action,reward,distance_to_center
    ...

``x, y`` is the truck body centre in metres, headings are radians, ``t`` is
seconds since reset. Floats are written with ``repr`` so a round trip is exact.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .envmdp import EnvConfig, RoundaboutEnv
from .features import LAYOUT_VERSION
from .geom2d import fit_circle_from_chords
from .scenario import Scenario, WaypointRoute
from .vehicle import FailureCause

TRACE_FORMAT = "articnav-trace"
TRACE_VERSION = 1
TRACE_COLUMNS = ("t", "x", "y", "heading", "trailer_heading", "speed", "action", "reward", "distance_to_center")
COMFORT_ARTICULATION = 0.35
SVG_SCALE = 10.0
# Full-scale results of the original large run, reported next to ours as soft targets.
REFERENCE_TARGETS = {"success_rate": 0.73, "mean_distance_to_center": 0.73, "training_reward_plateau": 5100.0}
PALETTE = {"kerb": "#404040", "route": "#1a9e1a", "path": "#e6c300", "marker": "#d62020", "background": "#ffffff"}


class TraceFormatError(ValueError):
    pass


@dataclass
class EpisodeTrace:
    rows: list = field(default_factory=list)
    success: bool = False
    failure_cause: str = FailureCause.NONE.value
    total_reward: float = 0.0
    steps: int = 0
    scenario: str = ""
    route_id: int = -1
    seed: int | None = None

    def terminal(self) -> dict:
        return {"success": self.success, "failure_cause": self.failure_cause, "total_reward": self.total_reward,
                "steps": self.steps, "scenario": self.scenario, "route_id": self.route_id, "seed": self.seed}

    def path(self) -> np.ndarray:
        return np.array([(r[1], r[2]) for r in self.rows]).reshape(-1, 2)

    def mean_distance(self) -> float:
        """Time-average distance to the lane centre over the episode."""
        return float(np.mean([r[8] for r in self.rows])) if self.rows else math.nan


def run_episode(env: RoundaboutEnv, policy: Callable, route_id: int, seed: int | None = None) -> EpisodeTrace:
    obs = env.reset(route_id, seed)
    trace = EpisodeTrace(scenario=env.scenario.name, route_id=route_id, seed=seed)
    while True:
        a = int(policy(obs))
        res = env.step(a)
        c, s = env.center, env.state
        trace.rows.append((env.steps * env.config.dt, float(c[0]), float(c[1]), s.heading, s.trailer_heading,
                           s.speed, a, res.reward, res.info["distance_to_center"]))
        trace.total_reward += res.reward
        obs = res.observation
        if res.done:
            trace.success = bool(res.info["success"])
            trace.failure_cause = FailureCause(res.info["failure_cause"]).value
            trace.steps = env.steps
            return trace


# --- deviation flag ---------------------------------------------------------------

def critical_radius(trailer_length: float, max_articulation: float = COMFORT_ARTICULATION) -> float:
    return trailer_length / math.sin(max_articulation)


def min_route_radius(route: WaypointRoute, chord_step: int = 5) -> float:
    p = route.positions
    span = 2 * chord_step
    best = math.inf
    for s in range(len(p) - span):
        est = fit_circle_from_chords(p[s:s + span + 1], chord_step)
        if not est.straight:
            best = min(best, est.radius)
    return best


def requires_deviation(route: WaypointRoute, trailer_length: float = 8.0,
                       max_articulation: float = COMFORT_ARTICULATION) -> bool:
    """True when some stretch of the route is tighter than the comfortable-articulation radius."""
    return min_route_radius(route) < critical_radius(trailer_length, max_articulation)


def max_lateral_offset(trace: EpisodeTrace, route: WaypointRoute) -> float:
    if not trace.rows:
        return 0.0
    from .features import distance_to_route
    return max(distance_to_route(p, route) for p in trace.path())


# --- reports --------------------------------------------------------------------

@dataclass
class RouteReport:
    key: str
    episodes: int = 0
    successes: int = 0
    failures: Counter = field(default_factory=Counter)
    distances: list = field(default_factory=list)
    requires_deviation: bool = False

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes if self.episodes else 0.0

    @property
    def mean_distance_to_center(self) -> float:
        return float(np.mean(self.distances)) if self.distances else math.nan

    def to_dict(self) -> dict:
        return {"route": self.key, "episodes": self.episodes, "successes": self.successes,
                "success_rate": self.success_rate, "failures": dict(sorted(self.failures.items())),
                "mean_distance_to_center": self.mean_distance_to_center,
                "requires_deviation": self.requires_deviation}


@dataclass
class EvalReport:
    routes: dict = field(default_factory=dict)

    @property
    def episodes(self) -> int:
        return sum(r.episodes for r in self.routes.values())

    @property
    def success_fraction(self) -> Fraction:
        n = self.episodes
        return Fraction(sum(r.successes for r in self.routes.values()), n) if n else Fraction(0)

    @property
    def success_rate(self) -> float:
        return float(self.success_fraction)

    @property
    def failures(self) -> Counter:
        total = Counter()
        for r in self.routes.values():
            total.update(r.failures)
        return total

    def mean_distance_to_center(self, include_deviating: bool = False) -> float:
        """Per-episode time averages, then averaged over episodes of the selected routes."""
        d = [x for r in self.routes.values() if include_deviating or not r.requires_deviation for x in r.distances]
        return float(np.mean(d)) if d else math.nan

    def to_dict(self) -> dict:
        return {"episodes": self.episodes, "success_rate": self.success_rate,
                "failures": dict(sorted(self.failures.items())),
                "mean_distance_to_center": self.mean_distance_to_center(),
                "mean_distance_to_center_all_routes": self.mean_distance_to_center(True),
                "routes": [r.to_dict() for r in self.routes.values()],
                "reference_targets": dict(REFERENCE_TARGETS)}

    def to_text(self) -> str:
        lines = [f"episodes {self.episodes}", f"success_rate {self.success_rate:.4f}",
                 "failures " + " ".join(f"{k}={v}" for k, v in sorted(self.failures.items())),
                 f"mean_distance_to_center {self.mean_distance_to_center():.4f}",
                 f"mean_distance_to_center_all_routes {self.mean_distance_to_center(True):.4f}",
                 "reference_targets " + " ".join(f"{k}={v:g}" for k, v in REFERENCE_TARGETS.items())]
        for r in self.routes.values():
            lines.append(f"route {r.key} episodes {r.episodes} success_rate {r.success_rate:.4f} "
                         f"mean_distance {r.mean_distance_to_center:.4f} deviation {int(r.requires_deviation)} "
                         + " ".join(f"{k}={v}" for k, v in sorted(r.failures.items())))
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> Path:
        causes = [c.value for c in FailureCause]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["route", "episodes", "successes", "success_rate", "mean_distance_to_center",
                        "requires_deviation", *causes])
            for r in self.routes.values():
                w.writerow([r.key, r.episodes, r.successes, repr(r.success_rate), repr(r.mean_distance_to_center),
                            int(r.requires_deviation), *[r.failures.get(c, 0) for c in causes]])
        return Path(path)


def agent_policy(agent) -> Callable:
    """Greedy (argmax) policy of a trained agent."""
    return lambda obs: agent.select_action(obs, mode="eval")


def load_policy(checkpoint) -> Callable:
    from .sacd import SacAgent
    agent, _ = SacAgent.load(checkpoint, layout_version=LAYOUT_VERSION)
    return agent_policy(agent)


def evaluate(policy, scenarios: Sequence[Scenario], routes: Iterable[tuple[int, int]] | None = None,
             episodes_per_route: int = 30, seed: int = 0, config: EnvConfig = EnvConfig(),
             deviation_overrides: dict | None = None, policy_factory: Callable | None = None,
             ) -> tuple[EvalReport, list[EpisodeTrace]]:
    """Run greedy episodes over ``(scenario_index, route_id)`` pairs (all routes by default).

    ``policy`` is an observation-to-action callable, a checkpoint path, or
    ``None`` with ``policy_factory(env)`` building a per-environment driver.
    """
    if isinstance(policy, (str, Path)):
        policy = load_policy(policy)
    if routes is None:
        routes = [(i, r) for i, sc in enumerate(scenarios) for r in range(len(sc.routes))]
    overrides = deviation_overrides or {}
    report = EvalReport()
    traces = []
    for si, rid in routes:
        sc = scenarios[si]
        key = f"{sc.name}:{rid}"
        env = RoundaboutEnv(sc, config)
        pol = policy_factory(env) if policy_factory is not None else policy
        rr = RouteReport(key, requires_deviation=overrides.get(
            key, requires_deviation(sc.route(rid), config.vehicle.trailer_length)))
        for ep in range(episodes_per_route):
            ep_seed = int(np.random.SeedSequence([seed, si, rid, ep]).generate_state(1)[0])
            tr = run_episode(env, pol, rid, ep_seed)
            rr.episodes += 1
            rr.successes += tr.success
            rr.failures[tr.failure_cause] += 1
            rr.distances.append(tr.mean_distance())
            traces.append(tr)
        report.routes[key] = rr
    return report, traces


# --- trace files ------------------------------------------------------------------

def trace_to_csv_text(trace: EpisodeTrace) -> str:
    buf = io.StringIO()
    buf.write(f"# {TRACE_FORMAT} {TRACE_VERSION}\n")
    buf.write("# terminal " + json.dumps(trace.terminal(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in trace.rows:
        w.writerow([repr(float(v)) if i != 6 else str(int(v)) for i, v in enumerate(r)])
    return buf.getvalue()


def export_trace_csv(trace: EpisodeTrace, path) -> Path:
    Path(path).write_text(trace_to_csv_text(trace))
    return Path(path)


def parse_trace_csv(text: str) -> EpisodeTrace:
    lines = text.splitlines()
    if len(lines) < 3 or lines[0] != f"# {TRACE_FORMAT} {TRACE_VERSION}":
        raise TraceFormatError(f"not a {TRACE_FORMAT} v{TRACE_VERSION} file")
    if not lines[1].startswith("# terminal "):
        raise TraceFormatError("line 2: missing terminal record")
    try:
        term = json.loads(lines[1][len("# terminal "):])
    except ValueError as exc:
        raise TraceFormatError(f"line 2: bad terminal record ({exc})") from None
    reader = csv.reader(lines[2:])
    header = next(reader)
    if tuple(header) != TRACE_COLUMNS:
        raise TraceFormatError(f"line 3: unexpected columns {header}")
    rows = []
    for n, rec in enumerate(reader, start=4):
        if len(rec) != len(TRACE_COLUMNS):
            raise TraceFormatError(f"line {n}: expected {len(TRACE_COLUMNS)} fields, got {len(rec)}")
        try:
            rows.append(tuple(int(v) if i == 6 else float(v) for i, v in enumerate(rec)))
        except ValueError as exc:
            raise TraceFormatError(f"line {n}: {exc}") from None
    return EpisodeTrace(rows, term["success"], term["failure_cause"], term["total_reward"], term["steps"],
                        term.get("scenario", ""), term.get("route_id", -1), term.get("seed"))


def read_trace_csv(path) -> EpisodeTrace:
    return parse_trace_csv(Path(path).read_text())


def trace_svg(trace: EpisodeTrace, scenario: Scenario, route: WaypointRoute | None = None,
              scale: float = SVG_SCALE, margin: float = 5.0) -> str:
    """Map, route waypoints (green), truck path (yellow), start circle and end triangle."""
    if route is None and 0 <= trace.route_id < len(scenario.routes):
        route = scenario.routes[trace.route_id]
    pts = [b.points for b in scenario.boundaries]
    path = trace.path()
    allp = np.vstack(pts + ([route.positions] if route is not None else []) + ([path] if len(path) else []))
    lo = allp.min(axis=0) - margin
    hi = allp.max(axis=0) + margin
    w, h = (hi - lo) * scale

    def xy(p):
        return (p[0] - lo[0]) * scale, (hi[1] - p[1]) * scale

    def fmt(p):
        x, y = xy(p)
        return f"{x:.2f},{y:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
           f'viewBox="0 0 {w:.2f} {h:.2f}">',
           f'<rect width="100%" height="100%" fill="{PALETTE["background"]}"/>',
           '<g id="kerbs" fill="none" stroke="{0}" stroke-width="2">'.format(PALETTE["kerb"])]
    for b in scenario.boundaries:
        tag = "polygon" if b.closed else "polyline"
        out.append(f'<{tag} points="{" ".join(fmt(p) for p in b.points)}"/>')
    out.append("</g>")
    if route is not None:
        out.append(f'<g id="route" fill="{PALETTE["route"]}">')
        out += [f'<circle cx="{xy(p)[0]:.2f}" cy="{xy(p)[1]:.2f}" r="2"/>' for p in route.positions]
        out.append("</g>")
    if len(path):
        out.append(f'<g id="path" fill="{PALETTE["path"]}">')
        out += [f'<circle cx="{xy(p)[0]:.2f}" cy="{xy(p)[1]:.2f}" r="1.5"/>' for p in path]
        out.append("</g>")
    start = path[0] if len(path) else (route.positions[0] if route is not None else None)
    end = path[-1] if len(path) else (route.positions[-1] if route is not None else None)
    if start is not None:
        sx, sy = xy(start)
        ex, ey = xy(end)
        r = 0.8 * scale
        out.append(f'<circle id="start" cx="{sx:.2f}" cy="{sy:.2f}" r="{r:.2f}" fill="{PALETTE["marker"]}"/>')
        tri = f"{ex:.2f},{ey - r:.2f} {ex - r:.2f},{ey + r:.2f} {ex + r:.2f},{ey + r:.2f}"
        out.append(f'<polygon id="end" points="{tri}" fill="{PALETTE["marker"]}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_trace_svg(trace: EpisodeTrace, scenario: Scenario, path, route: WaypointRoute | None = None) -> Path:
    Path(path).write_text(trace_svg(trace, scenario, route))
    return Path(path)
