"""Episode semantics: steering actions, PID speed hold, reward and termination."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .control import Drivetrain, PidController
from .features import FeatureConfig, RouteTracker, advance_tracker, build_observation, distance_to_route
from .geom2d import wrap_angle
from .scenario import Scenario
from .vehicle import FailureCause, TractorTrailerState, VehicleSpec, check_collision, footprints, \
    state_from_center, step_kinematics

STEERING_LEVELS = (0.0, 0.2, -0.2, 0.4, -0.4, 0.6, -0.6, 0.8, -0.8)
N_ACTIONS = len(STEERING_LEVELS)

# Ziegler-Nichols gains for the default drivetrain (see control.ziegler_nichols_tune)
ZN_GAINS = (6.423001780090545, 14.922125347685107, 0.6911708437271347)


class EpisodeFinishedError(RuntimeError):
    pass


def steering_value(action: int) -> float:
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"action must be in 0..{N_ACTIONS - 1}, got {action}")
    return STEERING_LEVELS[action]


def shaping_reward(distance_to_center: float, weight: float = 1.5, clip: float = 4.0) -> float:
    """Lane-centre penalty: ``-weight * clip(d, 0, clip) / clip``."""
    return -weight * (min(max(distance_to_center, 0.0), clip) / clip)


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 0.05
    target_speed: float = 30.0 / 3.6
    accel_limit: float = 2.0
    kp: float = ZN_GAINS[0]
    ki: float = ZN_GAINS[1]
    kd: float = ZN_GAINS[2]
    drive_lag: float = 0.15
    drive_delay: float = 0.1
    jitter_lateral: float = 0.3
    jitter_heading: float = 0.05
    divergence_distance: float = 8.0
    timeout_factor: float = 3.0
    waypoint_reward: float = 100.0
    failure_reward: float = -500.0
    shaping_weight: float = 1.5
    shaping_clip: float = 4.0
    vehicle: VehicleSpec = field(default_factory=VehicleSpec)
    features: FeatureConfig = field(default_factory=FeatureConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["features"] = self.features.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown env config fields: {sorted(unknown)}")
        if "vehicle" in d and not isinstance(d["vehicle"], VehicleSpec):
            d["vehicle"] = VehicleSpec(**d["vehicle"])
        if "features" in d and not isinstance(d["features"], FeatureConfig):
            d["features"] = FeatureConfig.from_dict(d["features"])
        return cls(**d)


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


class RoundaboutEnv:
    """One tractor-trailer on one route of one scenario at a time."""

    def __init__(self, scenario: Scenario, config: EnvConfig = EnvConfig(), seed: int | None = None):
        self.scenario = scenario
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.pid = PidController(config.kp, config.ki, config.kd, config.target_speed, config.accel_limit)
        self.drive = Drivetrain(config.drive_lag, config.drive_delay)
        self.state: TractorTrailerState | None = None
        self.tracker: RouteTracker | None = None
        self.route_id: int | None = None
        self.steps = 0
        self.done = True
        self.max_steps = 0

    @property
    def route(self):
        return self.tracker.route

    def reset(self, route_id: int = 0, seed: int | None = None, scenario: Scenario | None = None) -> np.ndarray:
        if scenario is not None:
            self.scenario = scenario
        route = self.scenario.route(route_id)
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        cfg = self.config
        lat = self.rng.uniform(-cfg.jitter_lateral, cfg.jitter_lateral) if cfg.jitter_lateral > 0 else 0.0
        dh = self.rng.uniform(-cfg.jitter_heading, cfg.jitter_heading) if cfg.jitter_heading > 0 else 0.0
        fwd = route.forwards[0]
        left = np.array([-fwd[1], fwd[0]])
        heading = math.atan2(fwd[1], fwd[0]) + dh
        self.state = state_from_center(route.positions[0] + lat * left, heading, cfg.vehicle)
        self.pid.reset()
        self.drive.reset()
        # waypoints already within reach at spawn are consumed without reward
        self.tracker, _ = advance_tracker(RouteTracker.start(route, cfg.features), self.center)
        self.route_id = route_id
        self.steps = 0
        self.done = False
        self.max_steps = int(math.ceil(cfg.timeout_factor * route.length / (cfg.target_speed * cfg.dt)))
        return self.observe()

    @property
    def center(self) -> np.ndarray:
        return self.state.truck_center(self.config.vehicle)

    def observe(self) -> np.ndarray:
        return build_observation(self.state, self.tracker, self.scenario, self.config.vehicle, self.config.features)

    def distance_to_center(self) -> float:
        return distance_to_route(self.center, self.tracker.route, self.tracker.current_index)

    def step(self, action: int) -> StepResult:
        if self.done:
            raise EpisodeFinishedError("episode is finished; call reset()")
        cfg = self.config
        wheel = steering_value(int(action)) * cfg.vehicle.max_wheel_angle
        accel = self.drive.step(self.pid(self.state.speed, cfg.dt), cfg.dt)
        self.state = step_kinematics(self.state, wheel, accel, cfg.dt, cfg.vehicle)
        self.steps += 1
        self.tracker, passed = advance_tracker(self.tracker, self.center)
        dist = self.distance_to_center()

        cause = check_collision(footprints(self.state, cfg.vehicle), self.scenario.kerb_segments)
        if cause is FailureCause.NONE:
            if self.state.jackknifed(cfg.vehicle) or dist > cfg.divergence_distance:
                cause = FailureCause.DIVERGENCE
            elif self.steps > self.max_steps and not self.tracker.finished:
                cause = FailureCause.TIMEOUT
        failed = cause is not FailureCause.NONE
        success = self.tracker.finished and not failed

        reward = shaping_reward(dist, cfg.shaping_weight, cfg.shaping_clip)
        reward += cfg.failure_reward if failed else cfg.waypoint_reward * passed
        self.done = failed or success
        info = {
            "passed_waypoints": passed,
            "distance_to_center": dist,
            "failure_cause": cause,
            "progress_fraction": self.tracker.current_index / len(self.tracker.route),
            "success": success,
            "steps": self.steps,
        }
        return StepResult(self.observe(), float(reward), self.done, info)


def rollout(env: RoundaboutEnv, policy, route_id: int, seed: int | None = None, record: bool = False):
    """Run ``policy(obs) -> action`` to the end of one episode."""
    obs = env.reset(route_id, seed)
    total, rows = 0.0, []
    while True:
        a = int(policy(obs))
        res = env.step(a)
        total += res.reward
        if record:
            s = env.state
            c = env.center
            rows.append((env.steps * env.config.dt, float(c[0]), float(c[1]), s.heading, s.trailer_heading,
                         s.speed, a, res.reward, res.info["distance_to_center"]))
        obs = res.observation
        if res.done:
            return total, res.info, rows


def lane_follow_policy(env: RoundaboutEnv, lookahead: float = 6.0, gain: float = 1.0):
    """Pure-pursuit reference driver snapped to the nearest discrete action."""
    levels = np.array(STEERING_LEVELS)

    def policy(_obs):
        st, spec = env.state, env.config.vehicle
        route = env.tracker.route
        idx = env.tracker.lookahead_index(max(1, int(round(lookahead / env.scenario.waypoint_spacing))))
        target = route.positions[idx]
        rear = st.position
        alpha = wrap_angle(math.atan2(target[1] - rear[1], target[0] - rear[0]) - st.heading)
        ld = max(math.hypot(*(target - rear)), 1e-6)
        delta = math.atan2(2.0 * spec.truck_wheelbase * math.sin(alpha), ld) * gain
        return int(np.argmin(np.abs(levels * spec.max_wheel_angle - delta)))

    return policy


def swing_offsets(route, swing: float, ramp: int = 8) -> np.ndarray:
    """Lateral target offsets (left positive) pushing the path to the outside of each bend."""
    fwd = route.forwards
    head = np.unwrap(np.arctan2(fwd[:, 1], fwd[:, 0]))
    turn = np.zeros(len(fwd))
    turn[1:] = np.diff(head)
    side = -np.sign(turn) * (np.abs(turn) > 1e-3)
    kernel = np.ones(2 * ramp + 1) / (2 * ramp + 1)
    padded = np.concatenate([np.full(ramp, side[0]), side, np.full(ramp, side[-1])])
    # doubling then clipping reaches the full offset where the bend starts, ramping in before it
    return swing * np.clip(2.0 * np.convolve(padded, kernel, mode="valid"), -1.0, 1.0)


def wide_turn_policy(env: RoundaboutEnv, swing: float = 2.0, lookahead: int = 3, ramp: int = 8):
    """Pure pursuit on a path shifted toward the outside of bends, leaving room for trailer off-tracking."""
    levels = np.array(STEERING_LEVELS)
    cache = {}

    def policy(_obs):
        route = env.tracker.route
        key = id(route)
        if key not in cache:
            fwd = route.forwards
            left = np.column_stack([-fwd[:, 1], fwd[:, 0]])
            cache.clear()
            cache[key] = route.positions + swing_offsets(route, swing, ramp)[:, None] * left
        st, spec = env.state, env.config.vehicle
        target = cache[key][env.tracker.lookahead_index(lookahead)]
        rear = st.position
        alpha = wrap_angle(math.atan2(target[1] - rear[1], target[0] - rear[0]) - st.heading)
        ld = max(math.hypot(*(target - rear)), 1e-6)
        delta = math.atan2(2.0 * spec.truck_wheelbase * math.sin(alpha), ld)
        return int(np.argmin(np.abs(levels * spec.max_wheel_angle - delta)))

    return policy


def with_jitter(config: EnvConfig, lateral: float, heading: float) -> EnvConfig:
    return replace(config, jitter_lateral=lateral, jitter_heading=heading)
