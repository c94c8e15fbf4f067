"""Longitudinal speed control: PID, drivetrain response and Ziegler-Nichols tuning."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.signal import find_peaks

TARGET_SPEED = 30.0 / 3.6


class ZieglerNicholsError(RuntimeError):
    pass


@dataclass
class PidController:
    kp: float
    ki: float
    kd: float
    target_speed: float = TARGET_SPEED
    output_limit: float = 2.0
    integral_limit: float = 2.0
    integral: float = 0.0
    prev_error: float | None = None

    def reset(self):
        self.integral = 0.0
        self.prev_error = None

    def __call__(self, current_speed: float, dt: float) -> float:
        return pid_acceleration(self, current_speed, dt)


def pid_acceleration(pid: PidController, current_speed: float, dt: float) -> float:
    """Positional PID on speed error with conditional integration and clamped output."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    err = pid.target_speed - current_speed
    deriv = 0.0 if pid.prev_error is None else (err - pid.prev_error) / dt
    pid.prev_error = err
    trial = pid.integral + err * dt
    trial = min(max(trial, -pid.integral_limit), pid.integral_limit)
    raw = pid.kp * err + pid.ki * trial + pid.kd * deriv
    lim = pid.output_limit
    # freeze the integrator while the output is saturated in the direction of the error
    if not (raw > lim and err > 0 or raw < -lim and err < 0):
        pid.integral = trial
    out = pid.kp * err + pid.ki * pid.integral + pid.kd * deriv
    return min(max(out, -lim), lim)


@dataclass
class Drivetrain:
    """Commanded to delivered acceleration: transport delay then first-order lag."""

    lag: float = 0.15
    delay: float = 0.1
    accel: float = 0.0
    _queue: deque = field(default_factory=deque, repr=False)

    def reset(self):
        self.accel = 0.0
        self._queue.clear()

    def step(self, command: float, dt: float) -> float:
        n = int(round(self.delay / dt))
        self._queue.append(command)
        delayed = self._queue.popleft() if len(self._queue) > n else 0.0
        if self.lag > 0:
            self.accel += (1.0 - math.exp(-dt / self.lag)) * (delayed - self.accel)
        else:
            self.accel = delayed
        return self.accel


class SpeedPlant:
    """Vehicle speed driven through the drivetrain; the plant the PID runs on."""

    def __init__(self, lag: float = 0.15, delay: float = 0.1, accel_limit: float = 2.0, speed0: float = 0.0):
        self.drive = Drivetrain(lag, delay)
        self.accel_limit = accel_limit
        self.speed0 = speed0
        self.speed = speed0

    def reset(self, y0: float | None = None):
        self.drive.reset()
        self.speed = self.speed0 if y0 is None else y0
        return self.speed

    def step(self, u: float, dt: float) -> float:
        u = min(max(u, -self.accel_limit), self.accel_limit)
        self.speed = max(0.0, self.speed + self.drive.step(u, dt) * dt)
        return self.speed


class FirstOrderDelayPlant:
    """``K e^{-Ls} / (tau s + 1)`` with exact zero-order-hold discretisation."""

    def __init__(self, gain: float, tau: float, delay: float):
        self.gain, self.tau, self.delay = gain, tau, delay
        self.y = 0.0
        self._queue: deque = deque()

    def reset(self, y0: float = 0.0):
        self.y = y0
        self._queue.clear()
        return self.y

    def step(self, u: float, dt: float) -> float:
        self._queue.append(u)
        n = int(round(self.delay / dt))
        d = self._queue.popleft() if len(self._queue) > n else 0.0
        self.y += (1.0 - math.exp(-dt / self.tau)) * (self.gain * d - self.y)
        return self.y

    def ultimate(self) -> tuple[float, float]:
        """Ultimate gain and period from the phase-crossover condition."""
        f = lambda w: math.atan(w * self.tau) + w * self.delay - math.pi  # noqa: E731
        w = brentq(f, 1e-9, math.pi / self.delay)
        return math.hypot(1.0, w * self.tau) / self.gain, 2 * math.pi / w


class IntegratorLagDelayPlant(SpeedPlant):
    """Linearised speed plant (no saturation) for which Ku, Tu are known in closed form."""

    def __init__(self, lag: float = 0.15, delay: float = 0.1):
        super().__init__(lag, delay, accel_limit=math.inf, speed0=0.0)

    def step(self, u: float, dt: float) -> float:
        self.speed += self.drive.step(u, dt) * dt
        return self.speed

    def ultimate(self) -> tuple[float, float]:
        lag, delay = self.drive.lag, self.drive.delay
        f = lambda w: math.atan(w * lag) + w * delay - math.pi / 2  # noqa: E731
        w = brentq(f, 1e-9, math.pi / (2 * delay))
        return w * math.hypot(1.0, w * lag), 2 * math.pi / w


@dataclass(frozen=True)
class ZnResult:
    ku: float
    tu: float
    kp: float
    ki: float
    kd: float


def _oscillation(plant, gain: float, setpoint: float, y0: float, dt: float, window: float):
    """Per-period amplitude ratio and period of the P-only loop, or ``None`` without oscillation."""
    y = plant.reset(y0)
    n = int(round(window / dt))
    out = np.empty(n)
    for i in range(n):
        y = plant.step(gain * (setpoint - y), dt)
        if not math.isfinite(y) or abs(y) > 1e9:
            out = out[:i]
            break
        out[i] = y
    if len(out) < 10:
        return math.inf, math.nan
    peaks, _ = find_peaks(out)
    troughs, _ = find_peaks(-out)
    if len(peaks) < 3 or len(troughs) < 3:
        return None
    ext = np.sort(np.concatenate([peaks, troughs]))
    swings = np.abs(np.diff(out[ext]))
    keep = swings > 1e-12 * max(1.0, abs(setpoint))
    if keep.sum() < 4:
        return None
    t = ext[1:][keep] * dt
    swings = swings[keep]
    period = 2.0 * (ext[-1] - ext[0]) / (len(ext) - 1) * dt
    if period < 4.0 * dt:
        # sample-to-sample flip-flop is a discretisation artefact, not a plant mode
        return None
    slope = np.polyfit(t, np.log(swings), 1)[0]
    return math.exp(slope * period), period


def ziegler_nichols_tune(plant, dt: float = 0.05, setpoint: float = 1.0, y0: float = 0.0,
                         gain_range=(0.01, 1000.0),
                         window: float = 60.0, tolerance: float = 0.05, iterations: int = 40) -> ZnResult:
    """Classic closed-loop Ziegler-Nichols: find the ultimate gain, return PID gains.

    Gains are swept geometrically until the P-only loop oscillates with
    growing amplitude, then the boundary is bisected until the amplitude
    ratio per period is within ``tolerance`` of 1 and the bracket is tight.
    """
    lo, hi = gain_range
    grid = np.geomspace(lo, hi, 41)
    prev = None
    bracket = None
    for g in grid:
        res = _oscillation(plant, g, setpoint, y0, dt, window)
        if res is not None and res[0] > 1.0:
            bracket = (prev if prev is not None else lo, g)
            break
        prev = g
    if bracket is None:
        raise ZieglerNicholsError(
            "no sustained oscillation found between gains "
            f"{lo:g} and {hi:g}; set PID gains manually")
    a, b = bracket
    ratio, period = math.nan, math.nan
    for _ in range(iterations):
        mid = math.sqrt(a * b)
        res = _oscillation(plant, mid, setpoint, y0, dt, window)
        if res is None or res[0] <= 1.0:
            a = mid
        else:
            b = mid
        if res is not None:
            ratio, period = res
        if b / a < 1.0 + 1e-4:
            break
    ku = math.sqrt(a * b)
    res = _oscillation(plant, ku, setpoint, y0, dt, window)
    if res is None or abs(res[0] - 1.0) > tolerance:
        raise ZieglerNicholsError(f"oscillation at Ku={ku:.4g} is not sustained (amplitude ratio {ratio:.3f})")
    tu = res[1]
    kp = 0.6 * ku
    tu = float(tu)
    return ZnResult(ku, tu, kp, 2.0 * kp / tu, kp * tu / 8.0)
