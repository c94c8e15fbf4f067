"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are also
collected into an "acceptance criteria" section at the end of the run.
"""

import math
import time
import zlib
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from articnav.config import load_train_setup
from articnav.control import (TARGET_SPEED, FirstOrderDelayPlant, IntegratorLagDelayPlant, PidController, SpeedPlant,
                              ziegler_nichols_tune)
from articnav.envmdp import (STEERING_LEVELS, ZN_GAINS, EnvConfig, RoundaboutEnv, shaping_reward, with_jitter)
from articnav.evalkit import agent_policy, evaluate, trace_to_csv_text
from articnav.features import LAYOUT, RouteTracker, build_observation
from articnav.geom2d import Polyline, fit_circle_from_chords, raycast
from articnav.neuralnet import Mlp
from articnav.sacd import (CorridorEnv, ReplayBuffer, SacAgent, SacConfig, corridor_value_iteration, optimal_actions,
                           read_metrics, train)
from articnav.scenario import RoundaboutSpec, Scenario, WaypointRoute, default_scenarios
from articnav.training import run_training
from articnav.vehicle import TractorTrailerState, VehicleSpec, step_kinematics

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
STRAIGHT = STEERING_LEVELS.index(0.0)
FULL_LEFT = STEERING_LEVELS.index(max(STEERING_LEVELS))


def corridor_scenario():
    xs = np.arange(0.0, 41.0)
    route = WaypointRoute.from_points(np.column_stack([xs, np.zeros_like(xs)]))
    kerbs = (Polyline([[-20.0, 4.0], [70.0, 4.0]]), Polyline([[-20.0, -4.0], [70.0, -4.0]]))
    return Scenario(RoundaboutSpec.evenly_spaced(16.0, 4), kerbs, (route,), name="corridor")


# 1 -------------------------------------------------------------------------------

def test_criterion_01_reward_exactness(criterion):
    t0 = time.perf_counter()
    expected = {0: 0.0, 1: -0.375, 2: -0.75, 4: -1.5, 6: -1.5}
    shaping_err = max(abs(shaping_reward(d) - v) for d, v in expected.items())

    sc = corridor_scenario()
    env = RoundaboutEnv(sc, with_jitter(EnvConfig(), 0.0, 0.0))
    env.reset(0, seed=0)
    waypoint_ok = True
    while True:
        res = env.step(STRAIGHT)
        if res.done:
            break
        waypoint_ok &= res.reward == 100.0 * res.info["passed_waypoints"]
    success_ok = res.info["success"] and res.reward == 100.0 * res.info["passed_waypoints"]

    env.reset(0, seed=0)
    while True:
        res = env.step(FULL_LEFT)
        if res.done:
            break
    crash_err = abs(res.reward - (-500.0 + shaping_reward(res.info["distance_to_center"])))
    crash_ok = res.info["failure_cause"] in ("truck_kerb", "trailer_kerb") and crash_err < 1e-12
    dt = time.perf_counter() - t0
    ok = shaping_err < 1e-12 and waypoint_ok and success_ok and crash_ok and dt < 1.0
    criterion(1, ok, f"shaping max error {shaping_err:.1e}, +100/waypoint {waypoint_ok}, "
                     f"kerb step = -500 + shaping {crash_ok}, {dt:.2f}s")


# 2 -------------------------------------------------------------------------------

def marching_distance(origin, direction, segs, max_range, step=1e-3):
    """First crossing of any segment, bracketed by 1 mm steps along the ray (bracket midpoint)."""
    t = np.arange(0.0, max_range + step, step)
    p = origin + t[:, None] * direction
    best = max_range
    for x0, y0, x1, y1 in segs:
        ex, ey = x1 - x0, y1 - y0
        side = ex * (p[:, 1] - y0) - ey * (p[:, 0] - x0)
        flips = np.flatnonzero(np.sign(side[:-1]) != np.sign(side[1:]))
        for k in flips:
            w = side[k] / (side[k] - side[k + 1])
            q = p[k] + w * (p[k + 1] - p[k])
            u = ((q[0] - x0) * ex + (q[1] - y0) * ey) / (ex * ex + ey * ey)
            if 0.0 <= u <= 1.0:
                best = min(best, t[k] + 0.5 * step)
                break
    return best


def test_criterion_02_geometry_oracles(criterion):
    t0 = time.perf_counter()
    exact_err, disc_err = 0.0, 0.0
    for r in (8.0, 10.0, 16.0, 25.0):
        ang = np.linspace(0.3, 1.3, 11)
        pts = np.column_stack([r * np.cos(ang) + 2.0, r * np.sin(ang) - 1.0])
        exact_err = max(exact_err, abs(fit_circle_from_chords(pts, 5).radius - r))
        # waypoints 1 m apart along the arc
        ang = np.arange(11) * (1.0 / r)
        pts = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
        disc_err = max(disc_err, abs(fit_circle_from_chords(pts, 5).radius - r) / r)

    rng = np.random.default_rng(2024)
    ray_err = 0.0
    for _ in range(1000):
        segs = rng.uniform(-20, 20, size=(int(rng.integers(1, 6)), 4))
        origin = rng.uniform(-10, 10, 2)
        a = rng.uniform(-math.pi, math.pi)
        d = np.array([math.cos(a), math.sin(a)])
        ray_err = max(ray_err, abs(raycast(origin, d, segs, 50.0) - marching_distance(origin, d, segs, 50.0)))
    dt = time.perf_counter() - t0
    ok = exact_err < 1e-6 and disc_err < 0.05 and ray_err <= 1e-3 and dt < 30
    criterion(2, ok, f"circle fit exact err {exact_err:.1e} m, 1 m spacing err {100 * disc_err:.3f}%, "
                     f"ray vs march max {ray_err:.1e} m over 1000 scenes, {dt:.1f}s")


# 3 -------------------------------------------------------------------------------

def test_criterion_03_off_tracking_law(criterion):
    t0 = time.perf_counter()
    spec = VehicleSpec()
    L = spec.trailer_length
    worst = 0.0
    radii = [r for r in (8.0, 10.0, 16.0, 25.0) if r > L]
    for r in radii:
        s = TractorTrailerState(0.0, 0.0, 0.0, 0.0, 3.0)
        wheel = math.atan(spec.truck_wheelbase / r)
        for _ in range(2400):
            s = step_kinematics(s, wheel, 0.0, 0.05, spec)
        got = np.linalg.norm(s.trailer_axle(spec) - np.array([0.0, r]))
        worst = max(worst, abs(got - math.sqrt(r * r - L * L)) / math.sqrt(r * r - L * L))
    dt = time.perf_counter() - t0
    criterion(3, worst < 0.01 and dt < 10, f"trailer radius vs sqrt(R^2-L^2) max rel err {100 * worst:.4f}% "
                                           f"for R={radii} (R=8 excluded, not > L), {dt:.1f}s")


# 4 -------------------------------------------------------------------------------

def test_criterion_04_pid(criterion):
    t0 = time.perf_counter()
    pid = PidController(*ZN_GAINS, TARGET_SPEED)
    plant = SpeedPlant()
    v, entered, stayed = 0.0, None, True
    for i in range(int(60 / 0.05)):
        v = plant.step(pid(v, 0.05), 0.05)
        inside = abs(v - TARGET_SPEED) <= 0.02 * TARGET_SPEED
        if inside and entered is None:
            entered = (i + 1) * 0.05
        elif entered is not None and not inside:
            stayed = False
    zn_err = 0.0
    for plant, dt_, window in ((FirstOrderDelayPlant(1.0, 2.0, 0.5), 0.002, 40), (IntegratorLagDelayPlant(), 0.005, 20)):
        ku, tu = plant.ultimate()
        res = ziegler_nichols_tune(plant, dt=dt_, window=window)
        zn_err = max(zn_err, abs(res.ku / ku - 1), abs(res.tu / tu - 1))
    dt = time.perf_counter() - t0
    ok = entered is not None and entered <= 10.0 and stayed and zn_err < 0.05 and dt < 10
    criterion(4, ok, f"within 2% of 30 km/h at t={entered}s and stays {stayed}; "
                     f"ZN Ku/Tu max rel err {100 * zn_err:.2f}%, {dt:.1f}s")


# 5 -------------------------------------------------------------------------------

def test_criterion_05_network_gradients(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in range(100):
        sizes = [int(rng.integers(2, 7))] + [int(rng.integers(2, 9)) for _ in range(int(rng.integers(1, 3)))] \
            + [int(rng.integers(2, 10))]
        net = Mlp(sizes, "softmax" if k % 2 else "linear", rng, dtype=np.float64)
        x = rng.normal(size=(int(rng.integers(1, 4)), sizes[0]))
        c = rng.normal(size=(len(x), sizes[-1]))
        loss = lambda: float((c * net(x)).sum() + 0.5 * (net(x) ** 2).sum())
        out, cache = net.forward(x)
        g = net.flatten(net.backward(cache, c + out))
        fd = np.empty_like(g)
        for i in range(len(fd)):
            keep = net.flat[i]
            net.flat[i] = keep + 1e-5
            lp = loss()
            net.flat[i] = keep - 1e-5
            lm = loss()
            net.flat[i] = keep
            fd[i] = (lp - lm) / 2e-5
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g) + np.linalg.norm(fd), 1e-12))
    dt = time.perf_counter() - t0
    criterion(5, worst < 1e-4 and dt < 60, f"max relative error {worst:.2e} over 100 nets, {dt:.1f}s")


# 6 -------------------------------------------------------------------------------

CORRIDOR_SAC = dict(hidden=(64, 64), batch_size=64, buffer_capacity=50_000, epsilon_final=1.0, alpha_mode="anneal",
                    alpha_init=0.01, alpha_final=1e-3, alpha_anneal_steps=3000, lr=1e-3, tau=0.01, workers=1,
                    total_steps=40_000, warmup_steps=1000, seed=0)


def test_criterion_06_sac_matches_value_iteration(criterion):
    t0 = time.perf_counter()
    env = CorridorEnv()
    q_star = corridor_value_iteration(env)
    res = train(SacConfig(**CORRIDOR_SAC), lambda i: CorridorEnv(seed=i), [0], obs_dim=env.n, n_actions=9)
    ag = res.agent
    eye = np.eye(env.n, dtype=np.float32)
    q = np.minimum(ag.q1(eye), ag.q2(eye))
    greedy = np.argmax(ag.policy(eye), axis=1)
    interior = range(1, env.n - 1)
    wrong = [s for s in interior if int(greedy[s]) not in optimal_actions(q_star, s)]
    q_err = float(np.abs(q[1:-1] - q_star[1:-1]).max())

    probe = SacAgent(6, 9, SacConfig(hidden=(8,)), seed=0)
    for net in (probe.policy, probe.q1_target, probe.q2_target):
        net.flat[:] = 0
        net.touch()
    probe.set_alpha(0.1)
    y = probe.q_targets(np.zeros((1, 6), np.float32), np.zeros(1), np.zeros(1))[0]
    ent_err = abs(y - 0.1 * math.log(9))
    dt = time.perf_counter() - t0
    ok = not wrong and q_err <= 0.05 and ent_err < 1e-9 and dt < 300
    criterion(6, ok, f"non-optimal greedy states {len(wrong)}, max |Q-Q*| {q_err:.4f}, "
                     f"0.1*ln9 error {ent_err:.1e}, {dt:.0f}s")


# 7 -------------------------------------------------------------------------------

def test_criterion_07_prioritized_replay_statistics(criterion):
    rng = np.random.default_rng(7)
    alpha = 0.6
    buf = ReplayBuffer(32, 1, alpha=alpha)
    for _ in range(20):
        buf.add(np.zeros(1), 0, 0.0, np.zeros(1), False)
    prios = rng.uniform(0.1, 5.0, 20)
    buf.update_priorities(np.arange(20), prios)
    n = 100_000
    counts = np.bincount(buf.sample_indices(n, rng), minlength=20)
    expected = prios ** alpha / (prios ** alpha).sum() * n
    chi2 = stats.chisquare(counts, expected)

    uni = ReplayBuffer(32, 1, alpha=alpha)
    for i in range(20):
        uni.add(np.full(1, i), 0, float(i), np.zeros(1), False)
    probs_equal = np.array_equal(uni.probabilities(), np.full(20, 1 / 20))
    b = uni.sample(4096, np.random.default_rng(0), beta=0.4)
    weights_one = bool(np.all(b.weights == 1.0))
    ok = chi2.pvalue > 0.05 and probs_equal and weights_one
    criterion(7, ok, f"chi-square p={chi2.pvalue:.3f} over 1e5 draws; uniform probabilities exact {probs_equal}, "
                     f"importance weights all 1 {weights_one}")


# 8 -------------------------------------------------------------------------------

def test_criterion_08_desk_scale_learning(criterion, tmp_path):
    t0 = time.perf_counter()
    setup = load_train_setup(CONFIGS / "desk_demo.toml")
    sac = setup.sac
    assert sac.hidden == (64, 64) and sac.total_steps <= 200_000 and sac.workers == 1 and setup.env.dt == 0.05
    (scenario, route_id), = setup.routes
    assert scenario.name == "roundabout_16m"
    res = run_training(setup, tmp_path)
    rows = read_metrics(res.metrics_path)
    full = [r["window_success_rate"] for r in rows if r["episode"] >= sac.window]
    best_window = max(full) if full else 0.0
    report, _ = evaluate(agent_policy(res.agent), [scenario], [(0, route_id)], episodes_per_route=20, seed=0,
                         config=setup.env)
    dist = report.mean_distance_to_center(include_deviating=True)
    dt = time.perf_counter() - t0
    ok = best_window >= 0.7 and dist <= 1.0
    criterion(8, ok, f"best {sac.window}-episode window success {best_window:.3f} (>= 0.7), greedy success "
                     f"{report.success_rate:.2f}, mean distance to centre {dist:.3f} m (<= 1.0), "
                     f"{res.agent.env_steps} steps, {dt / 60:.1f} min")


# 9 -------------------------------------------------------------------------------

def test_criterion_09_determinism(criterion, tmp_path, s16):
    cfg = SacConfig(hidden=(16, 16), batch_size=32, buffer_capacity=5000, workers=2, total_steps=3000,
                    warmup_steps=500, checkpoint_interval=10 ** 9, seed=11)
    runs = []
    for tag in ("a", "b"):
        res = train(cfg, lambda i: RoundaboutEnv(s16, seed=i), [(s16, 0), (s16, 3)], tmp_path / tag,
                    obs_dim=68, n_actions=9, threads=2)
        report, traces = evaluate(agent_policy(res.agent), [s16], [(0, 0)], episodes_per_route=2, seed=3)
        runs.append(((tmp_path / tag / "metrics.csv").read_bytes(), report.to_text(),
                     [trace_to_csv_text(t) for t in traces]))
    same_metrics = runs[0][0] == runs[1][0]
    same_eval = runs[0][1:] == runs[1][1:]
    criterion(9, same_metrics and same_eval, f"metrics logs identical {same_metrics}, eval reports and traces "
                                             f"identical {same_eval}")


# 10 ------------------------------------------------------------------------------

def test_criterion_10_observation_contract(criterion):
    t0 = time.perf_counter()
    spec = VehicleSpec()
    n = 100_000
    violations, checked = [], 0
    bounds = {name: LAYOUT.bounds(name) for name in LAYOUT.slices}
    for name, sc in default_scenarios().items():
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        pts = np.vstack([b.points for b in sc.boundaries])
        lo, hi = pts.min(axis=0) - 5.0, pts.max(axis=0) + 5.0
        trackers = [RouteTracker.start(r) for r in sc.routes]
        segs = sc.kerb_segments
        for _ in range(n):
            t0_ = trackers[int(rng.integers(len(trackers)))]
            idx = int(rng.integers(len(t0_.route) + 1))
            tracker = RouteTracker(t0_.route, idx, t0_.pass_radius, t0_.geometry)
            x, y = rng.uniform(lo, hi)
            heading = rng.uniform(-math.pi, math.pi)
            art = rng.uniform(-1.2, 1.2)
            s = TractorTrailerState(x, y, heading, heading - art, rng.uniform(0.0, 2 * TARGET_SPEED))
            obs = build_observation(s, tracker, segs, spec)
            checked += 1
            if not np.all(np.isfinite(obs)):
                violations.append((name, "non-finite"))
                continue
            for slot, sl in LAYOUT.slices.items():
                b_lo, b_hi = bounds[slot]
                if np.any(obs[sl] < b_lo) or np.any(obs[sl] > b_hi):
                    violations.append((name, slot))
    dt = time.perf_counter() - t0
    criterion(10, not violations, f"{checked} fuzzed states over 5 scenarios, {len(violations)} violations "
                                  f"{violations[:3]}, {dt:.0f}s")
