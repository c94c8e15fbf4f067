"""``artic-nav`` command line.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print one
line ``artic-nav: error[<category>]: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("articnav")


class CliError(RuntimeError):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _log_resolved(cmd: str, resolved: dict, out_dir: Path | None = None):
    text = json.dumps(resolved, sort_keys=True, default=str)
    log.info("resolved config for %s: %s", cmd, text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{cmd}_config.json").write_text(json.dumps(resolved, indent=1, sort_keys=True, default=str) + "\n")


# --- scenario ---------------------------------------------------------------------

def cmd_scenario_gen(args) -> int:
    from .scenario import RoundaboutSpec, generate_roundabout, save_scenario
    spec = RoundaboutSpec.evenly_spaced(args.diameter, args.entries, math.radians(args.offset_deg),
                                        lane_width=args.lane_width)
    if args.approach_length is not None:
        from .scenario import Entry
        spec = RoundaboutSpec(spec.diameter, tuple(Entry(e.angle, args.approach_length) for e in spec.entries),
                              spec.lane_width, spec.lanes_per_carriageway)
    name = args.name or f"roundabout_{args.diameter:g}m"
    _log_resolved("scenario", {"diameter": args.diameter, "entries": args.entries, "offset_deg": args.offset_deg,
                               "lane_width": args.lane_width, "spacing": args.spacing, "name": name,
                               "approach_length": args.approach_length, "output": str(args.output)})
    sc = generate_roundabout(spec, args.spacing, name)
    save_scenario(sc, args.output)
    print(f"{args.output}: {len(sc.routes)} routes, {len(sc.boundaries)} kerbs")
    return 0


def cmd_scenario_family(args) -> int:
    from .scenario import default_scenarios, save_scenario
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _log_resolved("scenario", {"family": True, "spacing": args.spacing, "out": str(out)})
    for name, sc in default_scenarios(args.spacing).items():
        save_scenario(sc, out / f"{name}.json")
        print(f"{out / (name + '.json')}: {len(sc.routes)} routes")
    return 0


def cmd_scenario_info(args) -> int:
    from .evalkit import min_route_radius
    from .scenario import load_scenario
    sc = load_scenario(args.file)
    print(f"name {sc.name} diameter {sc.spec.diameter:g} entries {len(sc.spec.entries)} routes {len(sc.routes)}")
    for i, r in enumerate(sc.routes):
        print(f"route {i} entry {r.entry_index} exit {r.exit_index} lanes {'-'.join(map(str, r.lane_sequence))} "
              f"waypoints {len(r)} length {r.length:.2f} min_radius {min_route_radius(r):.2f}")
    return 0


# --- inspect-obs -------------------------------------------------------------------

def cmd_inspect_obs(args) -> int:
    from .config import scenario_by_name_or_path
    from .envmdp import RoundaboutEnv, lane_follow_policy
    from .features import describe
    sc = scenario_by_name_or_path(args.scenario)
    env = RoundaboutEnv(sc, seed=args.seed)
    _log_resolved("inspect-obs", {"scenario": sc.name, "route": args.route, "steps": args.steps, "seed": args.seed})
    obs = env.reset(args.route, seed=args.seed)
    policy = lane_follow_policy(env)
    for _ in range(args.steps):
        res = env.step(policy(obs))
        obs = res.observation
        if res.done:
            break
    rows = describe(obs)
    if args.json:
        print(json.dumps({"step": env.steps, "observation": dict(rows)}, indent=1))
    else:
        print(f"step {env.steps} route {args.route} scenario {sc.name}")
        for label, v in rows:
            print(f"{label:24s} {v: .6f}")
    return 0


# --- pid-tune ---------------------------------------------------------------------

def cmd_pid_tune(args) -> int:
    from .control import TARGET_SPEED, PidController, SpeedPlant, ziegler_nichols_tune
    _log_resolved("pid-tune", {"dt": args.dt, "lag": args.lag, "delay": args.delay, "accel_limit": args.accel_limit,
                               "seed": args.seed})
    plant = SpeedPlant(args.lag, args.delay, args.accel_limit)
    res = ziegler_nichols_tune(plant, dt=args.dt, setpoint=TARGET_SPEED, y0=TARGET_SPEED - 0.01)
    pid = PidController(res.kp, res.ki, res.kd, TARGET_SPEED, args.accel_limit)
    plant = SpeedPlant(args.lag, args.delay, args.accel_limit)
    v, settle, peak = 0.0, None, 0.0
    n = int(round(args.horizon / args.dt))
    for i in range(n):
        v = plant.step(pid(v, args.dt), args.dt)
        peak = max(peak, v)
        inside = abs(v - TARGET_SPEED) <= 0.02 * TARGET_SPEED
        if inside and settle is None:
            settle = (i + 1) * args.dt
        elif not inside:
            settle = None
    print(f"ku {res.ku:.6g} tu {res.tu:.6g}")
    print(f"kp {res.kp:.6g} ki {res.ki:.6g} kd {res.kd:.6g}")
    print(f"settling_time_2pct {settle if settle is not None else float('nan'):.3f} "
          f"overshoot_pct {100 * (peak / TARGET_SPEED - 1):.3f}")
    return 0


# --- train / eval / replay ------------------------------------------------------

def _setup_overrides(args) -> dict:
    o: dict = {}
    if args.seed is not None:
        o.setdefault("sac", {})["seed"] = args.seed
    if args.steps is not None:
        o.setdefault("sac", {})["total_steps"] = args.steps
    if args.workers is not None:
        o.setdefault("sac", {})["workers"] = args.workers
    if args.threads is not None:
        o.setdefault("train", {})["threads"] = args.threads
    return o


def cmd_train(args) -> int:
    from .config import load_train_setup
    from .training import run_training
    setup = load_train_setup(args.config, _setup_overrides(args))
    out = Path(args.out)
    _log_resolved("train", setup.resolved(), out)

    def progress(d):
        if d["episode"] % args.log_every == 0:
            log.info("step %d episode %d window_reward %.2f window_success %.3f alpha %.4g", d["step"],
                     d["episode"], d["window_mean_reward"], d["window_success_rate"], d["alpha"])

    res = run_training(setup, out, progress=progress)
    print(f"episodes {res.episodes} steps {res.agent.env_steps} checkpoint {res.checkpoints[-1]}")
    print(f"metrics {res.metrics_path}")
    return 0


def _scenario_refs(refs: list[str]) -> list:
    from .config import scenario_by_name_or_path
    out = []
    for ref in refs:
        p = Path(ref)
        if p.is_dir():
            files = sorted(p.glob("*.json"))
            if not files:
                raise FileNotFoundError(f"no scenario files in {p}")
            out += [scenario_by_name_or_path(str(f)) for f in files]
        else:
            out.append(scenario_by_name_or_path(ref))
    return out


def cmd_eval(args) -> int:
    from .config import TEST_SCENARIOS
    from .evalkit import evaluate, export_trace_csv, export_trace_svg
    if not Path(args.checkpoint).exists():
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    scenarios = _scenario_refs(args.scenarios or list(TEST_SCENARIOS))
    out = Path(args.out)
    _log_resolved("eval", {"checkpoint": str(args.checkpoint), "scenarios": [s.name for s in scenarios],
                           "episodes": args.episodes, "seed": args.seed, "traces": args.traces}, out)
    report, traces = evaluate(str(args.checkpoint), scenarios, episodes_per_route=args.episodes, seed=args.seed)
    (out / "report.txt").write_text(report.to_text())
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    report.to_csv(out / "report.csv")
    if args.traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        by_name = {s.name: s for s in scenarios}
        counts: dict = {}
        for tr in traces:
            k = (tr.scenario, tr.route_id)
            counts[k] = counts.get(k, -1) + 1
            stem = f"{tr.scenario}_r{tr.route_id:02d}_e{counts[k]:03d}"
            export_trace_csv(tr, tdir / f"{stem}.csv")
            export_trace_svg(tr, by_name[tr.scenario], tdir / f"{stem}.svg")
    sys.stdout.write(report.to_text())
    return 0


def cmd_replay(args) -> int:
    from .config import scenario_by_name_or_path
    from .evalkit import export_trace_svg, read_trace_csv
    trace = read_trace_csv(args.trace)
    sc = scenario_by_name_or_path(args.scenario or trace.scenario)
    _log_resolved("replay", {"trace": str(args.trace), "scenario": sc.name, "output": str(args.output)})
    export_trace_svg(trace, sc, args.output)
    print(f"{args.output}: {len(trace.rows)} steps, success {int(trace.success)}, cause {trace.failure_cause}")
    return 0


# --- parser ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"artic-nav: error[usage]: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="artic-nav", description="Tractor-trailer roundabout navigation with discrete SAC.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sc = sub.add_parser("scenario", help="generate or inspect roundabout scenarios")
    scs = sc.add_subparsers(dest="action", required=True, parser_class=_Parser)
    g = scs.add_parser("gen", help="generate one roundabout")
    g.add_argument("--diameter", type=float, required=True, help="central island diameter in metres")
    g.add_argument("--entries", type=int, default=4)
    g.add_argument("--offset-deg", type=float, default=0.0, help="angle of the first entry")
    g.add_argument("--lane-width", type=float, default=3.7)
    g.add_argument("--approach-length", type=float, default=None)
    g.add_argument("--spacing", type=float, default=1.0, help="waypoint spacing in metres")
    g.add_argument("--name", default=None)
    g.add_argument("--seed", type=int, default=0, help="accepted for uniformity; generation is deterministic")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_scenario_gen)
    f = scs.add_parser("family", help="write the five benchmark roundabouts")
    f.add_argument("--spacing", type=float, default=1.0)
    f.add_argument("--seed", type=int, default=0, help="accepted for uniformity; generation is deterministic")
    f.add_argument("-o", "--out", required=True)
    f.set_defaults(func=cmd_scenario_family)
    i = scs.add_parser("info", help="list the routes of a scenario file")
    i.add_argument("file")
    i.set_defaults(func=cmd_scenario_info)

    o = sub.add_parser("inspect-obs", help="print a labelled observation vector")
    o.add_argument("--scenario", default="roundabout_16m", help="built-in name or scenario file")
    o.add_argument("--route", type=int, default=0)
    o.add_argument("--steps", type=int, default=0, help="lane-following steps before printing")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--json", action="store_true")
    o.set_defaults(func=cmd_inspect_obs)

    t = sub.add_parser("pid-tune", help="Ziegler-Nichols tuning of the speed loop")
    t.add_argument("--dt", type=float, default=0.05)
    t.add_argument("--lag", type=float, default=0.15, help="drivetrain lag time constant (s)")
    t.add_argument("--delay", type=float, default=0.1, help="drivetrain transport delay (s)")
    t.add_argument("--accel-limit", type=float, default=2.0)
    t.add_argument("--horizon", type=float, default=20.0, help="closed-loop check length (s)")
    t.add_argument("--seed", type=int, default=0, help="accepted for uniformity; tuning is deterministic")
    t.set_defaults(func=cmd_pid_tune)

    tr = sub.add_parser("train", help="train a policy")
    tr.add_argument("--config", default=None, help="TOML or JSON config; flags override it")
    tr.add_argument("--out", required=True)
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--steps", type=int, default=None, help="override total_steps")
    tr.add_argument("--workers", type=int, default=None)
    tr.add_argument("--threads", type=int, default=None, help="collector threads (capped by ARTIC_NAV_THREADS)")
    tr.add_argument("--log-every", type=int, default=25, help="episodes between progress lines")
    tr.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint greedily")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--scenarios", nargs="*", default=None,
                   help="built-in names, files or directories (default: the 20 m and 40 m test roundabouts)")
    e.add_argument("--episodes", type=int, default=30)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--traces", action="store_true", help="write per-episode CSV and SVG traces")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="render a trace CSV as SVG")
    r.add_argument("--trace", required=True)
    r.add_argument("--scenario", default=None, help="defaults to the scenario named in the trace")
    r.add_argument("--seed", type=int, default=0, help="accepted for uniformity; rendering is deterministic")
    r.add_argument("-o", "--output", required=True)
    r.set_defaults(func=cmd_replay)
    return p


def _category(exc: BaseException) -> str:
    from .config import ConfigError
    from .neuralnet import CheckpointError
    from .scenario import ScenarioError
    if isinstance(exc, CliError):
        return exc.category
    if isinstance(exc, FileNotFoundError):
        return "file-not-found"
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, CheckpointError):
        return "checkpoint"
    if isinstance(exc, ScenarioError):
        return "scenario"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, ValueError):
        return "invalid-value"
    return "runtime"


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore")
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("artic-nav: error[interrupted]: stopped by user", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports every failure as one line
        msg = str(exc).replace("\n", " ")
        print(f"artic-nav: error[{_category(exc)}]: {msg}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 1


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
