"""Discrete soft actor-critic with twin critics and prioritized replay.

The learner follows the discrete-action formulation: both the critic target
and the policy objective take an exact expectation over the nine actions
instead of sampling one.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .neuralnet import AdamState, CheckpointError, Mlp, NonFiniteGradientError, adam_step, load_checkpoint, \
    log_softmax, save_checkpoint, softmax

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SacConfig:
    gamma: float = 1.0
    n_step: int = 1
    batch_size: int = 256
    buffer_capacity: int = 600_000
    twin_q: bool = True
    epsilon_initial: float = 1.0
    epsilon_final: float = 0.01
    epsilon_timesteps: int = 1_000_000
    hidden: tuple[int, ...] = (512, 512, 1024)
    lr: float = 3e-4
    tau: float = 0.005
    target_update_interval: int = 1
    alpha_mode: str = "auto"          # auto | fixed | anneal
    alpha_init: float = 1.0
    alpha_final: float = 1e-3         # end value for the anneal mode
    alpha_anneal_steps: int = 0       # learner updates to reach alpha_final; 0 means total_steps
    alpha_lr: float = 3e-4
    target_entropy_ratio: float = 0.98
    priority_alpha: float = 0.6
    priority_beta_initial: float = 0.4
    priority_beta_final: float = 1.0
    priority_eps: float = 1e-6
    reward_scale: float = 1.0
    workers: int = 8
    total_steps: int = 1_500_000
    warmup_steps: int = 10_000
    updates_per_step: int = 1
    window: int = 250
    checkpoint_interval: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.epsilon_final > self.epsilon_initial:
            raise ValueError("epsilon_final must not exceed epsilon_initial")
        if self.n_step < 1 or self.batch_size < 1 or self.buffer_capacity < 1 or self.workers < 1:
            raise ValueError("n_step, batch_size, buffer_capacity and workers must be positive")
        if self.alpha_mode not in ("auto", "fixed", "anneal"):
            raise ValueError("alpha_mode must be auto, fixed or anneal")
        if self.alpha_init <= 0 or self.alpha_final <= 0:
            raise ValueError("alpha must be positive")
        if not self.twin_q:
            raise ValueError("only the twin-critic learner is implemented")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SacConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sac config fields: {sorted(unknown)}")
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(int(h) for h in d["hidden"])
        return cls(**d)


def epsilon_at(step: int, cfg: SacConfig) -> float:
    """Linear decay from ``epsilon_initial`` to ``epsilon_final`` over ``epsilon_timesteps``."""
    if cfg.epsilon_timesteps <= 0:
        return cfg.epsilon_final
    frac = min(max(step / cfg.epsilon_timesteps, 0.0), 1.0)
    return cfg.epsilon_initial + frac * (cfg.epsilon_final - cfg.epsilon_initial)


def _linear(start: float, end: float, step: int, horizon: int) -> float:
    frac = 1.0 if horizon <= 0 else min(max(step / horizon, 0.0), 1.0)
    return start + frac * (end - start)


# --- prioritized replay ----------------------------------------------------------

class SumTree:
    """Binary sum tree over a power-of-two number of leaves, float64 throughout."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self.leaves = 1 << max(0, (self.capacity - 1).bit_length())
        self.tree = np.zeros(2 * self.leaves)

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def get(self, idx) -> np.ndarray:
        return self.tree[np.asarray(idx) + self.leaves]

    def set(self, idx, values) -> None:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        values = np.broadcast_to(np.asarray(values, dtype=float), idx.shape)
        nodes = idx + self.leaves
        self.tree[nodes] = values  # with duplicates the last write wins, as in sequential assignment
        # duplicate parents recompute the same sum, so no de-duplication is needed
        nodes = nodes >> 1
        while nodes[0] >= 1:
            self.tree[nodes] = self.tree[2 * nodes] + self.tree[2 * nodes + 1]
            nodes = nodes >> 1

    def find(self, mass: np.ndarray) -> np.ndarray:
        """Leaf index whose cumulative interval contains each ``mass`` value."""
        mass = np.array(mass, dtype=float)
        node = np.ones(len(mass), dtype=np.int64)
        while node[0] < self.leaves:
            left = 2 * node
            lv = self.tree[left]
            go_right = mass >= lv
            # never descend into an empty subtree because of rounding at the edge
            go_right &= self.tree[left + 1] > 0
            mass = np.where(go_right, mass - lv, mass)
            node = np.where(go_right, left + 1, left)
        return node - self.leaves


@dataclass
class Batch:
    indices: np.ndarray
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray
    discounts: np.ndarray
    weights: np.ndarray


class ReplayBuffer:
    """Ring buffer with proportional prioritization.

    Stored priorities are raw (``|td| + eps``); the tree holds
    ``priority ** alpha``. New transitions enter at the largest priority seen.
    """

    def __init__(self, capacity: int, obs_dim: int, alpha: float = 0.6, layout_version: int | None = None,
                 dtype=np.float32):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.alpha = float(alpha)
        self.layout_version = layout_version
        self.obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.discounts = np.ones(capacity)
        self.priorities = np.zeros(capacity)
        self.tree = SumTree(capacity)
        self.max_priority = 1.0
        self.size = 0
        self.cursor = 0
        self.added = 0

    def __len__(self):
        return self.size

    def add(self, obs, action: int, reward: float, next_obs, done: bool, discount: float = 1.0) -> int:
        i = self.cursor
        self.obs[i] = obs
        self.next_obs[i] = next_obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.dones[i] = done
        self.discounts[i] = discount
        self.priorities[i] = self.max_priority
        self.tree.set(i, self.max_priority ** self.alpha)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.added += 1
        return i

    def probabilities(self) -> np.ndarray:
        p = self.tree.get(np.arange(self.size))
        return p / p.sum()

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise IndexError("cannot sample from an empty replay buffer")
        total = self.tree.total
        idx = self.tree.find(rng.random(n) * total)
        return np.minimum(idx, self.size - 1)

    def sample(self, n: int, rng: np.random.Generator, beta: float = 0.4) -> Batch:
        idx = self.sample_indices(n, rng)
        p = self.tree.get(idx) / self.tree.total
        w = (p * self.size) ** (-beta)
        w = w / w.max()
        return Batch(idx, self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx],
                     self.dones[idx], self.discounts[idx], w)

    def update_priorities(self, indices, priorities) -> None:
        priorities = np.asarray(priorities, dtype=float)
        if np.any(~np.isfinite(priorities)) or np.any(priorities <= 0):
            raise ValueError("priorities must be positive and finite")
        indices = np.asarray(indices, dtype=np.int64)
        self.priorities[indices] = priorities
        self.tree.set(indices, priorities ** self.alpha)
        self.max_priority = max(self.max_priority, float(priorities.max()))


class NStepAccumulator:
    """Folds consecutive rewards into n-step transitions for one worker."""

    def __init__(self, n: int, gamma: float):
        self.n, self.gamma = n, gamma
        self.queue: deque = deque()

    def push(self, obs, action, reward, next_obs, terminal: bool, episode_end: bool | None = None) -> list[tuple]:
        """Completed transitions; ``terminal`` stops bootstrapping, ``episode_end`` only flushes."""
        episode_end = terminal if episode_end is None else episode_end
        self.queue.append((obs, action, reward))
        out = []
        if len(self.queue) >= self.n:
            out.append(self._emit(next_obs, terminal))
        if episode_end:
            while self.queue:
                out.append(self._emit(next_obs, terminal))
        return out

    def _emit(self, next_obs, done):
        ret, disc = 0.0, 1.0
        for _, _, r in self.queue:
            ret += disc * r
            disc *= self.gamma
        obs, action, _ = self.queue.popleft()
        return obs, action, ret, next_obs, done, disc


# --- agent -------------------------------------------------------------------------

@dataclass
class UpdateInfo:
    q1_loss: float
    q2_loss: float
    policy_loss: float
    alpha: float
    entropy: float
    mean_q: float

    def as_tuple(self):
        return (self.q1_loss, self.q2_loss, self.policy_loss, self.alpha, self.entropy, self.mean_q)


class SacAgent:
    def __init__(self, obs_dim: int, n_actions: int, config: SacConfig = SacConfig(), seed: int = 0,
                 dtype=np.float32):
        self.config = config
        self.obs_dim, self.n_actions = obs_dim, n_actions
        init = np.random.default_rng(seed)
        sizes = (obs_dim, *config.hidden, n_actions)
        self.policy = Mlp(sizes, "softmax", init, dtype)
        self.q1 = Mlp(sizes, "linear", init, dtype)
        self.q2 = Mlp(sizes, "linear", init, dtype)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.opt = {name: AdamState.for_params([getattr(self, name).flat], lr=config.lr)
                    for name in ("policy", "q1", "q2")}
        self.log_alpha = math.log(config.alpha_init)
        self.alpha_opt = AdamState.for_params([np.zeros(1)], lr=config.alpha_lr)
        self.target_entropy = config.target_entropy_ratio * math.log(n_actions)
        self.rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        self.env_steps = 0
        self.updates = 0

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    def set_alpha(self, value: float):
        if value <= 0:
            raise ValueError("alpha must be positive")
        self.log_alpha = math.log(value)

    def probabilities(self, obs) -> np.ndarray:
        return self.policy(np.asarray(obs))

    def select_action(self, obs, env_step: int | None = None, mode: str = "train",
                      rng: np.random.Generator | None = None, policy: Mlp | None = None) -> int:
        net = policy if policy is not None else self.policy
        if mode == "eval":
            return int(np.argmax(net(np.asarray(obs))))
        rng = rng if rng is not None else self.rng
        eps = epsilon_at(self.env_steps if env_step is None else env_step, self.config)
        if rng.random() < eps:
            return int(rng.integers(self.n_actions))
        p = np.asarray(net(np.asarray(obs)), dtype=float)
        return int(min(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"), self.n_actions - 1))

    def q_targets(self, next_obs, rewards, dones, discounts=None) -> np.ndarray:
        """``r + discount (1 - done) E_pi[min(Q1', Q2') - alpha log pi]`` at the next state."""
        gamma = self.config.gamma if discounts is None else np.asarray(discounts)
        z = self.policy.logits(next_obs).astype(float)
        logp = log_softmax(z)
        p = np.exp(logp)
        qmin = np.minimum(self.q1_target(next_obs), self.q2_target(next_obs)).astype(float)
        v = (p * (qmin - self.alpha * logp)).sum(axis=-1)
        return np.asarray(rewards, float) + gamma * (1.0 - np.asarray(dones, float)) * v

    def update(self, batch: Batch) -> tuple[UpdateInfo, np.ndarray]:
        """One learner step; returns diagnostics and new raw priorities."""
        cfg = self.config
        B = len(batch.actions)
        w = batch.weights.astype(float)
        y = self.q_targets(batch.next_obs, batch.rewards * cfg.reward_scale, batch.dones,
                           batch.discounts if cfg.n_step > 1 else None)
        rows = np.arange(B)
        losses, td = [], np.zeros(B)
        q_all = []
        grads = {}
        for name in ("q1", "q2"):
            net = getattr(self, name)
            q, cache = net.forward(batch.obs)
            q_all.append(q.astype(float))
            err = q[rows, batch.actions].astype(float) - y
            losses.append(float(np.mean(w * err * err)))
            td += np.abs(err)
            g = np.zeros_like(q, dtype=float)
            g[rows, batch.actions] = 2.0 * w * err / B
            grads[name] = net.backward(cache, g)
        qmin = np.minimum(q_all[0], q_all[1])

        p_out, pcache = self.policy.forward(batch.obs)
        z = pcache.preacts[-1].astype(float)
        logp = log_softmax(z)
        p = np.exp(logp)
        alpha = self.alpha
        gterm = alpha * logp - qmin
        per_sample = (p * gterm).sum(axis=-1)
        policy_loss = float(np.mean(w * per_sample))
        dz = p * (gterm - per_sample[:, None]) * (w / B)[:, None]
        grads["policy"] = self.policy.backward(pcache, dz, wrt_logits=True)
        entropy = float(np.mean(-(p * logp).sum(axis=-1)))

        if not all(math.isfinite(v) for v in (*losses, policy_loss)):
            raise NonFiniteGradientError(f"non-finite loss at update {self.updates}: q={losses} pi={policy_loss}")
        for name in ("q1", "q2", "policy"):
            net = getattr(self, name)
            adam_step([net.flat], [net.flatten(grads[name])], self.opt[name])
            net.touch()

        if cfg.alpha_mode == "auto":
            g_alpha = np.array([alpha * (entropy - self.target_entropy)])
            la = np.array([self.log_alpha])
            adam_step([la], [g_alpha], self.alpha_opt)
            self.log_alpha = float(la[0])
        elif cfg.alpha_mode == "anneal":
            horizon = cfg.alpha_anneal_steps or cfg.total_steps
            self.log_alpha = math.log(_linear(cfg.alpha_init, cfg.alpha_final, self.updates + 1, horizon))

        self.updates += 1
        if self.updates % cfg.target_update_interval == 0:
            self.soft_update()
        priorities = td / 2.0 + cfg.priority_eps
        info = UpdateInfo(losses[0], losses[1], policy_loss, self.alpha, entropy, float(qmin.mean()))
        return info, priorities

    def soft_update(self, tau: float | None = None):
        tau = self.config.tau if tau is None else tau
        for online, target in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
            target.flat *= (1.0 - tau)
            target.flat += tau * online.flat
            target.touch()

    # --- persistence ---
    def save(self, path, extra_meta: dict | None = None) -> Path:
        meta = {"sac_config": self.config.to_dict(), "log_alpha": self.log_alpha, "env_steps": self.env_steps,
                "updates": self.updates, "obs_dim": self.obs_dim, "n_actions": self.n_actions,
                "rng_state": self.rng.bit_generator.state}
        meta.update(extra_meta or {})
        opts = dict(self.opt)
        opts["alpha"] = self.alpha_opt
        nets = {"policy": self.policy, "q1": self.q1, "q2": self.q2,
                "q1_target": self.q1_target, "q2_target": self.q2_target}
        return save_checkpoint(path, nets, opts, meta)

    @classmethod
    def load(cls, path, layout_version: int | None = None) -> tuple["SacAgent", dict]:
        nets, opts, meta = load_checkpoint(path, layout_version)
        try:
            cfg = SacConfig.from_dict(meta["sac_config"])
            agent = cls.__new__(cls)
            agent.config = cfg
            agent.obs_dim, agent.n_actions = meta["obs_dim"], meta["n_actions"]
            for k, v in nets.items():
                setattr(agent, k, v)
            agent.alpha_opt = opts.pop("alpha")
            agent.opt = opts
            agent.log_alpha = meta["log_alpha"]
            agent.target_entropy = cfg.target_entropy_ratio * math.log(agent.n_actions)
            agent.rng = np.random.default_rng()
            agent.rng.bit_generator.state = meta["rng_state"]
            agent.env_steps, agent.updates = meta["env_steps"], meta["updates"]
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: checkpoint metadata is incomplete ({exc})") from None
        return agent, meta


# --- training loop ---------------------------------------------------------------

METRICS_COLUMNS = ("step", "episode", "worker", "route", "reward", "success", "steps", "failure_cause",
                   "window_mean_reward", "window_success_rate", "epsilon", "alpha", "q1_loss", "q2_loss",
                   "policy_loss", "entropy")


def sample_route(rng: np.random.Generator, routes: Sequence):
    return routes[int(rng.integers(len(routes)))]


def thread_cap(requested: int) -> int:
    env = os.environ.get("ARTIC_NAV_THREADS")
    if env:
        try:
            return max(1, min(requested, int(env)))
        except ValueError:
            raise ValueError(f"ARTIC_NAV_THREADS must be an integer, got {env!r}") from None
    return requested


@dataclass
class _Worker:
    index: int
    env: object
    rng: np.random.Generator
    nstep: NStepAccumulator
    obs: np.ndarray | None = None
    route: object = None
    snapshot: Mlp | None = None
    reward: float = 0.0
    steps: int = 0


@dataclass
class TrainResult:
    agent: SacAgent
    buffer: ReplayBuffer
    episodes: int
    metrics_path: Path | None
    checkpoints: list = field(default_factory=list)
    buffer_sizes: list = field(default_factory=list)


def _reset_worker(wk: _Worker, routes, agent: SacAgent):
    wk.route = sample_route(wk.rng, routes)
    scenario, route_id = wk.route if isinstance(wk.route, tuple) else (None, wk.route)
    seed = int(wk.rng.integers(2 ** 31))
    if scenario is not None:
        wk.obs = wk.env.reset(route_id, seed=seed, scenario=scenario)
    else:
        wk.obs = wk.env.reset(route_id, seed=seed)
    wk.snapshot = agent.policy.copy()
    wk.reward, wk.steps = 0.0, 0


def _route_label(route) -> str:
    if isinstance(route, tuple):
        sc, rid = route
        return f"{getattr(sc, 'name', 'scenario')}:{rid}"
    return str(route)


def train(config: SacConfig, env_factory: Callable[[int], object], routes: Sequence, out_dir=None,
          obs_dim: int | None = None, n_actions: int | None = None, threads: int = 1,
          extra_meta: dict | None = None, progress: Callable[[dict], None] | None = None,
          buffer_dtype=np.float32) -> TrainResult:
    """Round-robin collection over ``config.workers`` environments feeding one learner.

    ``routes`` holds route ids or ``(scenario, route_id)`` pairs; every
    episode draws one uniformly. Worker order within a round is fixed, so the
    threaded and single-threaded modes see the same transition order.
    """
    envs = [env_factory(i) for i in range(config.workers)]
    if obs_dim is None:
        obs_dim = int(np.asarray(envs[0].reset(*(() if not routes else _first_args(routes)))).shape[-1])
    if n_actions is None:
        from .envmdp import N_ACTIONS
        n_actions = N_ACTIONS
    agent = SacAgent(obs_dim, n_actions, config, seed=config.seed)
    layout_version = (extra_meta or {}).get("layout_version")
    buffer = ReplayBuffer(config.buffer_capacity, obs_dim, config.priority_alpha, layout_version, buffer_dtype)
    ss = np.random.SeedSequence(config.seed)
    worker_seeds = ss.spawn(config.workers + 1)
    learn_rng = np.random.default_rng(worker_seeds[-1])
    workers = [_Worker(i, envs[i], np.random.default_rng(worker_seeds[i]), NStepAccumulator(config.n_step, config.gamma))
               for i in range(config.workers)]
    for wk in workers:
        _reset_worker(wk, routes, agent)

    out = Path(out_dir) if out_dir is not None else None
    metrics_file = writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        metrics_file = open(out / "metrics.csv", "w", newline="")
        writer = csv.writer(metrics_file)
        writer.writerow(METRICS_COLUMNS)
    result = TrainResult(agent, buffer, 0, out / "metrics.csv" if out else None)
    window_r: deque = deque(maxlen=config.window)
    window_s: deque = deque(maxlen=config.window)
    last = UpdateInfo(math.nan, math.nan, math.nan, agent.alpha, math.nan, math.nan)
    meta = dict(extra_meta or {})
    n_threads = thread_cap(threads)
    pool = ThreadPoolExecutor(n_threads) if n_threads > 1 else None

    def act(wk: _Worker):
        eps_step = agent.env_steps
        a = agent.select_action(wk.obs, eps_step, "train", wk.rng, wk.snapshot)
        return a, wk.env.step(a)

    def checkpoint(name):
        if out is None:
            return None
        path = agent.save(out / name, dict(meta, episodes=result.episodes, buffer_size=len(buffer)))
        result.checkpoints.append(path)
        return path

    next_ckpt = config.checkpoint_interval
    try:
        while agent.env_steps < config.total_steps:
            active = workers[:max(1, min(len(workers), config.total_steps - agent.env_steps))]
            outcomes = list(pool.map(act, active)) if pool else [act(wk) for wk in active]
            for wk, (a, res) in zip(active, outcomes):
                agent.env_steps += 1
                wk.reward += res.reward
                wk.steps += 1
                terminal = bool(res.info.get("terminal", res.done))
                for tr in wk.nstep.push(wk.obs, a, res.reward, res.observation, terminal, res.done):
                    buffer.add(*tr)
                result.buffer_sizes.append(len(buffer))
                wk.obs = res.observation
                if res.done:
                    result.episodes += 1
                    success = bool(res.info.get("success", False))
                    window_r.append(wk.reward)
                    window_s.append(success)
                    if writer is not None:
                        cause = res.info.get("failure_cause", "")
                        writer.writerow((agent.env_steps, result.episodes, wk.index, _route_label(wk.route),
                                         repr(wk.reward), int(success), wk.steps, getattr(cause, "value", cause),
                                         repr(float(np.mean(window_r))), repr(float(np.mean(window_s))),
                                         repr(epsilon_at(agent.env_steps, config)), repr(agent.alpha),
                                         repr(last.q1_loss), repr(last.q2_loss), repr(last.policy_loss),
                                         repr(last.entropy)))
                    if progress is not None:
                        progress({"step": agent.env_steps, "episode": result.episodes, "reward": wk.reward,
                                  "success": success, "window_mean_reward": float(np.mean(window_r)),
                                  "window_success_rate": float(np.mean(window_s)), "alpha": agent.alpha})
                    _reset_worker(wk, routes, agent)
                if agent.env_steps > config.warmup_steps and len(buffer) >= config.batch_size:
                    beta = _linear(config.priority_beta_initial, config.priority_beta_final, agent.env_steps,
                                   config.total_steps)
                    for _ in range(config.updates_per_step):
                        batch = buffer.sample(config.batch_size, learn_rng, beta)
                        last, pr = agent.update(batch)
                        buffer.update_priorities(batch.indices, pr)
                if agent.env_steps >= next_ckpt:
                    checkpoint(f"step_{agent.env_steps:09d}.ckpt")
                    next_ckpt += config.checkpoint_interval
    except NonFiniteGradientError as exc:
        checkpoint("diagnostic.ckpt")
        raise TrainingError(f"training halted: {exc}") from exc
    except BaseException:
        checkpoint("final.ckpt")
        raise
    finally:
        if pool:
            pool.shutdown()
        if metrics_file is not None:
            metrics_file.close()
    checkpoint("final.ckpt")
    return result


def _first_args(routes):
    r = routes[0]
    if isinstance(r, tuple):
        return (r[1],)
    return (r,)


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    num = {"step", "episode", "worker", "success", "steps"}
    out = []
    for r in rows:
        out.append({k: (int(v) if k in num else v if k in ("route", "failure_cause") else float(v))
                    for k, v in r.items()})
    return out


# --- corridor MDP (test bed with an exact oracle) ------------------------------

@dataclass
class CorridorResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


class CorridorEnv:
    """64 cells, 9 moves of -4..+4, terminal cells at both ends.

    Every step costs ``step_cost``; landing on cell 0 adds ``left_reward`` and
    on the last cell ``right_reward``. Episodes start on a uniformly random
    interior cell and time out after ``max_steps``. Observations are one-hot.
    """

    def __init__(self, n_states: int = 64, left_reward: float = 0.5, right_reward: float = 1.0,
                 step_cost: float = 0.05, max_steps: int = 64, seed: int | None = None):
        self.n, self.left, self.right, self.cost, self.max_steps = n_states, left_reward, right_reward, step_cost, \
            max_steps
        self.rng = np.random.default_rng(seed)
        self.pos = 1
        self.steps = 0
        self.done = True

    moves = np.arange(-4, 5)

    def _obs(self):
        o = np.zeros(self.n, dtype=np.float32)
        o[self.pos] = 1.0
        return o

    def reset(self, route_id=0, seed: int | None = None, start: int | None = None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.pos = int(self.rng.integers(1, self.n - 1)) if start is None else int(start)
        self.steps, self.done = 0, False
        return self._obs()

    def transition(self, s: int, a: int) -> tuple[int, float, bool]:
        s2 = min(max(s + int(self.moves[a]), 0), self.n - 1)
        r = -self.cost
        if s2 == 0:
            r += self.left
        elif s2 == self.n - 1:
            r += self.right
        return s2, r, s2 in (0, self.n - 1)

    def step(self, a: int) -> CorridorResult:
        if self.done:
            raise RuntimeError("episode is finished; call reset()")
        self.pos, r, term = self.transition(self.pos, a)
        self.steps += 1
        timeout = self.steps >= self.max_steps and not term
        self.done = term or timeout
        # a timeout is not a terminal state of the MDP: it is stored as non-terminal
        return CorridorResult(self._obs(), r, self.done, {"success": bool(term and self.pos == self.n - 1),
                                                          "terminal": term})


def corridor_value_iteration(env: CorridorEnv, gamma: float = 1.0, tol: float = 1e-12) -> np.ndarray:
    """Optimal action values ``Q*[s, a]``; terminal rows are zero."""
    n, A = env.n, len(env.moves)
    q = np.zeros((n, A))
    for _ in range(10_000):
        v = q.max(axis=1)
        v[0] = v[-1] = 0.0
        new = np.zeros_like(q)
        for s in range(1, n - 1):
            for a in range(A):
                s2, r, term = env.transition(s, a)
                new[s, a] = r + (0.0 if term else gamma * v[s2])
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new
    return q


def optimal_actions(q_star: np.ndarray, s: int, tol: float = 1e-9) -> set[int]:
    return set(np.flatnonzero(q_star[s] >= q_star[s].max() - tol).tolist())
