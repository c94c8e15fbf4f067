"""Discrete SAC against value iteration on a 64-cell corridor. Takes about two minutes."""

# %%
import numpy as np
from articnav.sacd import CorridorEnv, SacConfig, corridor_value_iteration, optimal_actions, train

env = CorridorEnv()
q_star = corridor_value_iteration(env)
print("V* at cells 1, 32, 62:", q_star[[1, 32, 62]].max(axis=1).round(3))

# %% small nets, alpha annealed toward zero, exploration kept uniform
cfg = SacConfig(hidden=(64, 64), batch_size=64, buffer_capacity=50_000, epsilon_final=1.0,
                alpha_mode="anneal", alpha_init=0.01, alpha_final=1e-3, alpha_anneal_steps=3000,
                lr=1e-3, tau=0.01, workers=1, total_steps=40_000, warmup_steps=1000, seed=0)
agent = train(cfg, lambda i: CorridorEnv(seed=i), [0], obs_dim=env.n, n_actions=9).agent

# %%
eye = np.eye(env.n, dtype=np.float32)
q = np.minimum(agent.q1(eye), agent.q2(eye))
greedy = agent.policy(eye).argmax(axis=1)
wrong = [s for s in range(1, env.n - 1) if greedy[s] not in optimal_actions(q_star, s)]
print("non-optimal cells:", wrong)
print("max |Q - Q*|: %.4f" % np.abs(q[1:-1] - q_star[1:-1]).max())
