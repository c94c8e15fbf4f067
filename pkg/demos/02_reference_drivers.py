"""Drive the 16 m first exit with two scripted drivers and compare their traces.

Pure pursuit on the lane centre runs into the kerb at the tight entry; swinging
wide before each turn gets the rig through.
"""

# %%
from articnav.envmdp import RoundaboutEnv, lane_follow_policy, wide_turn_policy
from articnav.evalkit import export_trace_csv, export_trace_svg, max_lateral_offset, run_episode
from articnav.scenario import default_scenarios, first_exit_route

sc = default_scenarios()["roundabout_16m"]
rid = first_exit_route(sc)
env = RoundaboutEnv(sc, seed=0)

# %%
for label, make in [("lane_follow", lane_follow_policy), ("wide_turn", wide_turn_policy)]:
    tr = run_episode(env, make(env), rid, seed=1)
    print(f"{label:12s} success={tr.success} cause={tr.failure_cause} steps={tr.steps} "
          f"mean_dist={tr.mean_distance():.2f} m max_offset={max_lateral_offset(tr, sc.route(rid)):.2f} m")
    export_trace_csv(tr, f"{label}.csv")
    export_trace_svg(tr, sc, f"{label}.svg")

# %% the observation the agent sees at the start
from articnav.features import describe
obs = env.reset(rid, seed=1)
for name, v in describe(obs)[:16]:
    print(f"{name:24s} {v: .3f}")
