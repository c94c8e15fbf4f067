"""Train the desk-scale demo on the 16 m first exit and evaluate it (tens of minutes on one CPU).

Same run as ``artic-nav train --config configs/desk_demo.toml --out runs/desk``.
"""

# %%
from pathlib import Path

from articnav.config import load_train_setup
from articnav.evalkit import agent_policy, evaluate, export_trace_svg
from articnav.training import run_training

root = Path(__file__).resolve().parent.parent
setup = load_train_setup(root / "configs" / "desk_demo.toml")


def show(d):
    if d["episode"] % 50 == 0:
        print(f"episode {d['episode']:5d} step {d['step']:7d} window success {d['window_success_rate']:.3f}")


result = run_training(setup, root / "runs" / "desk", progress=show)

# %% greedy evaluation on the training route
(sc, rid), = setup.routes
report, traces = evaluate(agent_policy(result.agent), [sc], [(0, rid)], episodes_per_route=20,
                          config=setup.env)
print(report.to_text())
export_trace_svg(traces[0], sc, root / "runs" / "desk" / "greedy.svg")
