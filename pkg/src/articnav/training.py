"""Glue between a resolved training setup and the SAC loop."""

from __future__ import annotations

from pathlib import Path

from .config import TrainSetup
from .envmdp import N_ACTIONS, RoundaboutEnv
from .features import LAYOUT, LAYOUT_VERSION, OBS_SIZE
from .sacd import TrainResult, train


def run_training(setup: TrainSetup, out_dir=None, progress=None) -> TrainResult:
    """Train on ``setup.routes``; checkpoints carry the layout version and the env/feature constants."""
    first = setup.scenarios[0]

    def make_env(i: int) -> RoundaboutEnv:
        return RoundaboutEnv(first, setup.env, seed=i)

    meta = {"layout_version": LAYOUT_VERSION, "layout": LAYOUT.to_dict(), "env_config": setup.env.to_dict(),
            "routes": setup.resolved()["train"]["routes"]}
    return train(setup.sac, make_env, setup.routes, Path(out_dir) if out_dir is not None else None,
                 obs_dim=OBS_SIZE, n_actions=N_ACTIONS, threads=setup.threads, extra_meta=meta, progress=progress)
