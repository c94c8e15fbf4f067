"""Tractor-trailer roundabout navigation: simulator, features, discrete SAC and evaluation tools."""

from .envmdp import N_ACTIONS, STEERING_LEVELS, EnvConfig, RoundaboutEnv
from .features import LAYOUT, LAYOUT_VERSION, OBS_SIZE, FeatureConfig
from .sacd import SacAgent, SacConfig
from .scenario import RoundaboutSpec, Scenario, default_scenarios, generate_roundabout
from .vehicle import VehicleSpec

__version__ = "0.1.0"

__all__ = [
    "EnvConfig", "FeatureConfig", "LAYOUT", "LAYOUT_VERSION", "N_ACTIONS", "OBS_SIZE", "RoundaboutEnv",
    "RoundaboutSpec", "STEERING_LEVELS", "SacAgent", "SacConfig", "Scenario", "VehicleSpec",
    "default_scenarios", "generate_roundabout",
]
