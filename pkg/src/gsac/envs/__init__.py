from gsac.envs.base import (
    Environment,
    Transition,
    reset,
    step,
    rollout_random,
    write_trajectory_csv,
)
from gsac.envs.synthetic import build_synthetic
from gsac.envs.wireless import build_wireless
from gsac.envs.traffic import build_traffic

__all__ = [
    "Environment",
    "Transition",
    "reset",
    "step",
    "rollout_random",
    "write_trajectory_csv",
    "build_synthetic",
    "build_wireless",
    "build_traffic",
]
