"""2D/3D vessel registration: overlap reward, projection engine, RL agents.

Aligns a binary 3D vessel volume to a 2D angiogram by searching a
4-parameter rigid pose (in-plane translation + two rotations) that maximizes
the overlap-degree reward between the projected silhouette and the dark
vessel pixels of the angiogram.
"""

from .geometry import (
    BinaryVolume,
    GrayImage,
    Pose,
    project,
    project_pose,
    resample_nearest,
    transform_volume,
)
from .preprocess import DsaSequence, dsa_min_ip, dsa_spacing, initial_pose, resample_to_dsa, whiten_border
from .reward import RewardValue, overlap_reward
from .cases import RegistrationCase, load_case, save_case
from .env import Action, EnvConfig, Observation, RegistrationEnv

__version__ = "0.1.0"

__all__ = [
    "Action",
    "BinaryVolume",
    "DsaSequence",
    "EnvConfig",
    "GrayImage",
    "Observation",
    "Pose",
    "RegistrationCase",
    "RegistrationEnv",
    "RewardValue",
    "dsa_min_ip",
    "dsa_spacing",
    "initial_pose",
    "load_case",
    "overlap_reward",
    "project",
    "project_pose",
    "resample_nearest",
    "resample_to_dsa",
    "save_case",
    "transform_volume",
    "whiten_border",
    "__version__",
]
