"""Pose-search strategies: PPO actor-critic, CEM, random search, and a grid oracle."""

from .networks import NetworkSpec, PolicyNetwork, load_checkpoint, save_checkpoint
from .ppo import TrainConfig, gae, ppo_update, register_online, register_pretrained, train
from .search import SearchResult, cem_search, grid_oracle, random_search

__all__ = [
    "NetworkSpec",
    "PolicyNetwork",
    "load_checkpoint",
    "save_checkpoint",
    "TrainConfig",
    "gae",
    "ppo_update",
    "train",
    "register_online",
    "register_pretrained",
    "SearchResult",
    "cem_search",
    "grid_oracle",
    "random_search",
]
