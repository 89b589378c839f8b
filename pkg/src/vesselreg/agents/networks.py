"""Actor-critic policy networks and the versioned checkpoint container.

Two head styles share one architecture: a 3-layer strided conv encoder over
the observation planes, features concatenated with the normalized pose
vector, a 2-layer MLP trunk, then a 4-dim Gaussian actor (state-independent
log-std) and a scalar critic.

"cnn"  trains everything end to end.
"pcm"  freezes the randomly-initialized conv encoder and trains only the MLP
       and heads; the frozen features act as a fixed visual preprocessor, so
       rollouts can cache them and updates never touch the conv stack.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

CHECKPOINT_MAGIC = b"VRNET1\n"
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class NetworkSpec:
    head: str  # "cnn" | "pcm"
    in_planes: int
    resolution: int
    conv_channels: tuple[int, int, int] = (32, 64, 64)
    mlp_hidden: tuple[int, int] = (64, 64)
    action_dim: int = 4
    pose_dim: int = 4
    log_std_init: float = 0.0

    def __post_init__(self):
        if self.head not in ("cnn", "pcm"):
            raise ValueError(f"unknown head {self.head!r}")


class PolicyNetwork(nn.Module):
    def __init__(self, spec: NetworkSpec, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.spec = spec
        c0, c1, c2 = spec.conv_channels
        self.encoder = nn.Sequential(
            nn.Conv2d(spec.in_planes, c0, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(c0, c1, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(c1, c2, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Flatten(),
        )
        with torch.no_grad():
            probe = torch.zeros(1, spec.in_planes, spec.resolution, spec.resolution)
            self.feature_dim = int(self.encoder(probe).shape[1])
        h0, h1 = spec.mlp_hidden
        self.trunk = nn.Sequential(
            nn.Linear(self.feature_dim + spec.pose_dim, h0),
            nn.ReLU(),
            nn.Linear(h0, h1),
            nn.ReLU(),
        )
        self.actor_mean = nn.Linear(h1, spec.action_dim)
        self.log_std = nn.Parameter(torch.full((spec.action_dim,), spec.log_std_init))
        self.critic = nn.Linear(h1, 1)
        if spec.head == "pcm":
            for p in self.encoder.parameters():
                p.requires_grad_(False)

    @property
    def frozen_extractor(self) -> bool:
        return self.spec.head == "pcm"

    def extract(self, planes: torch.Tensor) -> torch.Tensor:
        if self.frozen_extractor:
            with torch.no_grad():
                return self.encoder(planes)
        return self.encoder(planes)

    def heads(self, features: torch.Tensor, pose_vec: torch.Tensor):
        z = self.trunk(torch.cat([features, pose_vec], dim=1))
        return self.actor_mean(z), self.log_std, self.critic(z).squeeze(-1)

    def forward(self, planes: torch.Tensor, pose_vec: torch.Tensor):
        return self.heads(self.extract(planes), pose_vec)

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]


def gaussian_log_prob(u: torch.Tensor, mean: torch.Tensor, log_std: torch.Tensor) -> torch.Tensor:
    var = torch.exp(2.0 * log_std)
    return (-((u - mean) ** 2) / (2.0 * var) - log_std - 0.5 * LOG_2PI).sum(-1)


def squashed_log_prob(u: torch.Tensor, mean: torch.Tensor, log_std: torch.Tensor) -> torch.Tensor:
    """Log-density of a = tanh(u) under the squashed Gaussian (scale constant dropped)."""
    return gaussian_log_prob(u, mean, log_std) - torch.log(1.0 - torch.tanh(u) ** 2 + 1e-8).sum(-1)


def sample_action(mean: torch.Tensor, log_std: torch.Tensor, generator: torch.Generator):
    """Draw pre-squash sample u and its squashed log-prob; action is tanh(u) in (-1, 1)."""
    std = torch.exp(log_std)
    u = mean + std * torch.randn(mean.shape, generator=generator)
    return u, squashed_log_prob(u, mean, log_std)


# ------------------------------------------------------------- checkpoints


def save_checkpoint(path, net: PolicyNetwork, seed: int, config_echo: dict | None = None) -> None:
    """Write magic + JSON descriptor + little-endian float32 parameter blob."""
    state = net.state_dict()
    entries = [[name, list(t.shape)] for name, t in state.items()]
    header = {
        "format": 1,
        "spec": asdict(net.spec),
        "seed": seed,
        "config": config_echo or {},
        "params": entries,
    }
    blob = b"".join(
        t.detach().cpu().numpy().astype("<f4").tobytes() for t in state.values()
    )
    header_bytes = json.dumps(header).encode("utf-8")
    payload = (
        CHECKPOINT_MAGIC
        + len(header_bytes).to_bytes(8, "little")
        + header_bytes
        + blob
    )
    from ..formats import atomic_write_bytes

    atomic_write_bytes(path, payload)


def load_checkpoint(path) -> tuple[PolicyNetwork, dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a network checkpoint")
    off = len(CHECKPOINT_MAGIC)
    hlen = int.from_bytes(raw[off:off + 8], "little")
    off += 8
    header = json.loads(raw[off:off + hlen].decode("utf-8"))
    off += hlen
    spec_d = dict(header["spec"])
    spec_d["conv_channels"] = tuple(spec_d["conv_channels"])
    spec_d["mlp_hidden"] = tuple(spec_d["mlp_hidden"])
    spec = NetworkSpec(**spec_d)
    net = PolicyNetwork(spec, seed=header["seed"])
    state = {}
    for name, shape in header["params"]:
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw[off:off + 4 * n], dtype="<f4").reshape(shape)
        off += 4 * n
        state[name] = torch.from_numpy(arr.copy())
    net.load_state_dict(state)
    return net, header
