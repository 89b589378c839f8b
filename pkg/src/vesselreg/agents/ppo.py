"""Clipped-surrogate PPO over the registration environment.

The trainer is deliberately small: single-threaded rollouts over a list of
environments visited round-robin, GAE advantages per episode segment with a
bootstrapped value at truncation, and minibatch Adam updates on the clipped
objective. Everything is driven by explicit generators so a fixed seed gives
bit-identical curves and parameters.

Online registration trains on one case and reports the best pose the
environment ever visited; pretrained registration rolls the mean action out
for a single episode.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..cases import RegistrationCase
from ..env import EnvConfig, RegistrationEnv
from ..geometry import Pose
from ..reward import RewardValue
from .networks import NetworkSpec, PolicyNetwork, sample_action, squashed_log_prob


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 64
    total_timesteps: int = 10000
    # short rollouts: online budgets run ~10k steps total, and 2048-step
    # rollouts would leave only five gradient phases for the whole run
    rollout_steps: int = 512
    clip_ratio: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    n_epochs: int = 10
    max_grad_norm: float = 0.5
    seed: int = 0
    head: str = "cnn"  # "cnn" | "pcm"
    log_std_init: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.total_timesteps < 1:
            raise ValueError("learning_rate, batch_size, total_timesteps must be positive")
        if self.rollout_steps < 1 or self.n_epochs < 1:
            raise ValueError("rollout_steps and n_epochs must be positive")
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")


def gae(rewards, values, gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimation over one trajectory segment.

    values carries one extra entry: the bootstrap value of the state after
    the last reward (zero for a true terminal state).
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if v.shape[0] != r.shape[0] + 1:
        raise ValueError(f"need len(values) == len(rewards) + 1, got {v.shape[0]} vs {r.shape[0]}")
    deltas = r + gamma * v[1:] - v[:-1]
    adv = np.empty_like(deltas)
    acc = 0.0
    for t in range(len(deltas) - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        adv[t] = acc
    return adv


def policy_loss(ratio: torch.Tensor, advantages: torch.Tensor, clip_ratio: float) -> torch.Tensor:
    """Negated clipped surrogate: -E[min(rho*A, clip(rho, 1+-eps)*A)]."""
    unclipped = ratio * advantages
    clipped = torch.clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * advantages
    return -torch.minimum(unclipped, clipped).mean()


@dataclass
class Rollout:
    """One update's worth of experience with advantages already attached.

    obs holds raw observation planes for the trainable-extractor head, or
    cached frozen-extractor features for the PCM head (precomputed=True),
    in which case updates never touch the conv stack.
    """

    obs: torch.Tensor
    pose_vec: torch.Tensor
    pre_squash: torch.Tensor
    log_prob: torch.Tensor
    advantages: torch.Tensor
    returns: torch.Tensor
    precomputed: bool

    def __len__(self) -> int:
        return self.obs.shape[0]


def ppo_update(
    net: PolicyNetwork,
    rollout: Rollout,
    cfg: TrainConfig,
    optimizer: torch.optim.Optimizer | None = None,
    perm_rng: np.random.Generator | None = None,
) -> dict:
    """Run cfg.n_epochs of minibatch updates; returns mean loss statistics."""
    if optimizer is None:
        optimizer = torch.optim.Adam(net.trainable_parameters(), lr=cfg.learning_rate)
    if perm_rng is None:
        perm_rng = np.random.default_rng(cfg.seed)
    n = len(rollout)
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_fraction": 0.0}
    n_batches = 0
    for _ in range(cfg.n_epochs):
        order = perm_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = torch.from_numpy(order[start:start + cfg.batch_size].copy())
            if rollout.precomputed:
                feats = rollout.obs[idx]
            else:
                feats = net.extract(rollout.obs[idx])
            mean, log_std, value = net.heads(feats, rollout.pose_vec[idx])
            new_logp = squashed_log_prob(rollout.pre_squash[idx], mean, log_std)
            ratio = torch.exp(new_logp - rollout.log_prob[idx])
            adv = rollout.advantages[idx]
            if adv.numel() > 1:
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)
            p_loss = policy_loss(ratio, adv, cfg.clip_ratio)
            v_loss = torch.mean((value - rollout.returns[idx]) ** 2)
            entropy = -new_logp.mean()
            loss = p_loss + cfg.value_coef * v_loss - cfg.entropy_coef * entropy
            if not torch.isfinite(loss):
                raise RuntimeError(
                    "non-finite PPO loss: "
                    f"policy={p_loss.item()!r} value={v_loss.item()!r} "
                    f"entropy={entropy.item()!r} ratio_max={ratio.max().item()!r}"
                )
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(net.trainable_parameters(), cfg.max_grad_norm)
            optimizer.step()
            with torch.no_grad():
                stats["policy_loss"] += p_loss.item()
                stats["value_loss"] += v_loss.item()
                stats["entropy"] += entropy.item()
                stats["clip_fraction"] += (
                    ((ratio - 1.0).abs() > cfg.clip_ratio).float().mean().item()
                )
            n_batches += 1
    return {k: v / n_batches for k, v in stats.items()}


@dataclass
class TrainResult:
    net: PolicyNetwork
    curve: list  # rows of (timestep, mean_reward, best_reward)
    checkpoints: dict = field(default_factory=dict)  # timestep -> best reward so far


def _best_value(env) -> float:
    return getattr(env, "best_value", -np.inf)


def _step_scale(env) -> np.ndarray:
    c = env.config
    return np.array(
        [c.step_bound_px, c.step_bound_px, c.step_bound_deg, c.step_bound_deg],
        dtype=np.float64,
    )


def train(envs, cfg: TrainConfig, record_at=None) -> TrainResult:
    """Train a policy over one or more environments, round-robin by episode.

    record_at: optional timesteps at which the running best reward across all
    environments is snapshotted into result.checkpoints.
    """
    if callable(envs):
        envs = envs()
    if not isinstance(envs, (list, tuple)):
        envs = [envs]
    envs = list(envs)
    if not envs:
        raise ValueError("train requires at least one environment")
    record_set = set(int(t) for t in record_at) if record_at else set()

    env_cfg = envs[0].config
    spec = NetworkSpec(
        head=cfg.head,
        in_planes=env_cfg.n_planes,
        resolution=env_cfg.policy_resolution,
        log_std_init=cfg.log_std_init,
    )
    net = PolicyNetwork(spec, seed=cfg.seed)
    optimizer = torch.optim.Adam(net.trainable_parameters(), lr=cfg.learning_rate)
    action_gen = torch.Generator().manual_seed(cfg.seed)
    perm_rng = np.random.default_rng([cfg.seed, 1])

    curve = []
    checkpoints = {}
    env_i = 0
    env = envs[env_i]
    obs = env.reset()
    t_global = 0

    def critic_value(observation) -> float:
        planes = torch.from_numpy(observation.planes).unsqueeze(0)
        pose = torch.from_numpy(observation.pose_vec).unsqueeze(0)
        with torch.no_grad():
            _, _, v = net.heads(net.extract(planes), pose)
        return float(v.item())

    while t_global < cfg.total_timesteps:
        steps = min(cfg.rollout_steps, cfg.total_timesteps - t_global)
        obs_store, pose_store, u_store, logp_store = [], [], [], []
        rewards, values = [], []
        adv_parts = []
        seg_start = 0
        for k in range(steps):
            planes = torch.from_numpy(obs.planes).unsqueeze(0)
            pose_t = torch.from_numpy(obs.pose_vec).unsqueeze(0)
            with torch.no_grad():
                feats = net.extract(planes)
                mean, log_std, value = net.heads(feats, pose_t)
                u, logp = sample_action(mean, log_std, action_gen)
                squashed = torch.tanh(u)[0].numpy().astype(np.float64)
            next_obs, reward, done, _ = env.step(squashed * _step_scale(env))
            obs_store.append(feats[0] if net.frozen_extractor else planes[0])
            pose_store.append(pose_t[0])
            u_store.append(u[0])
            logp_store.append(logp[0])
            rewards.append(float(reward))
            values.append(float(value.item()))
            t_global += 1
            if t_global in record_set:
                checkpoints[t_global] = max(_best_value(e) for e in envs)
            if done:
                # truncation: bootstrap through the final observation
                boot = critic_value(next_obs)
                adv_parts.append(
                    gae(
                        rewards[seg_start:],
                        values[seg_start:] + [boot],
                        cfg.gamma,
                        cfg.gae_lambda,
                    )
                )
                seg_start = len(rewards)
                env_i = (env_i + 1) % len(envs)
                env = envs[env_i]
                obs = env.reset()
            else:
                obs = next_obs
        if seg_start < len(rewards):
            boot = critic_value(obs)
            adv_parts.append(
                gae(rewards[seg_start:], values[seg_start:] + [boot], cfg.gamma, cfg.gae_lambda)
            )
        advantages = np.concatenate(adv_parts)
        returns = advantages + np.asarray(values)
        rollout = Rollout(
            obs=torch.stack(obs_store),
            pose_vec=torch.stack(pose_store),
            pre_squash=torch.stack(u_store),
            log_prob=torch.stack(logp_store),
            advantages=torch.as_tensor(advantages, dtype=torch.float32),
            returns=torch.as_tensor(returns, dtype=torch.float32),
            precomputed=net.frozen_extractor,
        )
        ppo_update(net, rollout, cfg, optimizer=optimizer, perm_rng=perm_rng)
        curve.append((t_global, float(np.mean(rewards)), max(_best_value(e) for e in envs)))
    return TrainResult(net=net, curve=curve, checkpoints=checkpoints)


@dataclass
class OnlineResult:
    pose: Pose
    reward: RewardValue
    curve: list
    checkpoints: dict = field(default_factory=dict)
    net: PolicyNetwork | None = None

    def __iter__(self):
        return iter((self.pose, self.reward, self.curve))


def register_online(
    case: RegistrationCase,
    cfg: TrainConfig | None = None,
    env_config: EnvConfig | None = None,
    record_at=None,
) -> OnlineResult:
    """Train on a single case and return the best pose visited during training."""
    cfg = cfg or TrainConfig()
    env = RegistrationEnv(case, env_config)
    result = train([env], cfg, record_at=record_at)
    if env.best_pose is None or env.best_reward is None:
        raise RuntimeError("no valid pose visited during online registration")
    return OnlineResult(
        pose=env.best_pose,
        reward=env.best_reward,
        curve=result.curve,
        checkpoints=result.checkpoints,
        net=result.net,
    )


def register_pretrained(
    case: RegistrationCase,
    net: PolicyNetwork,
    env_config: EnvConfig | None = None,
) -> tuple[Pose, RewardValue]:
    """Roll the mean-action policy for one episode; return the best visited pose."""
    if env_config is None:
        env_config = EnvConfig(
            observation="concat" if net.spec.in_planes == 2 else "fuse",
            policy_resolution=net.spec.resolution,
        )
    if env_config.n_planes != net.spec.in_planes:
        raise ValueError("environment observation planes do not match the network")
    if env_config.policy_resolution != net.spec.resolution:
        raise ValueError("environment resolution does not match the network")
    env = RegistrationEnv(case, env_config)
    obs = env.reset()
    done = False
    scale = _step_scale(env)
    while not done:
        planes = torch.from_numpy(obs.planes).unsqueeze(0)
        pose_t = torch.from_numpy(obs.pose_vec).unsqueeze(0)
        with torch.no_grad():
            mean, _, _ = net.heads(net.extract(planes), pose_t)
            action = torch.tanh(mean)[0].numpy().astype(np.float64)
        obs, _, done, _ = env.step(action * scale)
    if env.best_pose is None or env.best_reward is None:
        raise RuntimeError("no valid pose visited during pretrained registration")
    return env.best_pose, env.best_reward


def save_curve_csv(path, curve) -> None:
    from ..formats import atomic_write_text

    lines = ["timestep,mean_reward,best_reward"]
    for timestep, mean_reward, best_reward in curve:
        lines.append(f"{timestep},{float(mean_reward)!r},{float(best_reward)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_curve_csv(path) -> list:
    rows = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                (int(row["timestep"]), float(row["mean_reward"]), float(row["best_reward"]))
            )
    return rows
