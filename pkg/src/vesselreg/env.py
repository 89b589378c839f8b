"""Step-bounded pose-adjustment environment for cross-dimensional registration.

The agent nudges the 4-parameter pose of the vessel volume; each step renders
the silhouette at the new pose, scores it with the overlap reward against the
DSA, and reports an observation built from the silhouette/DSA pair. The best
(pose, reward) ever visited is tracked across episodes and is the quantity a
registration run ultimately reports.

step() follows the usual (observation, reward, done, info) convention; the
full RewardValue breakdown for the step rides in info["reward_detail"].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .cases import RegistrationCase
from .geometry import DimMismatchError, GrayImage, Pose, project_pose
from .reward import NoBackgroundError, NoForegroundError, RewardValue, overlap_reward


@dataclass(frozen=True)
class Action:
    """Continuous pose delta: translations in pixels, rotations in degrees."""

    d_tx: float = 0.0
    d_ty: float = 0.0
    d_rz: float = 0.0
    d_ry: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.d_tx, self.d_ty, self.d_rz, self.d_ry], dtype=np.float64)


@dataclass
class EnvConfig:
    step_bound_px: float = 5.0
    step_bound_deg: float = 0.5
    episode_len: int = 200
    observation: str = "concat"  # "concat" (2 planes) or "fuse" (3 planes)
    policy_resolution: int = 64
    reward_floor: float = -5.0  # reward when the vessel leaves the frame entirely
    fuse_alpha: float = 1.0

    @property
    def n_planes(self) -> int:
        return 2 if self.observation == "concat" else 3


@dataclass
class Observation:
    planes: np.ndarray  # (C, R, R) float32 in [0, 1]
    pose_vec: np.ndarray  # (4,) float32, normalized to [-1, 1] over the search bounds


@lru_cache(maxsize=32)
def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix averaging source pixels by interval overlap.

    Exactly a block mean when n_in is a multiple of n_out.
    """
    w = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
        w[i] /= scale
    return w


def area_downsample(pixels: np.ndarray, resolution: int) -> np.ndarray:
    """Area-weighted resize of a 2D array to (resolution, resolution)."""
    wx = _area_weights(pixels.shape[0], resolution)
    wy = _area_weights(pixels.shape[1], resolution)
    return wx @ pixels @ wy.T


def fuse_planes(silhouette: np.ndarray, dsa: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    """Color overlay: vessel mask tints red over the grayscale DSA, dims preserved.

    Plane 0 (R) = max(silhouette, dsa); planes 1 and 2 (G, B) = dsa scaled by
    (1 - alpha * silhouette).
    """
    if silhouette.shape != dsa.shape:
        raise DimMismatchError(f"silhouette {silhouette.shape} != dsa {dsa.shape}")
    r = np.maximum(silhouette, dsa)
    gb = dsa * (1.0 - alpha * silhouette)
    return np.stack([r, gb, gb])


def observe_concat(silhouette: GrayImage, dsa: GrayImage, resolution: int) -> np.ndarray:
    """2-plane stack (silhouette, dsa), area-downsampled to the policy resolution."""
    if silhouette.dims != dsa.dims:
        raise DimMismatchError(f"silhouette {silhouette.dims} != dsa {dsa.dims}")
    planes = [area_downsample(silhouette.pixels, resolution), area_downsample(dsa.pixels, resolution)]
    return np.clip(np.stack(planes), 0.0, 1.0).astype(np.float32)


def observe_fuse(silhouette: GrayImage, dsa: GrayImage, resolution: int, alpha: float = 1.0) -> np.ndarray:
    """3-plane fused overlay, built at full resolution then downsampled."""
    fused = fuse_planes(silhouette.pixels, dsa.pixels, alpha)
    planes = [area_downsample(p, resolution) for p in fused]
    return np.clip(np.stack(planes), 0.0, 1.0).astype(np.float32)


class RegistrationEnv:
    """Single-owner environment over one registration case.

    Pose state is kept as an unwrapped (t_x mm, t_y mm, r_z deg, r_y deg)
    vector so clamping against the search bounds is plain interval arithmetic;
    angle wrapping happens only when a Pose is materialized.
    """

    def __init__(self, case: RegistrationCase, config: EnvConfig | None = None):
        self.case = case
        self.config = config or EnvConfig()
        s = case.spacing
        self._init_vec = case.initial_pose.as_array()
        half = np.array(
            [
                case.pose_bounds_px[0] * s,
                case.pose_bounds_px[1] * s,
                case.pose_bounds_deg[0],
                case.pose_bounds_deg[1],
            ]
        )
        self._half_range = half
        self._lo = self._init_vec - half
        self._hi = self._init_vec + half
        self._step_bounds = np.array(
            [
                self.config.step_bound_px * s,
                self.config.step_bound_px * s,
                self.config.step_bound_deg,
                self.config.step_bound_deg,
            ]
        )
        self._vec = self._init_vec.copy()
        self.step_count = 0
        self.episode_count = 0
        self.best_pose: Pose | None = None
        self.best_reward: RewardValue | None = None
        self.last_reward_detail: RewardValue | None = None
        self._was_reset = False

    # ------------------------------------------------------------ state

    @property
    def pose(self) -> Pose:
        return Pose.from_array(self._vec)

    @property
    def best_value(self) -> float:
        return -np.inf if self.best_reward is None else self.best_reward.value

    def render_silhouette(self, pose: Pose | None = None) -> GrayImage:
        pose = pose if pose is not None else self.pose
        return project_pose(self.case.volume, pose, self.case.dsa.dims, self.case.spacing)

    def _evaluate(self, silhouette: GrayImage) -> tuple[float, RewardValue | None]:
        try:
            rv = overlap_reward(silhouette, self.case.dsa)
        except (NoForegroundError, NoBackgroundError):
            # vessel fully outside the frame: strong penalty, never "best"
            return self.config.reward_floor, None
        return rv.value, rv

    def _track_best(self, reward: float, detail: RewardValue | None) -> None:
        if detail is not None and (self.best_reward is None or reward > self.best_reward.value):
            self.best_reward = detail
            self.best_pose = self.pose

    def _observe(self, silhouette: GrayImage) -> Observation:
        cfg = self.config
        if cfg.observation == "concat":
            planes = observe_concat(silhouette, self.case.dsa, cfg.policy_resolution)
        elif cfg.observation == "fuse":
            planes = observe_fuse(silhouette, self.case.dsa, cfg.policy_resolution, cfg.fuse_alpha)
        else:
            raise ValueError(f"unknown observation mode {cfg.observation!r}")
        pose_vec = (self._vec - self._init_vec) / self._half_range
        return Observation(planes=planes, pose_vec=np.clip(pose_vec, -1.0, 1.0).astype(np.float32))

    # ------------------------------------------------------------ API

    def reset(self) -> Observation:
        """Start an episode at the case's initial pose. Best tracking persists."""
        self._vec = self._init_vec.copy()
        self.step_count = 0
        self.episode_count += 1
        self._was_reset = True
        sil = self.render_silhouette()
        reward, detail = self._evaluate(sil)
        self.last_reward_detail = detail
        self._track_best(reward, detail)
        return self._observe(sil)

    def step(self, action: Action | np.ndarray):
        """Apply a step-bounded pose delta; returns (obs, reward, done, info)."""
        if not self._was_reset:
            raise RuntimeError("call reset() before step()")
        a = action.as_array() if isinstance(action, Action) else np.asarray(action, dtype=np.float64)
        if a.shape != (4,) or not np.isfinite(a).all():
            raise ValueError(f"action must be 4 finite deltas, got {a!r}")
        s = self.case.spacing
        delta = np.array([a[0] * s, a[1] * s, a[2], a[3]])
        delta = np.clip(delta, -self._step_bounds, self._step_bounds)
        self._vec = np.clip(self._vec + delta, self._lo, self._hi)
        self.step_count += 1
        sil = self.render_silhouette()
        reward, detail = self._evaluate(sil)
        self.last_reward_detail = detail
        self._track_best(reward, detail)
        done = self.step_count >= self.config.episode_len
        info = {"reward_detail": detail, "pose": self.pose}
        return self._observe(sil), reward, done, info
