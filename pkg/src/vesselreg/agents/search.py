"""Derivative-free pose optimizers: CEM, coarse-to-fine grid, random search.

All three walk the same 4-parameter pose box the environment exposes
(initial pose +- case bounds), score candidates with the overlap reward, and
report the best pose ever evaluated together with its reward breakdown.
Poses whose silhouette degenerates (vessel fully outside the frame, or
covering every pixel) score -inf and are never reported.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..cases import RegistrationCase
from ..geometry import Pose, project_pose
from ..reward import NoBackgroundError, NoForegroundError, RewardValue, overlap_reward


def evaluate_pose(case: RegistrationCase, pose: Pose) -> RewardValue | None:
    """Overlap reward of the case at a pose; None when the silhouette degenerates."""
    sil = project_pose(case.volume, pose, case.dsa.dims, case.spacing)
    try:
        return overlap_reward(sil, case.dsa)
    except (NoForegroundError, NoBackgroundError):
        return None


def pose_box(case: RegistrationCase) -> tuple[np.ndarray, np.ndarray]:
    """Per-parameter search interval (t_x mm, t_y mm, r_z deg, r_y deg)."""
    s = case.spacing
    half = np.array(
        [
            case.pose_bounds_px[0] * s,
            case.pose_bounds_px[1] * s,
            case.pose_bounds_deg[0],
            case.pose_bounds_deg[1],
        ]
    )
    center = case.initial_pose.as_array()
    return center - half, center + half


@dataclass
class SearchResult:
    pose: Pose
    reward: RewardValue
    evaluations: int = 0
    history: list = field(default_factory=list)  # best-so-far value per iteration

    def __iter__(self):
        return iter((self.pose, self.reward))


class _BestTracker:
    def __init__(self, case: RegistrationCase):
        self.case = case
        self.pose: Pose | None = None
        self.reward: RewardValue | None = None
        self.evaluations = 0

    def score(self, vec: np.ndarray) -> float:
        pose = Pose.from_array(vec)
        detail = evaluate_pose(self.case, pose)
        self.evaluations += 1
        if detail is None:
            return -math.inf
        if self.reward is None or detail.value > self.reward.value:
            self.reward = detail
            self.pose = pose
        return detail.value

    def result(self, history=None) -> SearchResult:
        if self.pose is None or self.reward is None:
            raise RuntimeError("no valid pose found inside the search bounds")
        return SearchResult(
            pose=self.pose,
            reward=self.reward,
            evaluations=self.evaluations,
            history=list(history or []),
        )


def cem_search(
    case: RegistrationCase,
    population: int = 64,
    elite_frac: float = 0.25,
    iters: int = 20,
    seed: int = 0,
    init_sigma: np.ndarray | None = None,
) -> SearchResult:
    """Cross-entropy method: sample a Gaussian over pose space, refit to elites."""
    if population < 4:
        raise ValueError("population must be >= 4")
    if not 0.0 < elite_frac <= 1.0:
        raise ValueError("elite_frac must lie in (0, 1]")
    lo, hi = pose_box(case)
    mean = case.initial_pose.as_array().astype(np.float64)
    sigma = (hi - lo) / 4.0 if init_sigma is None else np.asarray(init_sigma, dtype=np.float64)
    n_elite = max(1, math.ceil(elite_frac * population))
    rng = np.random.default_rng(seed)
    tracker = _BestTracker(case)
    history = []
    for _ in range(iters):
        samples = rng.normal(mean, sigma, size=(population, 4))
        samples = np.clip(samples, lo, hi)
        scores = np.array([tracker.score(s) for s in samples])
        elite_idx = np.argsort(scores)[::-1][:n_elite]
        elites = samples[elite_idx]
        mean = elites.mean(axis=0)
        sigma = elites.std(axis=0)
        history.append(-math.inf if tracker.reward is None else tracker.reward.value)
    return tracker.result(history)


def _axis_grid(lo: float, hi: float, step: float) -> np.ndarray:
    # anchored at lo so halving the step yields a superset of points
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def grid_oracle(
    case: RegistrationCase,
    coarse_step: tuple[float, float] = (12.0, 6.0),
    refine_levels: int = 5,
    n_starts: int = 5,
) -> SearchResult:
    """Exhaustive coarse grid over the pose box, then local refinement.

    coarse_step is (translation step in px, rotation step in deg). The
    n_starts best well-separated grid points each seed a chain of
    Nelder-Mead polishes whose simplex scale halves refine_levels times.
    Simplexes rather than axis steps because rotations act about the volume
    centre: rotation errors trade off against sub-pixel translations, and
    axis-aligned moves stall on the resulting diagonal ridges. Finally the
    answer is centred inside its equal-reward interval per parameter, since
    nearest-neighbour rasterization makes the optimum a small plateau rather
    than a point.
    """
    from scipy.optimize import minimize

    lo, hi = pose_box(case)
    if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
        raise ValueError("pose bounds must be finite")
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    step = np.array(
        [
            coarse_step[0] * case.spacing,
            coarse_step[0] * case.spacing,
            coarse_step[1],
            coarse_step[1],
        ]
    )
    axes = [_axis_grid(lo[i], hi[i], step[i]) for i in range(4)]
    tracker = _BestTracker(case)
    pts = [np.array(combo) for combo in itertools.product(*axes)]
    vals = np.array([tracker.score(p) for p in pts])
    if not np.isfinite(vals).any():
        raise RuntimeError("no valid pose found inside the search bounds")
    history = [float(vals.max())]
    starts = []
    for i in np.argsort(-vals, kind="stable"):
        if not math.isfinite(vals[i]):
            break
        if any(np.max(np.abs(pts[i] - s) / step) < 2.0 for s in starts):
            continue
        starts.append(pts[i])
        if len(starts) >= n_starts:
            break

    def neg(vec):
        return -tracker.score(np.clip(vec, lo, hi))

    base = float(step.max())
    scales = [base * 0.6 * 0.4**k for k in range(min(refine_levels, 6))]
    best_x, best_f = None, math.inf
    for s in starts:
        x, f = s.copy(), neg(s)
        for scale in scales:
            simplex = x + np.vstack([np.zeros(4), np.diag([scale] * 4)])
            out = minimize(
                neg,
                x,
                method="Nelder-Mead",
                options=dict(xatol=0.01, fatol=1e-12, maxfev=500, initial_simplex=simplex),
            )
            if out.fun < f:
                f, x = out.fun, np.clip(out.x, lo, hi)
        if f < best_f:
            best_f, best_x = f, x
        history.append(-best_f)
    # centre each parameter in its equal-reward interval; ties are exact
    # because identical silhouettes yield bit-identical rewards
    pitch = np.array([0.1 * case.spacing, 0.1 * case.spacing, 0.05, 0.05])
    span = np.array([1.5 * case.spacing, 1.5 * case.spacing, 2.0, 2.0])
    x = best_x.copy()
    for _ in range(2):
        for i in range(4):
            edges = []
            for sgn in (1.0, -1.0):
                reach, m = 0.0, 1
                while m * pitch[i] <= span[i]:
                    cand = x.copy()
                    cand[i] = x[i] + sgn * m * pitch[i]
                    if not lo[i] <= cand[i] <= hi[i] or neg(cand) != best_f:
                        break
                    reach = sgn * m * pitch[i]
                    m += 1
                edges.append(reach)
            x[i] = x[i] + (edges[0] + edges[1]) / 2.0
        if neg(x) != best_f:
            x = best_x.copy()
            break
    history.append(-best_f)
    pose = Pose.from_array(x)
    detail = evaluate_pose(case, pose)
    return SearchResult(pose=pose, reward=detail, evaluations=tracker.evaluations, history=history)


def random_search(case: RegistrationCase, n_samples: int = 500, seed: int = 0) -> SearchResult:
    """Uniform sampling over the pose box; baseline for the sweep tables."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    lo, hi = pose_box(case)
    rng = np.random.default_rng(seed)
    tracker = _BestTracker(case)
    history = []
    for _ in range(n_samples):
        tracker.score(rng.uniform(lo, hi))
        history.append(-math.inf if tracker.reward is None else tracker.reward.value)
    return tracker.result(history)
