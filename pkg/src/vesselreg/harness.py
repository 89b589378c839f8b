"""Evaluation harness: per-parameter pose errors and configuration sweeps.

A sweep runs every combination of mode x algorithm x observation x network
(x timesteps for the learned modes) over a shared set of cases and seeds,
records one row per run, and aggregates reward and per-parameter MAE as
mean +- population std. Individual run failures are recorded and skipped,
never aborting the sweep.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from .cases import RegistrationCase
from .env import EnvConfig, RegistrationEnv
from .formats import atomic_write_bytes, parse_keyvalue
from .geometry import Pose, wrap_angle_deg
from .phantom import CaseSampler, make_case
from .agents.ppo import TrainConfig, register_pretrained, train
from .agents.search import cem_search, grid_oracle, random_search
from .reward import RewardValue


@dataclass(frozen=True)
class PoseError:
    """Absolute per-parameter registration error: translations mm, rotations deg."""

    e_ty: float
    e_tx: float
    e_rz: float
    e_ry: float

    def __post_init__(self):
        for name in ("e_ty", "e_tx", "e_rz", "e_ry"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def total(self) -> float:
        return self.e_ty + self.e_tx + self.e_rz + self.e_ry

    @property
    def translation_mean(self) -> float:
        return 0.5 * (self.e_ty + self.e_tx)

    @property
    def rotation_mean(self) -> float:
        return 0.5 * (self.e_rz + self.e_ry)


def pose_mae(est: Pose, truth: Pose, spacing: float = 1.0) -> PoseError:
    """Absolute per-parameter differences, translations scaled to mm by spacing.

    Poses in this package already carry translations in mm, so callers pass
    spacing = 1.0; the factor exists for pixel-valued pose sources. Angular
    differences are wrapped into [0, 180].
    """
    if spacing <= 0:
        raise ValueError("spacing must be > 0")
    return PoseError(
        e_ty=abs(est.t_y - truth.t_y) * spacing,
        e_tx=abs(est.t_x - truth.t_x) * spacing,
        e_rz=abs(wrap_angle_deg(est.r_z - truth.r_z)),
        e_ry=abs(wrap_angle_deg(est.r_y - truth.r_y)),
    )


# ------------------------------------------------------------ sweep config


def _parse_list(raw: str) -> list[str]:
    return [tok.strip() for tok in raw.split(",") if tok.strip()]


@dataclass
class SweepConfig:
    """Experiment description; see from_text for the config-file schema."""

    cases: int = 4
    case_seed_start: int = 0
    noiseless: bool = False
    noise_sigma: float = 0.03
    fill_min: float = 0.7
    fill_max: float = 1.0
    offset_t_px: float = 40.0
    offset_r_deg: float = 10.0
    volume_dim: int = 48
    image_dim: int = 96
    modes: list = field(default_factory=lambda: ["search"])
    algorithms: list = field(default_factory=lambda: ["cem", "random"])
    observations: list = field(default_factory=lambda: ["concat"])
    networks: list = field(default_factory=lambda: ["pcm"])
    timesteps: list = field(default_factory=lambda: [2000])
    seeds: list = field(default_factory=lambda: [0])
    policy_resolution: int = 64
    rollout_steps: int = 512
    train_cases: int = 4
    train_case_seed_start: int = 1000
    train_timesteps: int = 10000
    cem_population: int = 48
    cem_elite_frac: float = 0.25
    cem_iters: int = 12
    grid_step_px: float = 15.0
    grid_step_deg: float = 5.0
    grid_refine_levels: int = 5
    random_samples: int = 500

    _MODES = ("search", "online", "pretrained")
    _ALGOS = ("ppo", "cem", "random", "grid")
    _OBS = ("concat", "fuse")
    _NETS = ("cnn", "pcm")

    def __post_init__(self):
        if self.cases < 1:
            raise ValueError("cases must be >= 1")
        for m in self.modes:
            if m not in self._MODES:
                raise ValueError(f"unknown mode {m!r}, expected one of {self._MODES}")
        for a in self.algorithms:
            if a not in self._ALGOS:
                raise ValueError(f"unknown algorithm {a!r}, expected one of {self._ALGOS}")
        for o in self.observations:
            if o not in self._OBS:
                raise ValueError(f"unknown observation {o!r}, expected one of {self._OBS}")
        for n in self.networks:
            if n not in self._NETS:
                raise ValueError(f"unknown network {n!r}, expected one of {self._NETS}")

    @classmethod
    def from_text(cls, text: str) -> "SweepConfig":
        """Parse a `key = value` config; lists are comma-separated.

        Recognized keys are exactly the SweepConfig field names. Integer
        list keys: timesteps, seeds. String list keys: modes, algorithms,
        observations, networks. Booleans accept true/false/1/0.
        """
        pairs = parse_keyvalue(text)
        kwargs = {}
        field_types = {f.name: f for f in dc_fields(cls)}
        int_lists = {"timesteps", "seeds"}
        str_lists = {"modes", "algorithms", "observations", "networks"}
        for key, raw in pairs.items():
            if key not in field_types:
                raise ValueError(f"unknown config key {key!r}")
            if key in int_lists:
                kwargs[key] = [int(tok) for tok in _parse_list(raw)]
            elif key in str_lists:
                kwargs[key] = _parse_list(raw)
            elif key == "noiseless":
                if raw.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(f"noiseless must be true/false, got {raw!r}")
                kwargs[key] = raw.lower() in ("true", "1")
            else:
                default = getattr(cls(), key)
                kwargs[key] = type(default)(raw)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "SweepConfig":
        return cls.from_text(Path(path).read_text())

    def sampler(self) -> CaseSampler:
        s = CaseSampler(
            volume_dim=self.volume_dim,
            image_dim=self.image_dim,
            noise_sigma=self.noise_sigma,
            fill_range=(self.fill_min, self.fill_max),
            offset_t_px=self.offset_t_px,
            offset_r_deg=self.offset_r_deg,
        )
        return s.noiseless() if self.noiseless else s

    def make_cases(self) -> list:
        sampler = self.sampler()
        return [make_case(self.case_seed_start + i, sampler) for i in range(self.cases)]

    def make_train_cases(self) -> list:
        sampler = self.sampler()
        return [
            make_case(self.train_case_seed_start + i, sampler) for i in range(self.train_cases)
        ]


# ------------------------------------------------------------ records/rows


@dataclass
class RunRecord:
    mode: str
    algorithm: str
    observation: str
    network: str
    timesteps: int
    case_id: str
    seed: int
    reward: float = float("nan")
    e_ty: float = float("nan")
    e_tx: float = float("nan")
    e_rz: float = float("nan")
    e_ry: float = float("nan")
    runtime_s: float = float("nan")
    error: str = ""

    KEY_FIELDS = ("mode", "algorithm", "observation", "network", "timesteps")

    def key(self) -> tuple:
        return tuple(getattr(self, f) for f in self.KEY_FIELDS)


@dataclass
class ReportRow:
    mode: str
    algorithm: str
    observation: str
    network: str
    timesteps: int
    n_runs: int
    n_failed: int
    reward_mean: float
    reward_std: float
    mae_mean: dict
    mae_std: dict
    trans_mae: float
    rot_mae: float
    runtime_mean: float


@dataclass
class ExperimentReport:
    records: list
    rows: list

    def to_csv(self, path) -> None:
        names = [f.name for f in dc_fields(RunRecord)]
        out = []
        out.append(",".join(names))
        for rec in self.records:
            out.append(",".join(_csv_cell(getattr(rec, n)) for n in names))
        atomic_write_bytes(path, ("\n".join(out) + "\n").encode())

    def format_table(self) -> str:
        headers = [
            "mode", "algorithm", "obs", "net", "steps", "n",
            "reward", "Ty(mm)", "Tx(mm)", "Rz(deg)", "Ry(deg)", "time(s)",
        ]
        lines = []
        body = []
        for r in self.rows:
            body.append([
                r.mode, r.algorithm, r.observation, r.network, str(r.timesteps),
                f"{r.n_runs - r.n_failed}/{r.n_runs}",
                _pm(r.reward_mean, r.reward_std),
                _pm(r.mae_mean["e_ty"], r.mae_std["e_ty"]),
                _pm(r.mae_mean["e_tx"], r.mae_std["e_tx"]),
                _pm(r.mae_mean["e_rz"], r.mae_std["e_rz"]),
                _pm(r.mae_mean["e_ry"], r.mae_std["e_ry"]),
                f"{r.runtime_mean:.1f}",
            ])
        widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h)
                  for i, h in enumerate(headers)]
        lines.append("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
        lines.append("  ".join("-" * w for w in widths))
        for row in body:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        return "\n".join(lines) + "\n"

    def save(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.to_csv(out_dir / "records.csv")
        atomic_write_bytes(out_dir / "report.txt", self.format_table().encode())


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _pm(mean: float, std: float) -> str:
    if np.isnan(mean):
        return "-"
    return f"{mean:.3f}+-{std:.3f}"


def aggregate(records: list) -> list:
    """Collapse run records into report rows (population std, NaN-safe)."""
    by_key: dict[tuple, list] = {}
    order = []
    for rec in records:
        k = rec.key()
        if k not in by_key:
            by_key[k] = []
            order.append(k)
        by_key[k].append(rec)
    rows = []
    for k in order:
        group = by_key[k]
        ok = [r for r in group if not r.error]
        rewards = np.array([r.reward for r in ok], dtype=np.float64)
        mae_mean, mae_std = {}, {}
        for p in ("e_ty", "e_tx", "e_rz", "e_ry"):
            vals = np.array([getattr(r, p) for r in ok], dtype=np.float64)
            vals = vals[~np.isnan(vals)]
            mae_mean[p] = float(vals.mean()) if vals.size else float("nan")
            mae_std[p] = float(vals.std()) if vals.size else float("nan")
        runtimes = np.array([r.runtime_s for r in ok], dtype=np.float64)
        rows.append(
            ReportRow(
                mode=k[0], algorithm=k[1], observation=k[2], network=k[3], timesteps=k[4],
                n_runs=len(group),
                n_failed=len(group) - len(ok),
                reward_mean=float(rewards.mean()) if rewards.size else float("nan"),
                reward_std=float(rewards.std()) if rewards.size else float("nan"),
                mae_mean=mae_mean,
                mae_std=mae_std,
                trans_mae=0.5 * (mae_mean["e_ty"] + mae_mean["e_tx"]),
                rot_mae=0.5 * (mae_mean["e_rz"] + mae_mean["e_ry"]),
                runtime_mean=float(runtimes.mean()) if runtimes.size else float("nan"),
            )
        )
    return rows


# ------------------------------------------------------------ experiment


def _record_result(rec: RunRecord, case: RegistrationCase, pose: Pose, reward: RewardValue):
    rec.reward = reward.value
    truth = case.true_pose
    if truth is not None:
        err = pose_mae(pose, truth)
        rec.e_ty, rec.e_tx, rec.e_rz, rec.e_ry = err.e_ty, err.e_tx, err.e_rz, err.e_ry


def _run_search(cfg: SweepConfig, algorithm: str, case, seed: int):
    if algorithm == "cem":
        return cem_search(
            case, population=cfg.cem_population, elite_frac=cfg.cem_elite_frac,
            iters=cfg.cem_iters, seed=seed,
        )
    if algorithm == "random":
        return random_search(case, n_samples=cfg.random_samples, seed=seed)
    if algorithm == "grid":
        return grid_oracle(
            case, coarse_step=(cfg.grid_step_px, cfg.grid_step_deg),
            refine_levels=cfg.grid_refine_levels,
        )
    raise ValueError(f"unknown search algorithm {algorithm!r}")


def run_experiment(cfg: SweepConfig, cases: list | None = None) -> ExperimentReport:
    if cases is None:
        cases = cfg.make_cases()
    if not cases:
        raise ValueError("run_experiment requires at least one case")
    records: list[RunRecord] = []

    if "search" in cfg.modes:
        for algorithm in [a for a in cfg.algorithms if a != "ppo"]:
            seeds = [cfg.seeds[0]] if algorithm == "grid" else cfg.seeds  # grid is deterministic
            for case in cases:
                for seed in seeds:
                    rec = RunRecord("search", algorithm, "-", "-", 0, case.case_id, seed)
                    t0 = time.perf_counter()
                    try:
                        result = _run_search(cfg, algorithm, case, seed)
                        _record_result(rec, case, result.pose, result.reward)
                    except Exception as exc:  # noqa: BLE001 - per-run isolation
                        rec.error = f"{type(exc).__name__}: {exc}"
                    rec.runtime_s = time.perf_counter() - t0
                    records.append(rec)

    if "online" in cfg.modes and "ppo" in cfg.algorithms:
        from .agents.ppo import register_online

        for observation in cfg.observations:
            for network in cfg.networks:
                for n_steps in cfg.timesteps:
                    for case in cases:
                        for seed in cfg.seeds:
                            rec = RunRecord(
                                "online", "ppo", observation, network, n_steps,
                                case.case_id, seed,
                            )
                            t0 = time.perf_counter()
                            try:
                                tc = TrainConfig(
                                    total_timesteps=n_steps, rollout_steps=cfg.rollout_steps,
                                    seed=seed, head=network,
                                )
                                ec = EnvConfig(
                                    observation=observation,
                                    policy_resolution=cfg.policy_resolution,
                                )
                                out = register_online(case, tc, env_config=ec)
                                _record_result(rec, case, out.pose, out.reward)
                            except Exception as exc:  # noqa: BLE001
                                rec.error = f"{type(exc).__name__}: {exc}"
                            rec.runtime_s = time.perf_counter() - t0
                            records.append(rec)

    if "pretrained" in cfg.modes and "ppo" in cfg.algorithms:
        train_cases = cfg.make_train_cases()
        for observation in cfg.observations:
            for network in cfg.networks:
                for seed in cfg.seeds:
                    ec = EnvConfig(
                        observation=observation, policy_resolution=cfg.policy_resolution
                    )
                    tc = TrainConfig(
                        total_timesteps=cfg.train_timesteps, rollout_steps=cfg.rollout_steps,
                        seed=seed, head=network,
                    )
                    try:
                        envs = [RegistrationEnv(c, ec) for c in train_cases]
                        net = train(envs, tc).net
                    except Exception as exc:  # noqa: BLE001
                        for case in cases:
                            rec = RunRecord(
                                "pretrained", "ppo", observation, network,
                                cfg.train_timesteps, case.case_id, seed,
                                error=f"{type(exc).__name__}: {exc}",
                            )
                            records.append(rec)
                        continue
                    for case in cases:
                        rec = RunRecord(
                            "pretrained", "ppo", observation, network,
                            cfg.train_timesteps, case.case_id, seed,
                        )
                        t0 = time.perf_counter()
                        try:
                            pose, reward = register_pretrained(case, net, env_config=ec)
                            _record_result(rec, case, pose, reward)
                        except Exception as exc:  # noqa: BLE001
                            rec.error = f"{type(exc).__name__}: {exc}"
                        rec.runtime_s = time.perf_counter() - t0
                        records.append(rec)

    return ExperimentReport(records=records, rows=aggregate(records))
