"""Command-line entry point binding the registration engine into workflows.

Exit codes: 0 success, 2 usage error (argparse), 3 missing input file,
1 any other failure. Failures print a single machine-parseable line
`error: <kind>: <detail>` to stderr. All file outputs are atomic.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_FAILURE = 1


class MissingInputError(FileNotFoundError):
    pass


def _require(path, kind: str = "path") -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"{kind} not found: {p}")
    return p


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    os.environ.setdefault("OMP_NUM_THREADS", str(n))
    try:
        import torch

        torch.set_num_threads(n)
    except ImportError:
        pass


# ------------------------------------------------------------ subcommands


def _cmd_phantom(args) -> int:
    from .cases import save_case
    from .phantom import CaseSampler, make_case

    sampler = CaseSampler(
        volume_dim=args.volume_dim,
        image_dim=args.image_dim,
        noise_sigma=args.noise_sigma,
        fill_range=(args.fill_min, args.fill_max),
        offset_t_px=args.offset_px,
        offset_r_deg=args.offset_deg,
    )
    if args.noiseless:
        sampler = sampler.noiseless()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        case = make_case(args.seed + i, sampler)
        case_dir = save_case(case, out_dir / case.case_id)
        print(f"wrote {case_dir}")
    return EXIT_OK


def _cmd_preprocess_dsa(args) -> int:
    from .formats import load_dsa_sequence, write_pgm
    from .preprocess import dsa_min_ip, whiten_border

    frames_dir = _require(args.frames, "frames directory")
    seq = load_dsa_sequence(frames_dir)
    img = dsa_min_ip(seq)
    if not args.no_border_whitening:
        img = whiten_border(img, threshold=args.border_threshold)
    write_pgm(args.out, img, maxval=args.maxval)
    print(f"wrote {args.out} ({img.dims[0]}x{img.dims[1]}, spacing={img.spacing})")
    return EXIT_OK


def _cmd_resample_volume(args) -> int:
    from .formats import read_bvol, write_bvol
    from .preprocess import resample_to_dsa

    vol = read_bvol(_require(args.volume, "volume"))
    out = resample_to_dsa(vol, args.target_spacing)
    write_bvol(args.out, out)
    print(f"wrote {args.out} dims={out.dims} spacing={out.spacing}")
    return EXIT_OK


def _pose_from_args(args, case):
    from .formats import read_pose
    from .geometry import Pose

    if args.pose is not None:
        return read_pose(_require(args.pose, "pose file"))
    if all(v is not None for v in (args.tx, args.ty, args.rz, args.ry)):
        return Pose(args.tx, args.ty, args.rz, args.ry)
    return case.initial_pose


def _cmd_reward(args) -> int:
    from .agents.search import evaluate_pose
    from .cases import load_case
    from .formats import atomic_write_text, format_keyvalue

    case = load_case(_require(args.case, "case directory"))
    pose = _pose_from_args(args, case)
    detail = evaluate_pose(case, pose)
    if detail is None:
        print("error: degenerate-silhouette: no foreground or no background", file=sys.stderr)
        return EXIT_FAILURE
    pairs = {
        "reward": repr(detail.value),
        "fg_mean": repr(detail.fg_mean),
        "bg_mean": repr(detail.bg_mean),
    }
    text = format_keyvalue(pairs)
    if args.out:
        atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_register(args) -> int:
    from .agents.ppo import TrainConfig, register_online, register_pretrained, save_curve_csv
    from .agents.networks import load_checkpoint
    from .agents.search import cem_search, grid_oracle
    from .cases import load_case
    from .env import EnvConfig
    from .formats import write_pose

    case = load_case(_require(args.case, "case directory"))
    t0 = time.perf_counter()
    curve = None
    if args.mode == "online":
        cfg = TrainConfig(
            total_timesteps=args.timesteps,
            rollout_steps=args.rollout_steps,
            seed=args.seed,
            head=args.network,
        )
        env_cfg = EnvConfig(observation=args.observation, policy_resolution=args.resolution)
        result = register_online(case, cfg, env_config=env_cfg)
        pose, detail, curve = result.pose, result.reward, result.curve
    elif args.mode == "pretrained":
        if not args.net:
            print("error: missing-argument: --net is required for pretrained mode", file=sys.stderr)
            return EXIT_USAGE
        net, _ = load_checkpoint(_require(args.net, "checkpoint"))
        pose, detail = register_pretrained(case, net)
    elif args.mode == "cem":
        res = cem_search(
            case, population=args.population, elite_frac=args.elite_frac,
            iters=args.iters, seed=args.seed,
        )
        pose, detail = res.pose, res.reward
    elif args.mode == "grid":
        res = grid_oracle(
            case, coarse_step=(args.grid_step_px, args.grid_step_deg),
            refine_levels=args.refine_levels,
        )
        pose, detail = res.pose, res.reward
    else:  # pragma: no cover - argparse choices guard this
        raise ValueError(f"unknown mode {args.mode!r}")
    runtime = time.perf_counter() - t0
    if args.out:
        write_pose(args.out, pose)
    if curve is not None and args.curve:
        save_curve_csv(args.curve, curve)
    print(
        f"mode={args.mode} case={case.case_id} reward={detail.value:.6f} "
        f"tx={pose.t_x:.3f} ty={pose.t_y:.3f} rz={pose.r_z:.3f} ry={pose.r_y:.3f} "
        f"runtime_s={runtime:.2f}"
    )
    return EXIT_OK


def _cmd_train(args) -> int:
    from .agents.networks import save_checkpoint
    from .agents.ppo import TrainConfig, save_curve_csv, train
    from .cases import list_case_dirs, load_case
    from .env import EnvConfig, RegistrationEnv

    root = _require(args.cases, "cases directory")
    case_dirs = list_case_dirs(root)
    if not case_dirs:
        print(f"error: no-cases: no case directories under {root}", file=sys.stderr)
        return EXIT_FAILURE
    env_cfg = EnvConfig(observation=args.observation, policy_resolution=args.resolution)
    envs = [RegistrationEnv(load_case(d), env_cfg) for d in case_dirs]
    cfg = TrainConfig(
        total_timesteps=args.timesteps,
        rollout_steps=args.rollout_steps,
        seed=args.seed,
        head=args.network,
    )
    result = train(envs, cfg)
    echo = {k: v for k, v in vars(args).items() if k != "func"}  # func is the handler, not config
    save_checkpoint(args.out, result.net, seed=args.seed, config_echo=echo)
    if args.curve:
        save_curve_csv(args.curve, result.curve)
    final = result.curve[-1] if result.curve else (0, float("nan"), float("nan"))
    print(f"wrote {args.out} timesteps={final[0]} mean_reward={final[1]:.4f} best_reward={final[2]:.4f}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    from .harness import SweepConfig, run_experiment

    config_path = args.config or os.environ.get("VESSELREG_SWEEP_CONFIG")
    if config_path:
        cfg = SweepConfig.from_file(_require(config_path, "config file"))
    else:
        cfg = SweepConfig()
    cases = None
    if args.cases:
        from .cases import list_case_dirs, load_case

        root = _require(args.cases, "cases directory")
        cases = [load_case(d) for d in list_case_dirs(root)]
    report = run_experiment(cfg, cases)
    report.save(args.out_dir)
    sys.stdout.write(report.format_table())
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(_require(args.cases, "cases directory"))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


# ------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vesselreg",
        description="4-parameter rigid registration of 3D vessel volumes to 2D angiograms.",
    )
    parser.add_argument("--threads", type=int, default=None, help="cap worker/BLAS threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate synthetic cases with known ground truth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--volume-dim", type=int, default=48)
    p.add_argument("--image-dim", type=int, default=96)
    p.add_argument("--noise-sigma", type=float, default=0.03)
    p.add_argument("--fill-min", type=float, default=0.7)
    p.add_argument("--fill-max", type=float, default=1.0)
    p.add_argument("--offset-px", type=float, default=40.0,
                   help="half-range of the initial-pose translation offset")
    p.add_argument("--offset-deg", type=float, default=10.0,
                   help="half-range of the initial-pose rotation offset")
    p.add_argument("--noiseless", action="store_true")
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("preprocess-dsa", help="temporal MinIP + border whitening of a frame set")
    p.add_argument("--frames", required=True, help="directory of PGM frames + sequence.meta")
    p.add_argument("--out", required=True)
    p.add_argument("--border-threshold", type=float, default=0.01)
    p.add_argument("--no-border-whitening", action="store_true")
    p.add_argument("--maxval", type=int, default=65535, choices=(255, 65535))
    p.set_defaults(func=_cmd_preprocess_dsa)

    p = sub.add_parser("resample-volume", help="nearest-neighbor resample to a target spacing")
    p.add_argument("--volume", required=True)
    p.add_argument("--target-spacing", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_resample_volume)

    p = sub.add_parser("reward", help="overlap reward of a case at a pose")
    p.add_argument("--case", required=True)
    p.add_argument("--pose", help="pose record file; defaults to the case's initial pose")
    p.add_argument("--tx", type=float)
    p.add_argument("--ty", type=float)
    p.add_argument("--rz", type=float)
    p.add_argument("--ry", type=float)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_reward)

    p = sub.add_parser("register", help="search the pose that maximizes the overlap reward")
    p.add_argument("--case", required=True)
    p.add_argument("--mode", required=True, choices=("online", "pretrained", "cem", "grid"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="pose record output path")
    p.add_argument("--curve", help="training-curve CSV output path (online mode)")
    p.add_argument("--timesteps", type=int, default=10000)
    p.add_argument("--rollout-steps", type=int, default=512)
    p.add_argument("--network", default="pcm", choices=("cnn", "pcm"))
    p.add_argument("--observation", default="concat", choices=("concat", "fuse"))
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--net", help="checkpoint path (pretrained mode)")
    p.add_argument("--population", type=int, default=48)
    p.add_argument("--elite-frac", type=float, default=0.25)
    p.add_argument("--iters", type=int, default=12)
    p.add_argument("--grid-step-px", type=float, default=15.0)
    p.add_argument("--grid-step-deg", type=float, default=5.0)
    p.add_argument("--refine-levels", type=int, default=5)
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("train", help="pretrain a policy over a directory of cases")
    p.add_argument("--cases", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--curve")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timesteps", type=int, default=10000)
    p.add_argument("--rollout-steps", type=int, default=512)
    p.add_argument("--network", default="pcm", choices=("cnn", "pcm"))
    p.add_argument("--observation", default="concat", choices=("concat", "fuse"))
    p.add_argument("--resolution", type=int, default=64)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="run a sweep config over phantom or stored cases")
    p.add_argument("--config", help="sweep config file (or VESSELREG_SWEEP_CONFIG)")
    p.add_argument("--cases", help="optional directory of stored cases")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("serve", help="HTTP facade for the annotator UI")
    p.add_argument("--cases", required=True)
    p.add_argument("--port", type=int, default=8410)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _set_threads(args.threads)
    try:
        return args.func(args)
    except MissingInputError as exc:
        print(f"error: missing-file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FileNotFoundError as exc:
        print(f"error: missing-file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as exc:  # noqa: BLE001 - single line diagnostics at the boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
