"""Registration cases: a paired (volume, DSA image) unit of work and its disk layout.

A case directory contains::

    volume.bvol          binary vessel volume, spacing already matched to the DSA
    dsa.pgm (+ .meta)    preprocessed DSA image with spacing sidecar
    case.meta            case id, initial pose, per-case pose bounds
    truth.pose           optional ground-truth pose record
    annotations.ndjson   append-only annotation log (written by the service)

The latest annotation, when present, takes precedence over truth.pose as the
case's ground truth for evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .formats import (
    pose_from_pairs,
    pose_to_pairs,
    read_bvol,
    read_keyvalue,
    read_pgm,
    read_pose,
    write_bvol,
    write_keyvalue,
    write_pgm,
    write_pose,
)
from .geometry import BinaryVolume, GrayImage, Pose

DEFAULT_BOUNDS_PX = (100.0, 100.0)
DEFAULT_BOUNDS_DEG = (30.0, 30.0)


@dataclass
class RegistrationCase:
    case_id: str
    volume: BinaryVolume
    dsa: GrayImage
    initial_pose: Pose = field(default_factory=Pose)
    true_pose: Pose | None = None
    # search half-ranges per parameter, centered on the initial pose
    pose_bounds_px: tuple[float, float] = DEFAULT_BOUNDS_PX
    pose_bounds_deg: tuple[float, float] = DEFAULT_BOUNDS_DEG

    @property
    def spacing(self) -> float:
        return self.dsa.spacing


def save_case(case: RegistrationCase, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_bvol(directory / "volume.bvol", case.volume)
    write_pgm(directory / "dsa.pgm", case.dsa)
    meta = {"case_id": case.case_id}
    meta.update({f"init_{k}": v for k, v in pose_to_pairs(case.initial_pose).items()})
    meta.update(
        {
            "bound_tx_px": repr(case.pose_bounds_px[0]),
            "bound_ty_px": repr(case.pose_bounds_px[1]),
            "bound_rz_deg": repr(case.pose_bounds_deg[0]),
            "bound_ry_deg": repr(case.pose_bounds_deg[1]),
        }
    )
    write_keyvalue(directory / "case.meta", meta)
    if case.true_pose is not None:
        write_pose(directory / "truth.pose", case.true_pose)
    return directory


def load_case(directory) -> RegistrationCase:
    directory = Path(directory)
    meta = read_keyvalue(directory / "case.meta")
    initial = pose_from_pairs({k[len("init_"):]: v for k, v in meta.items() if k.startswith("init_")})
    truth_path = directory / "truth.pose"
    truth = read_pose(truth_path) if truth_path.exists() else None
    return RegistrationCase(
        case_id=meta.get("case_id", directory.name),
        volume=read_bvol(directory / "volume.bvol"),
        dsa=read_pgm(directory / "dsa.pgm"),
        initial_pose=initial,
        true_pose=truth,
        pose_bounds_px=(float(meta["bound_tx_px"]), float(meta["bound_ty_px"])),
        pose_bounds_deg=(float(meta["bound_rz_deg"]), float(meta["bound_ry_deg"])),
    )


def list_case_dirs(root) -> list[Path]:
    root = Path(root)
    return sorted(d for d in root.iterdir() if d.is_dir() and (d / "case.meta").exists())


def annotation_log_path(directory) -> Path:
    return Path(directory) / "annotations.ndjson"


def read_annotations(directory) -> list[dict]:
    path = annotation_log_path(directory)
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def latest_annotation_pose(directory) -> Pose | None:
    records = read_annotations(directory)
    if not records:
        return None
    p = records[-1]["pose"]
    return Pose(p["tx_mm"], p["ty_mm"], p["rz_deg"], p["ry_deg"])


def effective_truth(directory) -> Pose | None:
    """Ground truth for evaluation: the latest annotation, else truth.pose."""
    annotated = latest_annotation_pose(directory)
    if annotated is not None:
        return annotated
    truth_path = Path(directory) / "truth.pose"
    return read_pose(truth_path) if truth_path.exists() else None
