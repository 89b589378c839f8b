"""HTTP facade for the annotator UI: case listing, pose overlays, annotations.

Endpoints (all under /v1):
  GET  /v1/cases                       case summaries
  GET  /v1/cases/{id}/overlay?tx=&ty=&rz=&ry=
                                       full-resolution fused overlay as PNG;
                                       reward rides in X-Reward / X-Fg-Mean /
                                       X-Bg-Mean response headers
  POST /v1/cases/{id}/annotations      append an annotation (reward recomputed
                                       server-side); latest annotation becomes
                                       the case's ground truth for evaluation
  GET  /v1/cases/{id}/annotations      full annotation log

Case data is loaded once per process and shared read-only; annotation
appends are serialized per case.
"""

from __future__ import annotations

import io
import json
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from pydantic import BaseModel, Field

from .cases import RegistrationCase, annotation_log_path, list_case_dirs, load_case, read_annotations
from .env import fuse_planes
from .geometry import Pose, project_pose
from .reward import NoBackgroundError, NoForegroundError, overlap_reward


class PoseIn(BaseModel):
    tx_mm: float
    ty_mm: float
    rz_deg: float
    ry_deg: float

    def to_pose(self) -> Pose:
        return Pose(self.tx_mm, self.ty_mm, self.rz_deg, self.ry_deg)


class AnnotationIn(BaseModel):
    pose: PoseIn
    annotator: str = Field(default="anonymous", max_length=200)


class _CaseStore:
    """Lazily loads cases from a directory tree and caches them read-only."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self._cache: dict[str, tuple[Path, RegistrationCase]] = {}
        self._lock = threading.Lock()
        self._append_locks: dict[str, threading.Lock] = {}

    def case_dirs(self) -> list[Path]:
        return list_case_dirs(self.root)

    def get(self, case_id: str) -> tuple[Path, RegistrationCase]:
        with self._lock:
            if case_id in self._cache:
                return self._cache[case_id]
        directory = self.root / case_id
        if not (directory / "case.meta").exists():
            raise HTTPException(status_code=404, detail=f"unknown case {case_id!r}")
        case = load_case(directory)
        with self._lock:
            self._cache[case_id] = (directory, case)
            return self._cache[case_id]

    def append_lock(self, case_id: str) -> threading.Lock:
        with self._lock:
            return self._append_locks.setdefault(case_id, threading.Lock())


def _pose_bounds(case: RegistrationCase) -> tuple[np.ndarray, np.ndarray]:
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


def _check_bounds(case: RegistrationCase, pose: Pose) -> None:
    lo, hi = _pose_bounds(case)
    vec = pose.as_array()
    tol = 1e-9
    if ((vec < lo - tol) | (vec > hi + tol)).any():
        raise HTTPException(
            status_code=422,
            detail=f"pose {vec.tolist()} outside case bounds [{lo.tolist()}, {hi.tolist()}]",
        )


def _reward_or_422(case: RegistrationCase, pose: Pose):
    silhouette = project_pose(case.volume, pose, case.dsa.dims, case.spacing)
    try:
        return silhouette, overlap_reward(silhouette, case.dsa)
    except NoForegroundError as exc:
        raise HTTPException(status_code=422, detail=f"no-foreground: {exc}") from exc
    except NoBackgroundError as exc:
        raise HTTPException(status_code=422, detail=f"no-background: {exc}") from exc


def _png_bytes(planes: np.ndarray) -> bytes:
    from PIL import Image

    rgb = np.clip(np.rint(planes * 255.0), 0, 255).astype(np.uint8)
    # planes are (3, x, y); PNG rasters are (row=y, col=x, channel)
    img = Image.fromarray(rgb.transpose(2, 1, 0), mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def create_app(cases_dir) -> FastAPI:
    store = _CaseStore(Path(cases_dir))
    app = FastAPI(title="vesselreg service", version="1")

    try:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=["*"],
            allow_methods=["*"],
            allow_headers=["*"],
            expose_headers=["X-Reward", "X-Fg-Mean", "X-Bg-Mean"],
        )
    except ImportError:  # pragma: no cover - CORS is a convenience, not a contract
        pass

    @app.get("/v1/cases")
    def get_cases():
        summaries = []
        for directory in store.case_dirs():
            _, case = store.get(directory.name)
            lo, hi = _pose_bounds(case)
            summaries.append(
                {
                    "case_id": case.case_id,
                    "volume_dims": list(case.volume.dims),
                    "dsa_dims": list(case.dsa.dims),
                    "spacing_mm": case.spacing,
                    "has_truth": case.true_pose is not None,
                    "initial_pose": {
                        "tx_mm": case.initial_pose.t_x,
                        "ty_mm": case.initial_pose.t_y,
                        "rz_deg": case.initial_pose.r_z,
                        "ry_deg": case.initial_pose.r_y,
                    },
                    "pose_bounds_px": list(case.pose_bounds_px),
                    "pose_bounds_deg": list(case.pose_bounds_deg),
                    "pose_lo": lo.tolist(),
                    "pose_hi": hi.tolist(),
                    "annotation_count": len(read_annotations(directory)),
                }
            )
        return {"cases": summaries}

    @app.get("/v1/cases/{case_id}/overlay")
    def get_overlay(
        case_id: str,
        tx: float = Query(...),
        ty: float = Query(...),
        rz: float = Query(...),
        ry: float = Query(...),
    ):
        _, case = store.get(case_id)
        pose = Pose(tx, ty, rz, ry)
        _check_bounds(case, pose)
        silhouette, detail = _reward_or_422(case, pose)
        # tint strength 0.5 keeps the DSA recoverable under the mask
        # (G = dsa/2 there), so clients can re-blend the overlay locally
        planes = fuse_planes(silhouette.pixels, case.dsa.pixels, alpha=0.5)
        return Response(
            content=_png_bytes(planes),
            media_type="image/png",
            headers={
                "X-Reward": repr(detail.value),
                "X-Fg-Mean": repr(detail.fg_mean),
                "X-Bg-Mean": repr(detail.bg_mean),
            },
        )

    @app.get("/v1/cases/{case_id}/annotations")
    def get_annotations(case_id: str):
        directory, _ = store.get(case_id)
        return {"annotations": read_annotations(directory)}

    @app.post("/v1/cases/{case_id}/annotations", status_code=201)
    def post_annotation(case_id: str, body: AnnotationIn):
        directory, case = store.get(case_id)
        pose = body.pose.to_pose()
        _check_bounds(case, pose)
        _, detail = _reward_or_422(case, pose)
        record = {
            "case_id": case_id,
            "pose": {
                "tx_mm": pose.t_x,
                "ty_mm": pose.t_y,
                "rz_deg": pose.r_z,
                "ry_deg": pose.r_y,
            },
            "reward": detail.value,
            "fg_mean": detail.fg_mean,
            "bg_mean": detail.bg_mean,
            "annotator": body.annotator,
            "timestamp": time.time(),
        }
        line = json.dumps(record, sort_keys=True) + "\n"
        with store.append_lock(case_id):
            with annotation_log_path(directory).open("a") as fh:
                fh.write(line)
                fh.flush()
        return record

    return app
