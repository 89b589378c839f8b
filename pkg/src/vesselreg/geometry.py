"""Rigid 4-parameter transforms of binary vessel volumes and parallel projection to 2D.

Conventions used throughout the package:

* volumes are indexed ``voxels[x, y, z]``, images ``pixels[x, y]``
* the projection axis is z; a silhouette pixel (i, j) collapses the voxel
  column (i, j, :)
* translations are millimetres, rotations degrees, right-handed axes
* rotation order is R = Rz(r_z) @ Ry(r_y), i.e. the y-rotation is applied
  first; rotation center is the volume centroid
* translation is applied before rotation
* all resampling is nearest-neighbor so binary data stays binary;
  out-of-bounds samples read as background (0)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class NonBinaryVolumeError(ValueError):
    """Raised when voxel data contains values other than 0 and 1."""


class DimMismatchError(ValueError):
    """Raised when two images that must share dims do not."""


class SpacingMismatchError(ValueError):
    """Raised when volume spacing does not match the target image spacing."""


def wrap_angle_deg(a: float) -> float:
    """Wrap an angle in degrees into (-180, 180]."""
    r = a % 360.0
    if r > 180.0:
        r -= 360.0
    return r


@dataclass(frozen=True)
class Pose:
    """Rigid transform state: in-plane translation (mm) and two rotations (deg).

    The z translation is intentionally absent: parallel projection along z
    makes it unobservable.
    """

    t_x: float = 0.0
    t_y: float = 0.0
    r_z: float = 0.0
    r_y: float = 0.0

    def __post_init__(self):
        for name in ("t_x", "t_y", "r_z", "r_y"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"pose field {name} must be finite")
        object.__setattr__(self, "r_z", wrap_angle_deg(self.r_z))
        object.__setattr__(self, "r_y", wrap_angle_deg(self.r_y))

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    def as_array(self) -> np.ndarray:
        return np.array([self.t_x, self.t_y, self.r_z, self.r_y], dtype=np.float64)

    @staticmethod
    def from_array(vec) -> "Pose":
        t_x, t_y, r_z, r_y = (float(x) for x in vec)
        return Pose(t_x, t_y, r_z, r_y)


@dataclass
class BinaryVolume:
    """3D {0,1} voxel grid with per-axis spacing in mm/voxel, vessel = 1."""

    voxels: np.ndarray
    spacing: tuple[float, float, float]

    def __post_init__(self):
        v = np.asarray(self.voxels)
        if v.ndim != 3:
            raise ValueError(f"expected 3D voxel array, got ndim={v.ndim}")
        if v.dtype == bool:
            v = v.astype(np.uint8)
        if not np.isin(v, (0, 1)).all():
            raise NonBinaryVolumeError("voxel values must be 0 or 1")
        self.voxels = np.ascontiguousarray(v, dtype=np.uint8)
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be 3 positive floats, got {self.spacing}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape

    def vessel_count(self) -> int:
        return int(self.voxels.sum())


@dataclass
class GrayImage:
    """2D scalar image, pixels[x, y], isotropic spacing in mm/pixel."""

    pixels: np.ndarray
    spacing: float

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError(f"expected 2D pixel array, got ndim={p.ndim}")
        if not np.isfinite(p).all():
            raise ValueError("pixel values must be finite")
        if (p < 0).any():
            raise ValueError("pixel values must be >= 0")
        self.pixels = np.ascontiguousarray(p)
        self.spacing = float(self.spacing)
        if self.spacing <= 0:
            raise ValueError(f"spacing must be > 0, got {self.spacing}")

    @property
    def dims(self) -> tuple[int, int]:
        return self.pixels.shape


def rotation_matrix(r_z: float, r_y: float) -> np.ndarray:
    """Rotation Rz(r_z) @ Ry(r_y) as a 3x3 orthonormal matrix, angles in degrees."""
    if not (math.isfinite(r_z) and math.isfinite(r_y)):
        raise ValueError("rotation angles must be finite")
    cz, sz = math.cos(math.radians(r_z)), math.sin(math.radians(r_z))
    cy, sy = math.cos(math.radians(r_y)), math.sin(math.radians(r_y))
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    return rz @ ry


@lru_cache(maxsize=8)
def _index_grid_mm_key(dims: tuple[int, int, int], spacing: tuple[float, float, float]) -> np.ndarray:
    nx, ny, nz = dims
    ax = np.arange(nx, dtype=np.float64) * spacing[0]
    ay = np.arange(ny, dtype=np.float64) * spacing[1]
    az = np.arange(nz, dtype=np.float64) * spacing[2]
    g = np.stack(np.meshgrid(ax, ay, az, indexing="ij"), axis=-1)
    return g.reshape(-1, 3)


def _inverse_sample(voxels: np.ndarray, spacing: tuple[float, float, float], pose: Pose) -> np.ndarray:
    """Sample the input at the inverse-mapped position of every output voxel.

    Output voxel o (mm coords) reads the input at R^T (o - c) + c - t with c
    the centroid in mm; nearest-neighbor, out of bounds -> 0.
    """
    dims = voxels.shape
    sp = np.asarray(spacing, dtype=np.float64)
    c_mm = (np.asarray(dims, dtype=np.float64) - 1.0) / 2.0 * sp
    rot = rotation_matrix(pose.r_z, pose.r_y)
    t_mm = np.array([pose.t_x, pose.t_y, 0.0])

    pts = _index_grid_mm_key(tuple(int(d) for d in dims), tuple(float(s) for s in sp))
    # rows (o - c) @ R equal R^T (o - c)
    q = (pts - c_mm) @ rot + (c_mm - t_mm)
    idx = np.rint(q / sp).astype(np.int64)
    ok = (
        (idx[:, 0] >= 0) & (idx[:, 0] < dims[0])
        & (idx[:, 1] >= 0) & (idx[:, 1] < dims[1])
        & (idx[:, 2] >= 0) & (idx[:, 2] < dims[2])
    )
    lin = (idx[:, 0] * dims[1] + idx[:, 1]) * dims[2] + idx[:, 2]
    lin[~ok] = 0
    out = voxels.reshape(-1)[lin]
    out = np.where(ok, out, 0).astype(np.uint8)
    return out.reshape(dims)


def transform_volume(v: BinaryVolume, p: Pose) -> BinaryVolume:
    """Apply translation then rotation to a binary volume.

    Output keeps the input dims and spacing. Each output voxel samples the
    input at the inverse-mapped position (nearest neighbor), so the result
    stays binary.
    """
    return BinaryVolume(_inverse_sample(v.voxels, v.spacing, p), v.spacing)


def project(v: BinaryVolume) -> GrayImage:
    """Parallel-project a volume along z to a binary-valued (nx, ny) image.

    Pixel (i, j) is 1 iff any voxel in column (i, j, :) is 1. With vessel
    encoded as 1 this max-along-z yields the same silhouette as a minimum
    intensity projection of the dark-vessel-on-bright-background encoding.
    Output spacing is the in-plane x spacing of the volume.
    """
    pix = v.voxels.max(axis=2).astype(np.float64)
    return GrayImage(pix, v.spacing[0])


def embed_center(pixels: np.ndarray, target_dims: tuple[int, int]) -> np.ndarray:
    """Place an image in the center of a zero-filled target frame, cropping if larger.

    The source center lands on the target center; offsets use floor division
    so the operation is deterministic for odd size differences.
    """
    nx, ny = pixels.shape
    w, h = target_dims
    out = np.zeros((w, h), dtype=pixels.dtype)
    ox = (w - nx) // 2
    oy = (h - ny) // 2
    xs0, xe0 = max(ox, 0), min(ox + nx, w)
    ys0, ye0 = max(oy, 0), min(oy + ny, h)
    if xs0 < xe0 and ys0 < ye0:
        out[xs0:xe0, ys0:ye0] = pixels[xs0 - ox:xe0 - ox, ys0 - oy:ye0 - oy]
    return out


def project_pose(
    v: BinaryVolume,
    p: Pose,
    target_dims: tuple[int, int],
    target_spacing: float,
) -> GrayImage:
    """Transform, project and center a volume into a target image frame.

    Fused path over transform_volume -> project -> embed_center; pixel
    identical to that composition by construction. The volume's in-plane
    spacing must already match the target spacing (preprocessing guarantees
    this for real cases).
    """
    sx, sy, _ = v.spacing
    tol = 1e-9 * max(sx, sy, target_spacing)
    if abs(sx - target_spacing) > tol or abs(sy - target_spacing) > tol:
        raise SpacingMismatchError(
            f"volume in-plane spacing {(sx, sy)} != target spacing {target_spacing}"
        )
    sil = _inverse_sample(v.voxels, v.spacing, p).max(axis=2).astype(np.float64)
    return GrayImage(embed_center(sil, target_dims), target_spacing)


def resample_nearest(v: BinaryVolume, target_dims: tuple[int, int, int]) -> BinaryVolume:
    """Nearest-neighbor resample to the given voxel counts.

    Voxel centers align: output voxel i along an axis with n_in -> n_out
    samples the input at rint((i + 0.5) * n_in / n_out - 0.5). Spacing
    rescales by the dims ratio.
    """
    target_dims = tuple(int(d) for d in target_dims)
    if len(target_dims) != 3 or any(d < 1 for d in target_dims):
        raise ValueError(f"target dims must be >= 1 per axis, got {target_dims}")
    src_idx = []
    for n_in, n_out in zip(v.dims, target_dims):
        scale = n_in / n_out
        idx = np.rint((np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5).astype(np.int64)
        src_idx.append(np.clip(idx, 0, n_in - 1))
    out = v.voxels[np.ix_(*src_idx)]
    spacing = tuple(s * n_in / n_out for s, n_in, n_out in zip(v.spacing, v.dims, target_dims))
    return BinaryVolume(out, spacing)
