"""Turn raw DSA frame stacks and raw segmentation volumes into registration-ready inputs.

The pipeline is: temporal minimum projection of the DSA sequence, whitening
of dark collimation borders, computation of the effective DSA pixel spacing,
resampling of the vessel volume to that spacing, and rotation initialization
from the acquisition gantry angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_propagation

from .geometry import BinaryVolume, GrayImage, Pose, resample_nearest

I_MAX = 1.0  # images are normalized to [0, 1] at load time

# real collimation edges are near zero but rarely exactly zero
DEFAULT_BORDER_THRESHOLD = 0.01 * I_MAX


class MissingMetadataError(ValueError):
    """Raised when a sequence lacks the gantry angles needed for pose init."""


@dataclass
class DsaSequence:
    """An ordered DSA frame stack plus the acquisition metadata used downstream.

    gantry is (rot_z_deg, rot_y_deg) or None when the acquisition angles are
    unknown; magnification is the estimated radiographic magnification factor.
    """

    frames: list[GrayImage]
    pixel_spacing: float
    magnification: float
    gantry: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.frames:
            raise ValueError("sequence must contain at least one frame")
        dims0 = self.frames[0].dims
        for f in self.frames:
            if f.dims != dims0:
                raise ValueError(f"frame dims differ: {f.dims} vs {dims0}")
        if self.pixel_spacing <= 0:
            raise ValueError("pixel_spacing must be > 0")
        if self.magnification <= 0:
            raise ValueError("magnification must be > 0")


def min_ip_pixels(frames) -> np.ndarray:
    """Per-pixel minimum over an iterable of 2D arrays (streaming, one frame held)."""
    acc = None
    for f in frames:
        arr = np.asarray(f, dtype=np.float64)
        acc = arr.copy() if acc is None else np.minimum(acc, arr)
    if acc is None:
        raise ValueError("empty frame iterable")
    return acc


def dsa_min_ip(seq: DsaSequence) -> GrayImage:
    """Temporal minimum intensity projection of a DSA sequence.

    Keeps the darkest (contrast-filled) value each pixel ever takes, turning
    the sequence into one 2D image that emphasizes the vessel lumen.
    """
    pix = min_ip_pixels(f.pixels for f in seq.frames)
    return GrayImage(pix, seq.frames[0].spacing)


def whiten_border(img: GrayImage, threshold: float = DEFAULT_BORDER_THRESHOLD) -> GrayImage:
    """Set dark pixels 4-connected to the image border to I_MAX.

    Removes collimation edges that would otherwise read as vessel foreground;
    interior dark pixels (the vessels themselves) are untouched. Idempotent
    and never lowers a pixel.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    dark = img.pixels <= threshold
    seed = np.zeros_like(dark)
    seed[0, :] = dark[0, :]
    seed[-1, :] = dark[-1, :]
    seed[:, 0] = dark[:, 0]
    seed[:, -1] = dark[:, -1]
    # 4-connectivity: conservative, does not leak across diagonal vessel contacts
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    flooded = binary_propagation(seed, mask=dark, structure=structure)
    out = img.pixels.copy()
    out[flooded] = I_MAX
    return GrayImage(out, img.spacing)


def dsa_spacing(pixel_spacing: float, magnification: float, mode: str = "multiply") -> float:
    """Effective mm/pixel of the DSA image.

    The default multiplies detector pixel spacing by the magnification
    factor. mode="divide" applies the reciprocal for pipelines whose
    magnification is defined detector-to-patient; reports state which
    convention was used.
    """
    if pixel_spacing <= 0 or magnification <= 0:
        raise ValueError("pixel_spacing and magnification must be > 0")
    if mode == "multiply":
        return pixel_spacing * magnification
    if mode == "divide":
        return pixel_spacing / magnification
    raise ValueError(f"unknown spacing mode {mode!r}")


def resample_to_dsa(v: BinaryVolume, s_dsa: float) -> BinaryVolume:
    """Resample a vessel volume so one voxel covers one DSA pixel.

    Target dims per axis are round(spacing * dims / s_dsa); the result is
    stamped with the exact DSA spacing on every axis (the sub-voxel residual
    of rounding the dims is absorbed).
    """
    if s_dsa <= 0:
        raise ValueError("s_dsa must be > 0")
    target = tuple(int(math.floor(s * d / s_dsa + 0.5)) for s, d in zip(v.spacing, v.dims))
    if any(d < 1 for d in target):
        raise ValueError(f"degenerate target dims {target} for s_dsa={s_dsa}")
    out = resample_nearest(v, target)
    out.spacing = (s_dsa, s_dsa, s_dsa)
    return out


def initial_pose(seq: DsaSequence) -> Pose:
    """Rotation-initialized pose from the acquisition gantry angles."""
    if seq.gantry is None:
        raise MissingMetadataError(
            "sequence has no gantry angles; supply an explicit initial pose"
        )
    rot_z, rot_y = seq.gantry
    return Pose(0.0, 0.0, rot_z, rot_y)
