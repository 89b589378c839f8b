"""Overlap-degree reward: foreground/background intensity separation.

Given a binary vessel silhouette P and a grayscale angiogram F (vessels dark,
background bright), the reward is

    value = -ln(fg_mean / bg_mean)

with fg_mean the mean of F under P = 1 and bg_mean the mean under P = 0.
Better registration puts the mask on dark pixels and leaves the background
bright, so higher is better. The reward is invariant to positive rescaling
of F and needs no gradient; the pose search is derivative-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DimMismatchError, GrayImage

EPS_FRACTION = 1e-6  # lower intensity clamp, as a fraction of the image max


class NoForegroundError(ValueError):
    """Raised when the binary map has no 1 pixels."""


class NoBackgroundError(ValueError):
    """Raised when the binary map has no 0 pixels."""


@dataclass(frozen=True)
class RewardValue:
    value: float
    fg_mean: float
    bg_mean: float


def _pixels(img) -> np.ndarray:
    if isinstance(img, GrayImage):
        return img.pixels
    return np.asarray(img, dtype=np.float64)


def overlap_reward(p, f, literal_exclusion: bool = False) -> RewardValue:
    """Overlap-degree reward of binary map ``p`` against gray image ``f``.

    Intensities are clamped to [eps, max(f)] with eps = 1e-6 * max(f) before
    averaging, so zero-intensity vessel pixels still count as foreground.
    ``literal_exclusion=True`` instead drops exactly-zero products from both
    sums and their counts (fidelity variant, pathological on dark vessels).

    Summations use numpy's pairwise reduction, so results are bit-reproducible
    for a given shape.
    """
    pm = _pixels(p)
    fm = _pixels(f)
    if pm.shape != fm.shape:
        raise DimMismatchError(f"map dims {pm.shape} != image dims {fm.shape}")
    if not np.isin(pm, (0.0, 1.0)).all():
        raise ValueError("binary map must contain only 0 and 1")
    fg_mask = pm > 0
    n_fg = int(np.count_nonzero(fg_mask))
    n_bg = pm.size - n_fg
    if n_fg == 0:
        raise NoForegroundError("binary map has no foreground pixels")
    if n_bg == 0:
        raise NoBackgroundError("binary map has no background pixels")

    if literal_exclusion:
        pos = fm > 0
        fg_sel = fg_mask & pos
        bg_sel = ~fg_mask & pos
        if not fg_sel.any():
            raise NoForegroundError("no positive products in the foreground sum")
        if not bg_sel.any():
            raise NoBackgroundError("no positive products in the background sum")
        fg_mean = float(fm[fg_sel].sum() / np.count_nonzero(fg_sel))
        bg_mean = float(fm[bg_sel].sum() / np.count_nonzero(bg_sel))
    else:
        i_max = float(fm.max())
        if i_max <= 0:
            raise ValueError("image has no positive intensity")
        fc = np.clip(fm, EPS_FRACTION * i_max, i_max)
        fg_mean = float(fc[fg_mask].sum() / n_fg)
        bg_mean = float(fc[~fg_mask].sum() / n_bg)

    return RewardValue(value=-math.log(fg_mean / bg_mean), fg_mean=fg_mean, bg_mean=bg_mean)
