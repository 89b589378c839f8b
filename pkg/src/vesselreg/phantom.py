"""Synthetic aorta phantoms with known ground-truth poses.

A phantom is a tube swept along an arch-like spline (ascending limb, arch,
descending limb) with an optional aneurysm bulge and an optional dissection
gap. Rendering inverts the registration forward model: project the vessel at
the true pose, paint contrast into a connected portion of the silhouette
(contrast flows from one vessel end, so partial filling is a geodesic prefix,
not random dropout), then add noise and optional dark streak artifacts.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .cases import RegistrationCase
from .geometry import BinaryVolume, GrayImage, Pose, project_pose


class PhantomGeometryError(ValueError):
    """Raised when the centerline or its radius envelope leaves the volume."""


@dataclass
class PhantomSpec:
    seed: int
    dims: tuple[int, int, int]
    spacing: float  # isotropic, mm/voxel
    control_points: np.ndarray  # (K, 3) voxel coordinates along the centerline
    radius_mm: np.ndarray  # (K,) tube radius at each control point
    aneurysm: tuple[float, float, float] | None = None  # (arc center 0..1, extra radius mm, arc width 0..1)
    dissection: tuple[float, float] | None = None  # (arc center 0..1, arc width 0..1) carved to 0
    # straight side stubs: (arc position 0..1, unit direction, length mm, radius scale).
    # stubs branching out of the arch plane anchor the rotation parameters:
    # a smooth arch silhouette alone tolerates small rotations compensated by
    # sub-pixel shifts, a T-junction does not.
    branches: tuple = ()

    def __post_init__(self):
        self.control_points = np.asarray(self.control_points, dtype=np.float64)
        self.radius_mm = np.asarray(self.radius_mm, dtype=np.float64)
        if (self.radius_mm <= 0).any():
            raise ValueError("radii must be > 0")
        dims = np.asarray(self.dims, dtype=np.float64)
        if ((self.control_points < 0) | (self.control_points > dims - 1)).any():
            raise PhantomGeometryError("control points must lie inside the volume")


@dataclass
class RenderSpec:
    true_pose: Pose
    vessel_intensity: float = 0.2  # a
    background_intensity: float = 0.9  # b, must exceed a
    noise_sigma: float = 0.0
    fill_fraction: float = 1.0  # portion of the silhouette reached by contrast
    streak_count: int = 0
    image_dims: tuple[int, int] | None = None  # defaults to the volume's in-plane dims
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.vessel_intensity < self.background_intensity <= 1.0):
            raise ValueError("need 0 <= vessel intensity < background intensity <= 1")
        if not (0.0 < self.fill_fraction <= 1.0):
            raise ValueError("fill_fraction must be in (0, 1]")


def _centerline_samples(spec: PhantomSpec, samples_per_unit: float = 2.0):
    """Centerline paths as (points, radii, keep) tuples: the arch, then stubs.

    The arch is a chord-length parametrized cubic spline through the control
    points; branch stubs are straight, taper toward the tip, and are clipped
    to stay inside the volume.
    """
    pts = spec.control_points
    chord = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))]
    if chord[-1] <= 0:
        raise PhantomGeometryError("degenerate centerline")
    u = chord / chord[-1]
    spline = CubicSpline(u, pts, axis=0)
    radius = CubicSpline(u, spec.radius_mm)
    n = max(8, int(chord[-1] * samples_per_unit))
    t = np.linspace(0.0, 1.0, n)
    centers = spline(t)
    radii = radius(t) / spec.spacing  # radii in voxels
    if spec.aneurysm is not None:
        c, amp, width = spec.aneurysm
        radii = radii + (amp / spec.spacing) * np.exp(-0.5 * ((t - c) / max(width, 1e-6)) ** 2)
    keep = np.ones(n, dtype=bool)
    if spec.dissection is not None:
        c, width = spec.dissection
        keep = np.abs(t - c) > width / 2.0
    paths = [(centers, radii, keep)]
    hi = np.asarray(spec.dims, dtype=np.float64) - 1.0
    for t0, direction, length_mm, radius_scale in spec.branches:
        direction = np.asarray(direction, dtype=np.float64)
        norm = np.linalg.norm(direction)
        if norm <= 0 or not 0.0 <= t0 <= 1.0:
            raise PhantomGeometryError("invalid branch")
        direction = direction / norm
        origin = spline(t0)
        span = length_mm / spec.spacing
        # shorten the stub rather than let it poke out of the volume
        for ax in range(3):
            if direction[ax] > 0:
                span = min(span, (hi[ax] - 1.0 - origin[ax]) / direction[ax])
            elif direction[ax] < 0:
                span = min(span, (origin[ax] - 1.0) / -direction[ax])
        if span <= 2.0:
            continue
        nb = max(4, int(span * samples_per_unit))
        tb = np.linspace(0.0, 1.0, nb)
        centers_b = origin + tb[:, None] * (span * direction)
        r0 = float(radius(t0)) / spec.spacing * radius_scale
        radii_b = r0 * (1.0 - 0.4 * tb)
        paths.append((centers_b, radii_b, np.ones(nb, dtype=bool)))
    return paths


def generate_phantom(spec: PhantomSpec) -> BinaryVolume:
    """Rasterize the tube as a union of capsules between consecutive centerline samples.

    Deterministic for a given spec; voxels within the (linearly interpolated)
    radius of any kept centerline segment become vessel.
    """
    paths = _centerline_samples(spec)
    dims = spec.dims
    hi = np.asarray(dims, dtype=np.float64) - 1.0
    vox = np.zeros(dims, dtype=np.uint8)
    for centers, radii, keep in paths:
        if (centers < -0.5).any() or (centers > hi + 0.5).any():
            raise PhantomGeometryError("centerline exits the volume")
        for k in range(len(centers) - 1):
            if not (keep[k] and keep[k + 1]):
                continue
            p0, p1 = centers[k], centers[k + 1]
            r0, r1 = radii[k], radii[k + 1]
            rmax = max(r0, r1)
            lo = np.maximum(np.floor(np.minimum(p0, p1) - rmax), 0).astype(int)
            hi_box = np.minimum(np.ceil(np.maximum(p0, p1) + rmax), np.asarray(dims) - 1).astype(int)
            if (lo > hi_box).any():
                continue
            gx, gy, gz = np.meshgrid(
                np.arange(lo[0], hi_box[0] + 1),
                np.arange(lo[1], hi_box[1] + 1),
                np.arange(lo[2], hi_box[2] + 1),
                indexing="ij",
            )
            pts = np.stack([gx, gy, gz], axis=-1).astype(np.float64)
            d = p1 - p0
            denom = float(d @ d)
            if denom == 0.0:
                tproj = np.zeros(pts.shape[:-1])
            else:
                tproj = np.clip(((pts - p0) @ d) / denom, 0.0, 1.0)
            closest = p0 + tproj[..., None] * d
            r_here = r0 + tproj * (r1 - r0)
            dist2 = ((pts - closest) ** 2).sum(axis=-1)
            inside = dist2 <= r_here ** 2
            vox[lo[0]:hi_box[0] + 1, lo[1]:hi_box[1] + 1, lo[2]:hi_box[2] + 1] |= inside.astype(np.uint8)
    return BinaryVolume(vox, (spec.spacing,) * 3)


def _contrast_fill(mask: np.ndarray, fraction: float) -> np.ndarray:
    """Geodesic prefix of the silhouette: BFS from one vessel end over 4-neighbors.

    Contrast flows from one end, so the seed is the lexicographically
    smallest vessel pixel (an extremity for arch-shaped silhouettes), not a
    random dropout pattern. Growth stops at ceil(fraction * area) pixels or
    when the connected component is exhausted, whichever comes first.
    """
    total = int(mask.sum())
    target = int(math.ceil(fraction * total))
    filled = np.zeros_like(mask)
    if total == 0 or target == 0:
        return filled
    seeds = np.argwhere(mask)
    start = tuple(seeds[np.lexsort((seeds[:, 1], seeds[:, 0]))[0]])
    queue = deque([start])
    filled[start] = True
    count = 1
    w, h = mask.shape
    while queue and count < target:
        x, y = queue.popleft()
        for dx, dy in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nx_, ny_ = x + dx, y + dy
            if 0 <= nx_ < w and 0 <= ny_ < h and mask[nx_, ny_] and not filled[nx_, ny_]:
                filled[nx_, ny_] = True
                count += 1
                queue.append((nx_, ny_))
                if count >= target:
                    break
    return filled


def _draw_streak(img: np.ndarray, forbidden: np.ndarray, p0, p1, value: float) -> None:
    n = int(max(abs(p1[0] - p0[0]), abs(p1[1] - p0[1]))) + 1
    xs = np.rint(np.linspace(p0[0], p1[0], n)).astype(int)
    ys = np.rint(np.linspace(p0[1], p1[1], n)).astype(int)
    ok = ~forbidden[xs, ys]
    img[xs[ok], ys[ok]] = value


def render_dsa(v: BinaryVolume, r: RenderSpec) -> GrayImage:
    """Render a synthetic DSA of the vessel at the true pose.

    Background at intensity b, contrast-filled silhouette pixels at a, plus
    the configured noise and streaks, all clamped to [0, 1]. With full fill
    and no noise the image is exactly a on the silhouette and b elsewhere.
    """
    dims = r.image_dims if r.image_dims is not None else (v.dims[0], v.dims[1])
    sil = project_pose(v, r.true_pose, dims, v.spacing[0])
    mask = sil.pixels > 0.5
    img = np.full(dims, r.background_intensity, dtype=np.float64)
    rng = np.random.default_rng(r.seed)
    if r.fill_fraction >= 1.0:
        filled = mask
    else:
        filled = _contrast_fill(mask, r.fill_fraction)
    img[filled] = r.vessel_intensity

    if r.streak_count > 0:
        w, h = dims
        for _ in range(r.streak_count):
            side = rng.integers(0, 2)
            if side == 0:  # roughly vertical streak
                p0 = (rng.uniform(0, w - 1), 0.0)
                p1 = (rng.uniform(0, w - 1), float(h - 1))
            else:
                p0 = (0.0, rng.uniform(0, h - 1))
                p1 = (float(w - 1), rng.uniform(0, h - 1))
            _draw_streak(img, mask, p0, p1, r.vessel_intensity)
    if r.noise_sigma > 0:
        img = img + rng.normal(0.0, r.noise_sigma, size=img.shape)
    return GrayImage(np.clip(img, 0.0, 1.0), v.spacing[0])


@dataclass
class CaseSampler:
    """Distributions from which make_case draws phantom and render parameters.

    The defaults are sized for desk-scale experiments on a single CPU:
    48-voxel volumes projected into 96 px images at 1 mm spacing.
    """

    volume_dim: int = 48
    volume_dim_z: int = 72  # deeper than wide so depth rotation moves the silhouette
    image_dim: int = 96
    spacing: float = 1.0
    radius_frac: tuple[float, float] = (0.055, 0.085)  # of volume_dim, in mm terms
    vessel_intensity: float = 0.2
    background_intensity: float = 0.9
    noise_sigma: float = 0.03
    fill_range: tuple[float, float] = (0.7, 1.0)
    max_streaks: int = 2
    true_t_px: float = 8.0  # |true pose| translation range
    true_r_deg: float = 5.0
    offset_t_px: float = 40.0  # initial pose offset from truth
    offset_r_deg: float = 10.0
    bounds_factor: float = 1.5  # per-case search bounds = factor * offset ranges
    p_aneurysm: float = 0.5
    p_dissection: float = 0.25
    vessel_scale: float = 1.0  # shrink the arch about the volume center

    def noiseless(self) -> "CaseSampler":
        out = CaseSampler(**vars(self))
        out.noise_sigma = 0.0
        out.fill_range = (1.0, 1.0)
        out.max_streaks = 0
        return out

    def compact(self) -> "CaseSampler":
        """Vessel well inside the volume and offsets that cannot crop it.

        At desk scale (48-voxel volumes) the default +-40 px offsets push the
        arch across the volume boundary, where partial-fill renders make the
        reward's global optimum a cropped silhouette far from truth. The
        compact preset keeps the whole search box crop-free so the reward
        argmax stays at the true pose.
        """
        out = CaseSampler(**vars(self))
        out.vessel_scale = 0.72
        out.radius_frac = (0.06, 0.095)
        out.offset_t_px = 8.0
        out.offset_r_deg = 8.0
        out.bounds_factor = 1.25
        return out


def sample_phantom_spec(seed: int, sampler: CaseSampler) -> PhantomSpec:
    rng = np.random.default_rng(seed)
    n = sampler.volume_dim
    dims = (n, n, sampler.volume_dim_z)
    # arch-like path: ascending limb, arch over the top, descending limb.
    # depth must be independent of the in-plane coordinates: if z were an
    # affine function of y along the path, a small r_z could be cancelled by
    # r_y plus a sub-pixel shift, leaving the silhouette bit-identical for
    # poses degrees apart. The descending limb therefore sits much deeper
    # than the ascending limb.
    base = np.array(
        [
            [0.30, 0.82, 0.18],
            [0.27, 0.55, 0.30],
            [0.33, 0.28, 0.45],
            [0.50, 0.16, 0.66],
            [0.66, 0.26, 0.78],
            [0.71, 0.55, 0.62],
            [0.70, 0.84, 0.50],
        ]
    )
    jitter = rng.uniform(-0.03, 0.03, size=base.shape)
    frac = np.clip(base + jitter, 0.12, 0.88)
    # in-plane shrink only: z extent drives r_y visibility and never crops
    # under in-plane translation
    frac[:, :2] = 0.5 + (frac[:, :2] - 0.5) * sampler.vessel_scale
    pts = frac * (np.asarray(dims, dtype=np.float64) - 1)
    r_lo, r_hi = sampler.radius_frac
    radii = rng.uniform(r_lo, r_hi, size=len(base)) * n * sampler.spacing
    radii = np.maximum.accumulate(radii[::-1])[::-1]  # taper: widest ascending, narrowing distally
    aneurysm = None
    if rng.random() < sampler.p_aneurysm:
        aneurysm = (
            float(rng.uniform(0.3, 0.8)),
            float(rng.uniform(0.3, 0.9) * radii.max()),
            float(rng.uniform(0.06, 0.15)),
        )
    dissection = None
    if rng.random() < sampler.p_dissection:
        dissection = (float(rng.uniform(0.35, 0.75)), float(rng.uniform(0.02, 0.05)))
    # the stub must clear the parent tube in the projection (visible T-junction)
    # while still spanning depth: its in-plane component follows the local
    # path normal so it cannot hide along the tube, and the z component stays
    # well away from zero
    chord = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))]
    path = CubicSpline(chord / chord[-1], pts, axis=0)
    branches = []
    for window in ((0.30, 0.42), (0.48, 0.58), (0.62, 0.74)):
        t0 = float(rng.uniform(*window))
        tangent = path(t0, 1)
        t_inplane = tangent[:2] / max(np.linalg.norm(tangent[:2]), 1e-9)
        normal = np.array([-t_inplane[1], t_inplane[0]])
        if rng.random() < 0.5:
            normal = -normal
        wobble = float(rng.uniform(-0.6, 0.6))
        cosw, sinw = np.cos(wobble), np.sin(wobble)
        ip_dir = np.array([cosw * normal[0] - sinw * normal[1], sinw * normal[0] + cosw * normal[1]])
        inplane = float(rng.uniform(0.45, 0.65))
        dz = float(np.sqrt(1.0 - inplane**2)) * (1.0 if rng.random() < 0.5 else -1.0)
        direction = (inplane * float(ip_dir[0]), inplane * float(ip_dir[1]), dz)
        length_mm = float(rng.uniform(0.22, 0.32)) * n * sampler.spacing
        branches.append((t0, direction, length_mm, float(rng.uniform(0.45, 0.65))))
    return PhantomSpec(
        seed=seed,
        dims=dims,
        spacing=sampler.spacing,
        control_points=pts,
        radius_mm=radii,
        aneurysm=aneurysm,
        dissection=dissection,
        branches=tuple(branches),
    )


def make_case(seed: int, sampler: CaseSampler | None = None) -> RegistrationCase:
    """Deterministic case bundle: phantom volume, rendered DSA, poses, bounds.

    The stored ground truth is the render pose; the initial pose perturbs it
    by uniform offsets within the sampler's ranges, and the per-case search
    bounds cover those offsets with margin.
    """
    sampler = sampler or CaseSampler()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0FFEE]))
    spec = sample_phantom_spec(seed, sampler)
    volume = generate_phantom(spec)
    s = sampler.spacing
    true_pose = Pose(
        t_x=float(rng.uniform(-sampler.true_t_px, sampler.true_t_px)) * s,
        t_y=float(rng.uniform(-sampler.true_t_px, sampler.true_t_px)) * s,
        r_z=float(rng.uniform(-sampler.true_r_deg, sampler.true_r_deg)),
        r_y=float(rng.uniform(-sampler.true_r_deg, sampler.true_r_deg)),
    )
    render = RenderSpec(
        true_pose=true_pose,
        vessel_intensity=sampler.vessel_intensity,
        background_intensity=sampler.background_intensity,
        noise_sigma=sampler.noise_sigma,
        fill_fraction=float(rng.uniform(*sampler.fill_range)),
        streak_count=int(rng.integers(0, sampler.max_streaks + 1)),
        image_dims=(sampler.image_dim, sampler.image_dim),
        seed=seed,
    )
    dsa = render_dsa(volume, render)
    initial = Pose(
        t_x=true_pose.t_x + float(rng.uniform(-sampler.offset_t_px, sampler.offset_t_px)) * s,
        t_y=true_pose.t_y + float(rng.uniform(-sampler.offset_t_px, sampler.offset_t_px)) * s,
        r_z=true_pose.r_z + float(rng.uniform(-sampler.offset_r_deg, sampler.offset_r_deg)),
        r_y=true_pose.r_y + float(rng.uniform(-sampler.offset_r_deg, sampler.offset_r_deg)),
    )
    bt = sampler.bounds_factor * sampler.offset_t_px
    br = sampler.bounds_factor * sampler.offset_r_deg
    return RegistrationCase(
        case_id=f"phantom-{seed:04d}",
        volume=volume,
        dsa=dsa,
        initial_pose=initial,
        true_pose=true_pose,
        pose_bounds_px=(bt, bt),
        pose_bounds_deg=(br, br),
    )
