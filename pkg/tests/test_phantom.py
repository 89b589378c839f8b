import math

import numpy as np
import pytest
from scipy.ndimage import label

from vesselreg.geometry import Pose, project_pose
from vesselreg.phantom import (
    CaseSampler,
    PhantomGeometryError,
    PhantomSpec,
    RenderSpec,
    _contrast_fill,
    generate_phantom,
    make_case,
    render_dsa,
    sample_phantom_spec,
)
from vesselreg.reward import overlap_reward


def _straight_spec(radius=2.0, dims=(24, 12, 12)):
    pts = np.array([[3.0, 5.5, 5.5], [20.0, 5.5, 5.5]])
    return PhantomSpec(
        seed=0, dims=dims, spacing=1.0, control_points=pts, radius_mm=np.array([radius, radius])
    )


# ---------------------------------------------------------------- geometry


def test_generate_is_deterministic():
    spec = sample_phantom_spec(3, CaseSampler())
    a = generate_phantom(spec)
    b = generate_phantom(spec)
    np.testing.assert_array_equal(a.voxels, b.voxels)


def test_straight_tube_matches_distance_rule():
    spec = _straight_spec()
    vox = generate_phantom(spec).voxels
    p0, p1 = spec.control_points
    d = p1 - p0
    for idx in np.ndindex(vox.shape):
        p = np.asarray(idx, dtype=np.float64)
        t = np.clip((p - p0) @ d / (d @ d), 0.0, 1.0)
        dist = np.linalg.norm(p - (p0 + t * d))
        assert vox[idx] == (1 if dist <= 2.0 else 0), idx


def test_control_points_must_stay_inside():
    pts = np.array([[0.0, 0.0, 0.0], [30.0, 5.0, 5.0]])  # x exceeds dims-1
    with pytest.raises(PhantomGeometryError):
        PhantomSpec(seed=0, dims=(24, 12, 12), spacing=1.0, control_points=pts, radius_mm=np.array([1.0, 1.0]))


def test_radii_must_be_positive():
    pts = np.array([[2.0, 2.0, 2.0], [8.0, 8.0, 8.0]])
    with pytest.raises(ValueError):
        PhantomSpec(seed=0, dims=(12, 12, 12), spacing=1.0, control_points=pts, radius_mm=np.array([1.0, 0.0]))


def test_aneurysm_bulges_and_dissection_carves():
    base = sample_phantom_spec(1, CaseSampler())
    plain = PhantomSpec(
        seed=base.seed,
        dims=base.dims,
        spacing=base.spacing,
        control_points=base.control_points,
        radius_mm=base.radius_mm,
        branches=base.branches,
    )
    bulged = PhantomSpec(
        seed=base.seed,
        dims=base.dims,
        spacing=base.spacing,
        control_points=base.control_points,
        radius_mm=base.radius_mm,
        branches=base.branches,
        aneurysm=(0.5, 2.0, 0.1),
    )
    carved = PhantomSpec(
        seed=base.seed,
        dims=base.dims,
        spacing=base.spacing,
        control_points=base.control_points,
        radius_mm=base.radius_mm,
        branches=base.branches,
        dissection=(0.5, 0.1),
    )
    n_plain = generate_phantom(plain).vessel_count()
    assert generate_phantom(bulged).vessel_count() > n_plain
    assert generate_phantom(carved).vessel_count() < n_plain


def test_branches_add_voxels():
    base = sample_phantom_spec(2, CaseSampler())
    bare = PhantomSpec(
        seed=base.seed,
        dims=base.dims,
        spacing=base.spacing,
        control_points=base.control_points,
        radius_mm=base.radius_mm,
        aneurysm=base.aneurysm,
        dissection=base.dissection,
    )
    assert len(base.branches) > 0
    with_stubs = generate_phantom(base)
    without = generate_phantom(bare)
    assert with_stubs.vessel_count() > without.vessel_count()
    assert (with_stubs.voxels >= without.voxels).all()


def test_sampled_phantoms_span_depth():
    # depth rotation is only observable if the vessel occupies a real z range
    for seed in range(5):
        spec = sample_phantom_spec(seed, CaseSampler().compact())
        vox = generate_phantom(spec).voxels
        zs = np.argwhere(vox)[:, 2]
        assert zs.max() - zs.min() > spec.dims[2] / 2


# ---------------------------------------------------------------- fill


def _arch_mask():
    spec = sample_phantom_spec(0, CaseSampler().compact())
    v = generate_phantom(spec)
    return project_pose(v, Pose.identity(), (96, 96), 1.0).pixels > 0.5


@pytest.mark.parametrize("fraction", [0.3, 0.5, 0.7, 0.9])
def test_contrast_fill_prefix_size_and_containment(fraction):
    mask = _arch_mask()
    filled = _contrast_fill(mask, fraction)
    assert int(filled.sum()) == math.ceil(fraction * mask.sum())
    assert (mask | filled == mask).all()  # filled subset of mask


def test_contrast_fill_is_connected():
    mask = _arch_mask()
    filled = _contrast_fill(mask, 0.6)
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    _, n_components = label(filled, structure=structure)
    assert n_components == 1


def test_contrast_fill_full_fraction_covers_component():
    mask = _arch_mask()
    filled = _contrast_fill(mask, 1.0)
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    labels, _ = label(mask, structure=structure)
    seed_label = labels[filled.argmax() // filled.shape[1], filled.argmax() % filled.shape[1]]
    np.testing.assert_array_equal(filled, labels == seed_label)


def test_contrast_fill_empty_mask():
    assert _contrast_fill(np.zeros((4, 4), dtype=bool), 0.5).sum() == 0


# ---------------------------------------------------------------- rendering


def test_render_noiseless_full_fill_is_two_level():
    spec = sample_phantom_spec(0, CaseSampler().compact())
    v = generate_phantom(spec)
    pose = Pose(2.0, -1.0, 3.0, -2.0)
    r = RenderSpec(true_pose=pose, image_dims=(96, 96))
    img = render_dsa(v, r)
    sil = project_pose(v, pose, (96, 96), 1.0).pixels > 0.5
    assert (img.pixels[sil] == 0.2).all()
    assert (img.pixels[~sil] == 0.9).all()


def test_render_closed_form_reward():
    spec = sample_phantom_spec(4, CaseSampler().compact())
    v = generate_phantom(spec)
    pose = Pose(1.0, 0.5, -2.0, 4.0)
    img = render_dsa(v, RenderSpec(true_pose=pose, image_dims=(96, 96)))
    sil = project_pose(v, pose, (96, 96), 1.0)
    rv = overlap_reward((sil.pixels > 0.5).astype(float), img)
    assert rv.value == pytest.approx(math.log(0.9 / 0.2), abs=1e-12)


def test_render_streaks_never_touch_the_vessel():
    spec = sample_phantom_spec(5, CaseSampler().compact())
    v = generate_phantom(spec)
    pose = Pose.identity()
    r = RenderSpec(true_pose=pose, streak_count=3, image_dims=(96, 96))
    img = render_dsa(v, r)
    sil = project_pose(v, pose, (96, 96), 1.0).pixels > 0.5
    assert (img.pixels[sil] == 0.2).all()
    assert (img.pixels[~sil] == 0.2).sum() > 0  # streak pixels exist off-vessel


def test_render_clamps_to_unit_interval():
    spec = sample_phantom_spec(6, CaseSampler().compact())
    v = generate_phantom(spec)
    img = render_dsa(v, RenderSpec(true_pose=Pose.identity(), noise_sigma=0.5, image_dims=(96, 96), seed=9))
    assert img.pixels.min() >= 0.0 and img.pixels.max() <= 1.0


def test_render_is_deterministic_per_seed():
    spec = sample_phantom_spec(7, CaseSampler().compact())
    v = generate_phantom(spec)
    r = RenderSpec(true_pose=Pose.identity(), noise_sigma=0.05, fill_fraction=0.8, streak_count=2, image_dims=(96, 96), seed=3)
    a = render_dsa(v, r)
    b = render_dsa(v, r)
    np.testing.assert_array_equal(a.pixels, b.pixels)


def test_render_spec_validation():
    with pytest.raises(ValueError):
        RenderSpec(true_pose=Pose.identity(), vessel_intensity=0.9, background_intensity=0.2)
    with pytest.raises(ValueError):
        RenderSpec(true_pose=Pose.identity(), fill_fraction=0.0)


def test_partial_fill_reward_prefers_truth_over_10px_shift():
    # sigma = 0.05, fill = 0.7: the true pose outscores a 10 px x-shift on
    # nearly every noise draw
    spec = sample_phantom_spec(0, CaseSampler().compact())
    v = generate_phantom(spec)
    pose = Pose.identity()
    sil_true = (project_pose(v, pose, (96, 96), 1.0).pixels > 0.5).astype(float)
    sil_shift = (project_pose(v, Pose(10.0, 0, 0, 0), (96, 96), 1.0).pixels > 0.5).astype(float)
    wins = 0
    for seed in range(100):
        r = RenderSpec(true_pose=pose, noise_sigma=0.05, fill_fraction=0.7, image_dims=(96, 96), seed=seed)
        img = render_dsa(v, r)
        if overlap_reward(sil_true, img).value > overlap_reward(sil_shift, img).value:
            wins += 1
    assert wins >= 95


# ---------------------------------------------------------------- cases


def test_make_case_deterministic():
    a = make_case(11, CaseSampler().compact())
    b = make_case(11, CaseSampler().compact())
    assert a.true_pose == b.true_pose
    assert a.initial_pose == b.initial_pose
    np.testing.assert_array_equal(a.dsa.pixels, b.dsa.pixels)
    np.testing.assert_array_equal(a.volume.voxels, b.volume.voxels)


def test_make_case_seeds_differ():
    a = make_case(0, CaseSampler().compact())
    b = make_case(1, CaseSampler().compact())
    assert a.true_pose != b.true_pose
    assert not np.array_equal(a.dsa.pixels, b.dsa.pixels)


def test_make_case_bounds_cover_initial_offset():
    for seed in range(6):
        c = make_case(seed, CaseSampler().compact())
        d = c.initial_pose.as_array() - c.true_pose.as_array()
        assert abs(d[0]) <= c.pose_bounds_px[0] * c.spacing
        assert abs(d[1]) <= c.pose_bounds_px[1] * c.spacing
        assert abs(d[2]) <= c.pose_bounds_deg[0]
        assert abs(d[3]) <= c.pose_bounds_deg[1]


def test_noiseless_sampler_renders_two_level_images():
    c = make_case(2, CaseSampler().compact().noiseless())
    values = np.unique(c.dsa.pixels)
    assert set(values) == {0.2, 0.9}
