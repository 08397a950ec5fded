"""Tests for camera geometry: intrinsics, poses, projection and warping.

Vectorized operations are compared against scalar per-pixel reference
computations on many small random instances, and every differentiable
operation is checked with ``torch.autograd.gradcheck`` in double precision.
"""

import math

import numpy as np
import pytest
import torch

from nightdepth.geometry import (
    MAX_DEPTH,
    MIN_DEPTH,
    CameraIntrinsics,
    DepthMap,
    DisparityMap,
    PoseSE3,
    backproject,
    bilinear_sample,
    disparity_to_depth,
    lift_pair_to_3d,
    reproject,
    warp_frame,
)


def _pose(*values: float) -> PoseSE3:
    return PoseSE3.from_vector(torch.tensor([values], dtype=torch.float64))


def _random_intrinsics(
    rng: np.random.Generator, height: int, width: int
) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=float(rng.uniform(3.0, 8.0)),
        fy=float(rng.uniform(3.0, 8.0)),
        cx=float(rng.uniform(0.0, width - 1)),
        cy=float(rng.uniform(0.0, height - 1)),
        width=width,
        height=height,
    )


def _yaw_pose(yaw: float, translation: tuple[float, float, float]) -> PoseSE3:
    return PoseSE3.from_vector(
        torch.tensor([[0.0, yaw, 0.0, *translation]], dtype=torch.float64)
    )


def _yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def test_centered_intrinsics_inverse_matches_matrix():
    """K⁻¹ from the closed form inverts K."""
    intrinsics = CameraIntrinsics.centered(128, 64, focal_scale=0.5)
    assert intrinsics.fx == intrinsics.fy == 64.0
    assert (intrinsics.cx, intrinsics.cy) == (63.5, 31.5)
    product = intrinsics.as_matrix() @ intrinsics.as_inverse_matrix()
    torch.testing.assert_close(product, torch.eye(3, dtype=torch.float64))
    assert CameraIntrinsics.from_dict(intrinsics.to_dict()) == intrinsics


@pytest.mark.parametrize(
    "kwargs",
    [
        {"fx": 0.0, "fy": 1.0, "cx": 1.0, "cy": 1.0, "width": 4, "height": 4},
        {"fx": 1.0, "fy": -2.0, "cx": 1.0, "cy": 1.0, "width": 4, "height": 4},
        {"fx": 1.0, "fy": 1.0, "cx": 4.0, "cy": 1.0, "width": 4, "height": 4},
        {"fx": 1.0, "fy": 1.0, "cx": 1.0, "cy": 1.0, "width": 0, "height": 4},
    ],
)
def test_intrinsics_validation(kwargs):
    """Non-positive focal lengths, sizes or an outside principal point are rejected."""
    with pytest.raises(ValueError):
        CameraIntrinsics(**kwargs)


def test_rotation_is_orthonormal():
    """Rotations built from axis-angle vectors are proper orthonormal matrices."""
    generator = torch.Generator().manual_seed(0)
    axis_angle = torch.rand(16, 3, generator=generator, dtype=torch.float64) - 0.5
    axis_angle = axis_angle + torch.sign(axis_angle) * 0.01
    pose = PoseSE3(axis_angle, torch.zeros_like(axis_angle))
    rotation = pose.rotation
    eye = torch.eye(3, dtype=torch.float64).expand(16, 3, 3)
    # The axis-angle conversion normalizes by θ + 1e-6, so agreement is ~1e-6.
    torch.testing.assert_close(
        rotation @ rotation.transpose(1, 2), eye, atol=1e-5, rtol=0
    )
    ones = torch.ones(16, dtype=torch.float64)
    torch.testing.assert_close(torch.linalg.det(rotation), ones, atol=1e-5, rtol=0)


def test_yaw_rotation_matches_closed_form():
    """A rotation about the y axis matches the textbook matrix."""
    for yaw in (-0.4, -0.05, 0.02, 0.3):
        rotation = _yaw_pose(yaw, (0.0, 0.0, 0.0)).rotation[0].numpy()
        np.testing.assert_allclose(rotation, _yaw_matrix(yaw), atol=1e-5)


def test_pose_inverse_and_compose():
    """T·T⁻¹ is the identity and compose matches the matrix product."""
    a = _pose(0.1, -0.2, 0.3, 1.0, 2.0, -0.5)
    b = _pose(-0.3, 0.05, 0.2, -0.4, 0.1, 0.9)
    torch.testing.assert_close(
        a.matrix() @ a.inverse().matrix(),
        torch.eye(4, dtype=torch.float64)[None],
        atol=1e-5,
        rtol=0,
    )
    torch.testing.assert_close(
        a.compose(b).matrix(), a.matrix() @ b.matrix(), atol=1e-5, rtol=0
    )
    vector = a.to_vector()
    torch.testing.assert_close(PoseSE3.from_vector(vector).to_vector(), vector)


def test_identity_pose_is_exact():
    """The identity transform leaves points untouched."""
    points = torch.randn(2, 3, 10, dtype=torch.float64)
    moved = PoseSE3.identity(2).transform(points)
    torch.testing.assert_close(moved, points, atol=0, rtol=0)


def test_pose_rejects_bad_layout():
    """Pose vectors must be B×6."""
    with pytest.raises(ValueError):
        PoseSE3.from_vector(torch.zeros(6))
    with pytest.raises(ValueError):
        PoseSE3(torch.zeros(2, 3), torch.zeros(3, 3))


def test_depth_map_validation():
    """Layout, positivity and bounds are enforced only on valid pixels."""
    with pytest.raises(ValueError):
        DepthMap(torch.ones(1, 4, 4))
    with pytest.raises(ValueError):
        DepthMap(-torch.ones(1, 1, 4, 4))
    with pytest.raises(ValueError):
        DepthMap(torch.full((1, 1, 2, 2), MAX_DEPTH * 2))
    values = torch.tensor([[[[0.0, 5.0]]]])
    depth = DepthMap(values, valid_mask=values > 0)
    assert depth.mask.tolist() == [[[[False, True]]]]


def test_disparity_to_depth_bounds():
    """σ = 1 gives the minimum depth and σ = 0 the maximum."""
    disparity = torch.tensor([[[[1.0, 0.0]]]], dtype=torch.float64)
    depth = disparity_to_depth(disparity)
    assert depth[0, 0, 0, 0].item() == pytest.approx(MIN_DEPTH)
    assert depth[0, 0, 0, 1].item() == pytest.approx(MAX_DEPTH)
    assert isinstance(DisparityMap(disparity).to_depth(), DepthMap)


def test_backproject_matches_scalar_reference():
    """backproject agrees with D·K⁻¹·p evaluated pixel by pixel."""
    rng = np.random.default_rng(0)
    for _ in range(100):
        height, width = int(rng.integers(1, 9)), int(rng.integers(2, 9))
        intrinsics = _random_intrinsics(rng, height, width)
        depth = rng.uniform(0.5, 50.0, size=(1, 1, height, width))
        points = backproject(DepthMap(torch.as_tensor(depth)), intrinsics).numpy()
        for v in range(height):
            for u in range(width):
                d = depth[0, 0, v, u]
                expected = (
                    d * (u - intrinsics.cx) / intrinsics.fx,
                    d * (v - intrinsics.cy) / intrinsics.fy,
                    d,
                )
                np.testing.assert_allclose(points[0, :, v, u], expected, atol=1e-9)


def test_reproject_matches_scalar_reference():
    """reproject agrees with a per-point rotate/translate/divide reference."""
    rng = np.random.default_rng(1)
    for _ in range(100):
        height, width = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        intrinsics = _random_intrinsics(rng, height, width)
        yaw = float(rng.uniform(-0.2, 0.2))
        translation = tuple(float(x) for x in rng.uniform(-0.5, 0.5, size=3))
        points = rng.uniform(-1.0, 1.0, size=(1, 3, height, width))
        points[:, 2] = rng.uniform(3.0, 10.0, size=(1, height, width))
        pose = _yaw_pose(yaw, translation)
        result = reproject(torch.as_tensor(points), pose, intrinsics)
        rotation = pose.rotation[0].numpy()
        for v in range(height):
            for u in range(width):
                x, y, z = rotation @ points[0, :, v, u] + np.asarray(translation)
                expected_u = intrinsics.fx * x / z + intrinsics.cx
                expected_v = intrinsics.fy * y / z + intrinsics.cy
                np.testing.assert_allclose(
                    result.pixels[0, v, u].numpy(), (expected_u, expected_v), atol=1e-9
                )
                np.testing.assert_allclose(
                    result.depth[0, 0, v, u].item(), z, atol=1e-12
                )
                inside = 0 <= expected_u <= width - 1 and 0 <= expected_v <= height - 1
                assert bool(result.frontal_mask[0, 0, v, u]) == inside


def test_reproject_masks_points_behind_camera():
    """Points behind the camera are excluded from the frontal mask."""
    intrinsics = CameraIntrinsics.centered(4, 4)
    points = torch.zeros(1, 3, 4, 4, dtype=torch.float64)
    points[:, 2] = -1.0
    result = reproject(points, PoseSE3.identity(), intrinsics)
    assert not result.frontal_mask.any()
    assert torch.isfinite(result.pixels).all()


def test_bilinear_sample_matches_scalar_reference():
    """bilinear_sample agrees with the four-neighbor weighted sum."""
    rng = np.random.default_rng(2)
    for _ in range(100):
        height, width = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        image = rng.uniform(size=(1, 2, height, width))
        coords = np.stack(
            [
                rng.uniform(0, width - 1, size=(3, 4)),
                rng.uniform(0, height - 1, size=(3, 4)),
            ],
            axis=-1,
        )[None]
        samples, in_bounds = bilinear_sample(
            torch.as_tensor(image), torch.as_tensor(coords)
        )
        assert in_bounds.all()
        for row in range(3):
            for col in range(4):
                u, v = coords[0, row, col]
                u0, v0 = int(math.floor(u)), int(math.floor(v))
                u1, v1 = min(u0 + 1, width - 1), min(v0 + 1, height - 1)
                wu, wv = u - u0, v - v0
                expected = (
                    (1 - wu) * (1 - wv) * image[0, :, v0, u0]
                    + wu * (1 - wv) * image[0, :, v0, u1]
                    + (1 - wu) * wv * image[0, :, v1, u0]
                    + wu * wv * image[0, :, v1, u1]
                )
                np.testing.assert_allclose(
                    samples[0, :, row, col].numpy(), expected, atol=1e-12
                )


def test_bilinear_sample_integer_coordinates_are_exact():
    """Sampling at pixel centers reproduces the image bit for bit."""
    image = torch.rand(1, 3, 5, 6, dtype=torch.float64)
    v, u = torch.meshgrid(
        torch.arange(5, dtype=torch.float64),
        torch.arange(6, dtype=torch.float64),
        indexing="ij",
    )
    samples, in_bounds = bilinear_sample(image, torch.stack([u, v], dim=-1)[None])
    assert torch.equal(samples, image)
    assert in_bounds.all()


def test_bilinear_sample_flags_out_of_bounds_and_nan():
    """Outside coordinates are clamped and flagged; NaN coordinates raise."""
    image = torch.arange(4, dtype=torch.float64).reshape(1, 1, 2, 2)
    coords = torch.tensor([[[[-3.0, 0.0], [0.5, 0.5]]]], dtype=torch.float64)
    samples, in_bounds = bilinear_sample(image, coords)
    assert in_bounds.tolist() == [[[[False, True]]]]
    assert samples[0, 0, 0, 0].item() == 0.0
    assert samples[0, 0, 0, 1].item() == pytest.approx(1.5)
    with pytest.raises(ValueError, match="NaN"):
        nan_coords = torch.full((1, 1, 1, 2), float("nan"), dtype=torch.float64)
        bilinear_sample(image, nan_coords)


def test_identity_warp_reproduces_source():
    """Warping with the identity pose returns the source image."""
    intrinsics = CameraIntrinsics.centered(8, 6)
    source = torch.rand(2, 3, 6, 8, dtype=torch.float64)
    depth = DepthMap(torch.rand(2, 1, 6, 8, dtype=torch.float64) * 5 + 1)
    warped, valid = warp_frame(source, depth, PoseSE3.identity(2), intrinsics)
    torch.testing.assert_close(warped, source, atol=1e-10, rtol=0)
    assert valid[..., 1:-1, 1:-1].all()


def test_translation_warp_shifts_fronto_parallel_plane():
    """A sideways translation shifts a fronto-parallel plane by fx·t/d pixels."""
    intrinsics = CameraIntrinsics.centered(8, 4, focal_scale=0.5)  # fx = 4
    depth = DepthMap(torch.full((1, 1, 4, 8), 2.0, dtype=torch.float64))
    source = torch.arange(8, dtype=torch.float64).expand(1, 1, 4, 8).clone()
    pose = _pose(0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
    warped, valid = warp_frame(source, depth, pose, intrinsics)
    torch.testing.assert_close(warped[..., :6], source[..., 2:], atol=1e-9, rtol=0)
    assert valid[..., :6].all()
    assert not valid[..., 6:].any()


def test_warp_rejects_resolution_mismatch():
    """Source and depth must share a resolution matching the intrinsics."""
    intrinsics = CameraIntrinsics.centered(8, 4)
    depth = DepthMap(torch.ones(1, 1, 4, 8, dtype=torch.float64))
    with pytest.raises(ValueError):
        narrow = torch.rand(1, 3, 4, 6, dtype=torch.float64)
        warp_frame(narrow, depth, PoseSE3.identity(), intrinsics)
    with pytest.raises(ValueError):
        backproject(depth, CameraIntrinsics.centered(6, 4))


def test_lift_pair_residual_vanishes_for_consistent_depths():
    """Consistent target/source depths of a plane give zero 3D residuals."""
    intrinsics = CameraIntrinsics.centered(8, 4, focal_scale=0.5)
    depth = DepthMap(torch.full((1, 1, 4, 8), 2.0, dtype=torch.float64))
    pose = _pose(0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
    lift = lift_pair_to_3d(depth, depth, pose, intrinsics)
    assert lift.valid_mask.any()
    residual = lift.residuals.norm(dim=1, keepdim=True)[lift.valid_mask]
    assert residual.max().item() <= 1e-10
    torch.testing.assert_close(
        lift.sampled_depth, lift.projected_depth, atol=1e-12, rtol=0
    )


def test_lift_pair_respects_source_mask():
    """Source pixels without valid depth invalidate the pixels that land on them."""
    intrinsics = CameraIntrinsics.centered(8, 4)
    depth_t = DepthMap(torch.full((1, 1, 4, 8), 2.0, dtype=torch.float64))
    mask = torch.ones(1, 1, 4, 8, dtype=torch.bool)
    mask[..., 0] = False
    depth_s = DepthMap(
        torch.full((1, 1, 4, 8), 2.0, dtype=torch.float64), valid_mask=mask
    )
    lift = lift_pair_to_3d(depth_t, depth_s, PoseSE3.identity(), intrinsics)
    assert not lift.valid_mask[..., 0].any()
    assert lift.valid_mask[..., 1:].all()


def test_backproject_and_reproject_gradcheck():
    """Backprojection and reprojection have correct gradients."""
    intrinsics = CameraIntrinsics.centered(5, 4)
    depth = (torch.rand(1, 1, 4, 5, dtype=torch.float64) * 3 + 2).requires_grad_()
    vector = torch.tensor([[0.05, -0.1, 0.02, 0.1, -0.05, 0.2]], dtype=torch.float64)
    vector.requires_grad_()

    def project(depth_values, pose_vector):
        points = backproject(DepthMap(depth_values), intrinsics)
        return reproject(points, PoseSE3.from_vector(pose_vector), intrinsics).pixels

    assert torch.autograd.gradcheck(project, (depth, vector), eps=1e-6, atol=1e-6)


def test_bilinear_sample_gradcheck():
    """Sampling is differentiable in both the image and fractional coordinates."""
    image = torch.rand(1, 2, 4, 5, dtype=torch.float64, requires_grad=True)
    base = torch.tensor([[0.3, 0.4], [1.6, 2.2], [3.5, 1.3]], dtype=torch.float64)
    coords = base.reshape(1, 1, 3, 2).clone().requires_grad_()
    assert torch.autograd.gradcheck(
        lambda img, c: bilinear_sample(img, c)[0], (image, coords), eps=1e-6, atol=1e-6
    )


def test_warp_and_lift_gradcheck():
    """Warping and 3D lifting are differentiable in depth, pose and image."""
    intrinsics = CameraIntrinsics.centered(6, 4)
    source = torch.rand(1, 3, 4, 6, dtype=torch.float64, requires_grad=True)
    depth_t = (torch.rand(1, 1, 4, 6, dtype=torch.float64) * 2 + 3).requires_grad_()
    depth_s = (torch.rand(1, 1, 4, 6, dtype=torch.float64) * 2 + 3).requires_grad_()
    vector = torch.tensor([[0.02, 0.03, -0.01, 0.13, 0.07, 0.05]], dtype=torch.float64)
    vector.requires_grad_()

    def warp(image, depth_values, pose_vector):
        return warp_frame(
            image, DepthMap(depth_values), PoseSE3.from_vector(pose_vector), intrinsics
        )[0]

    def lift(depth_a, depth_b, pose_vector):
        return lift_pair_to_3d(
            DepthMap(depth_a),
            DepthMap(depth_b),
            PoseSE3.from_vector(pose_vector),
            intrinsics,
        ).residuals

    assert torch.autograd.gradcheck(
        warp, (source, depth_t, vector), eps=1e-6, atol=1e-5
    )
    assert torch.autograd.gradcheck(
        lift, (depth_t, depth_s, vector), eps=1e-6, atol=1e-5
    )
