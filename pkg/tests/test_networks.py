"""Tests for the depth and pose networks, freezing and daytime pretraining."""

import pytest
import torch

from nightdepth.geometry import (
    MAX_DEPTH,
    MIN_DEPTH,
    CameraIntrinsics,
    DepthMap,
    DisparityMap,
)
from nightdepth.losses import LossWeights
from nightdepth.networks import (
    DepthNet,
    DepthNetConfig,
    FrozenModelError,
    PoseNet,
    PoseNetConfig,
    build_optimizer,
    freeze,
    is_frozen,
    parameter_checksum,
    predict_disparities,
    pretrain_daytime,
    sequence_self_supervised,
    set_learning_rate,
    target_and_sources,
)

SMALL = (4, 8, 16, 32)


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)


@pytest.fixture
def depth_net() -> DepthNet:
    return DepthNet(DepthNetConfig(encoder_widths=SMALL))


@pytest.fixture
def pose_net() -> PoseNet:
    return PoseNet(PoseNetConfig(encoder_widths=SMALL))


@pytest.mark.parametrize(
    "factory",
    [
        lambda: DepthNetConfig(encoder_widths=()),
        lambda: DepthNetConfig(encoder_widths=(8, 8)),
        lambda: DepthNetConfig(num_scales=4),
        lambda: DepthNetConfig(min_depth=10.0, max_depth=5.0),
        lambda: PoseNetConfig(encoder_widths=(0, 4)),
        lambda: PoseNetConfig(output_scale=0.0),
    ],
)
def test_config_validation(factory):
    """Empty or non-increasing widths and inverted bounds are rejected."""
    with pytest.raises(ValueError):
        factory()


def test_depth_net_output_shape_and_range(depth_net):
    """Disparity keeps the input resolution and stays in (0, 1)."""
    disparity = depth_net(torch.rand(2, 3, 32, 64))
    assert disparity.shape == (2, 1, 32, 64)
    assert float(disparity.min()) > 0.0
    assert float(disparity.max()) < 1.0


def test_depth_net_predict_returns_bounded_maps(depth_net):
    """Inference yields a disparity map and a depth map inside the configured range."""
    disparity, depth = depth_net.predict(torch.rand(1, 3, 32, 64))
    assert isinstance(disparity, DisparityMap)
    assert isinstance(depth, DepthMap)
    assert not depth.values.requires_grad
    assert float(depth.values.min()) >= MIN_DEPTH
    assert float(depth.values.max()) <= MAX_DEPTH


def test_untrained_pose_net_predicts_identity(pose_net):
    """The zero-initialized head decodes to the identity transform."""
    frame = torch.rand(2, 3, 32, 64)
    pose = pose_net(frame, frame.clone())
    assert pose.batch_size == 2
    assert bool((pose.to_vector() == 0).all())
    torch.testing.assert_close(pose.rotation, torch.eye(3).expand(2, 3, 3))


def test_frozen_model_is_immutable(depth_net):
    """A frozen network refuses training mode and optimizers but keeps predicting."""
    freeze(depth_net)
    assert is_frozen(depth_net)
    assert not any(p.requires_grad for p in depth_net.parameters())
    with pytest.raises(FrozenModelError):
        depth_net.train()
    with pytest.raises(FrozenModelError):
        build_optimizer([depth_net], lr=1e-4)

    depth_net.eval()
    checksum = parameter_checksum(depth_net)
    image = torch.rand(1, 3, 32, 64)
    first = depth_net(image)
    second = depth_net(image)
    assert torch.equal(first, second)
    assert parameter_checksum(depth_net) == checksum


def test_parameter_checksum_tracks_weights(pose_net):
    """Changing any weight changes the checksum."""
    before = parameter_checksum(pose_net)
    assert before == parameter_checksum(pose_net)
    with torch.no_grad():
        next(pose_net.parameters()).add_(1e-3)
    assert parameter_checksum(pose_net) != before


def test_set_learning_rate_updates_every_group(depth_net, pose_net):
    """All parameter groups receive the new rate."""
    optimizer = build_optimizer([depth_net, pose_net], lr=3e-5)
    optimizer.add_param_group({"params": [torch.nn.Parameter(torch.zeros(1))]})
    set_learning_rate(optimizer, 1e-4)
    assert [group["lr"] for group in optimizer.param_groups] == [1e-4, 1e-4]


@pytest.mark.parametrize(
    "frames, expected",
    [(2, (1, [0])), (3, (1, [0, 2])), (4, (2, [1, 3])), (5, (2, [1, 3]))],
)
def test_target_and_sources(frames, expected):
    """The middle frame is the target and its direct neighbors are sources."""
    assert target_and_sources(frames) == expected


def test_target_and_sources_rejects_single_frame():
    """One frame has no source."""
    with pytest.raises(ValueError):
        target_and_sources(1)


def test_sequence_self_supervised_shapes(depth_net, pose_net):
    """Disparities cover every frame and the averaged terms are finite scalars."""
    frames = torch.rand(2, 3, 3, 32, 64)
    intrinsics = CameraIntrinsics.centered(64, 32)
    terms, disparities = sequence_self_supervised(
        depth_net, pose_net, frames, intrinsics, LossWeights()
    )
    assert disparities.shape == (2, 3, 1, 32, 64)
    assert terms.total.ndim == 0
    assert bool(torch.isfinite(terms.total))
    assert terms.projection is not None
    torch.testing.assert_close(
        disparities, predict_disparities(depth_net, frames), atol=1e-6, rtol=0
    )


def test_pretrain_daytime_updates_then_freezes(depth_net, pose_net):
    """Pretraining reports one step per batch and freezes the depth net."""
    intrinsics = CameraIntrinsics.centered(64, 32)
    batches = [torch.rand(2, 3, 3, 32, 64) for _ in range(3)]
    initial = parameter_checksum(depth_net)
    seen: list[tuple[int, float]] = []
    rates: list[int] = []

    def learning_rate(step: int) -> float:
        rates.append(step)
        return 1e-3

    reports = pretrain_daytime(
        depth_net,
        pose_net,
        batches,
        intrinsics=intrinsics,
        weights=LossWeights(),
        learning_rate=learning_rate,
        use_projection=False,
        on_step=lambda step, report: seen.append((step, report.self_total)),
    )
    assert len(reports) == 3
    assert [step for step, _ in seen] == [0, 1, 2]
    assert all(report.projection is None for report in reports)
    assert rates == [0, 0, 1, 2]
    assert is_frozen(depth_net)
    assert not is_frozen(pose_net)
    assert parameter_checksum(depth_net) != initial
