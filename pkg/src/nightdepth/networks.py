"""Depth and pose networks, freezing, and daytime pretraining.

Both networks are small convolutional encoders sized for desk-scale training.
The depth network is an encoder-decoder with skip connections that emits a
sigmoid disparity at input resolution; the pose network regresses a 6-vector
(axis-angle, translation) from a concatenated frame pair.
"""

import hashlib
from collections.abc import Callable, Iterable
from dataclasses import dataclass
from typing import Any

import torch
import torch.nn.functional as F
from torch import nn

from .geometry import (
    MAX_DEPTH,
    MIN_DEPTH,
    CameraIntrinsics,
    DepthMap,
    DisparityMap,
    PoseSE3,
    disparity_to_depth,
)
from .losses import (
    LossReport,
    LossWeights,
    PairTerms,
    average_pairs,
    pair_terms,
    report_from_terms,
)

ADAM_BETAS = (0.9, 0.999)


class FrozenModelError(RuntimeError):
    """Raised when a frozen model is put back into training."""


def _check_widths(widths: tuple[int, ...], section: str) -> None:
    if not widths or any(width <= 0 for width in widths):
        raise ValueError(f"{section}.encoder_widths must be positive, got {widths}")
    if any(b <= a for a, b in zip(widths, widths[1:], strict=False)):
        raise ValueError(
            f"{section}.encoder_widths must be strictly increasing, got {widths}"
        )


@dataclass(frozen=True, slots=True)
class DepthNetConfig:
    """Depth network shape and output range.

    Attributes:
        encoder_widths (tuple[int, ...]): Channels of each strided encoder stage.
        num_scales (int): Decoder outputs used by the losses (single scale).
        min_depth (float): Depth at disparity 1, in meters.
        max_depth (float): Depth as disparity approaches 0, in meters.
    """

    encoder_widths: tuple[int, ...] = (16, 32, 64, 128)
    num_scales: int = 1
    min_depth: float = MIN_DEPTH
    max_depth: float = MAX_DEPTH

    def __post_init__(self) -> None:
        """Validate widths and depth bounds."""
        _check_widths(tuple(self.encoder_widths), "depth_net")
        if self.num_scales != 1:
            raise ValueError("depth_net.num_scales must be 1 (single-scale decoding)")
        if not 0 < self.min_depth < self.max_depth:
            raise ValueError(
                f"depth_net needs 0 < min_depth < max_depth, got "
                f"{self.min_depth}, {self.max_depth}"
            )


@dataclass(frozen=True, slots=True)
class PoseNetConfig:
    """Pose network shape.

    Attributes:
        encoder_widths (tuple[int, ...]): Channels of each strided stage.
        output_scale (float): Factor applied to the raw 6-vector.
    """

    encoder_widths: tuple[int, ...] = (16, 32, 64, 128)
    output_scale: float = 0.01

    def __post_init__(self) -> None:
        """Validate widths and the output scale."""
        _check_widths(tuple(self.encoder_widths), "pose_net")
        if self.output_scale <= 0:
            raise ValueError("pose_net.output_scale must be positive")


class ConvBlock(nn.Module):
    """Reflection-padded 3×3 convolution followed by ELU."""

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1) -> None:
        super().__init__()
        self.pad = nn.ReflectionPad2d(1)
        self.conv = nn.Conv2d(in_channels, out_channels, 3, stride=stride)
        self.nonlin = nn.ELU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.nonlin(self.conv(self.pad(x)))


class _Freezable(nn.Module):
    frozen: bool = False

    def train(self, mode: bool = True) -> "_Freezable":
        """Switch modes; a frozen model may only go to evaluation mode."""
        if mode and self.frozen:
            raise FrozenModelError(
                f"{type(self).__name__} is frozen and cannot be trained"
            )
        return super().train(mode)


class DepthNet(_Freezable):
    """Encoder-decoder mapping an image to sigmoid disparity."""

    def __init__(self, config: DepthNetConfig | None = None) -> None:
        super().__init__()
        self.config = config or DepthNetConfig()
        widths = list(self.config.encoder_widths)
        self.frozen = False

        encoder = []
        in_channels = 3
        for width in widths:
            encoder.append(
                nn.Sequential(
                    ConvBlock(in_channels, width, stride=2), ConvBlock(width, width)
                )
            )
            in_channels = width
        self.encoder = nn.ModuleList(encoder)

        decoder_widths = [max(width // 2, 4) for width in widths]
        self.upconvs = nn.ModuleList()
        self.iconvs = nn.ModuleList()
        in_channels = widths[-1]
        for index in reversed(range(len(widths))):
            out_channels = decoder_widths[index]
            skip = widths[index - 1] if index > 0 else 0
            self.upconvs.append(ConvBlock(in_channels, out_channels))
            self.iconvs.append(ConvBlock(out_channels + skip, out_channels))
            in_channels = out_channels
        self.disp_head = nn.Sequential(
            nn.ReflectionPad2d(1), nn.Conv2d(decoder_widths[0], 1, 3)
        )

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        """Return ``B×1×H×W`` disparity in ``(0, 1)`` for ``B×3×H×W`` images."""
        features = []
        x = image
        for stage in self.encoder:
            x = stage(x)
            features.append(x)

        x = features[-1]
        levels = len(features)
        stages = zip(self.upconvs, self.iconvs, strict=True)
        for step, (upconv, iconv) in enumerate(stages):
            index = levels - 1 - step
            x = F.interpolate(upconv(x), scale_factor=2, mode="nearest")
            if index > 0:
                x = torch.cat([x, features[index - 1]], dim=1)
            x = iconv(x)
        return torch.sigmoid(self.disp_head(x))

    def to_depth(self, disparity: torch.Tensor) -> DepthMap:
        """Map disparity to a bounded :class:`DepthMap`."""
        return DepthMap(
            values=disparity_to_depth(
                disparity, self.config.min_depth, self.config.max_depth
            ),
            min_depth=self.config.min_depth,
            max_depth=self.config.max_depth,
        )

    @torch.no_grad()
    def predict(self, image: torch.Tensor) -> tuple[DisparityMap, DepthMap]:
        """Single-frame inference without gradients."""
        disparity = self(image)
        return DisparityMap(disparity), self.to_depth(disparity)


class PoseNet(nn.Module):
    """Regress ``T_{t→s}`` from a target/source frame pair.

    The final layer starts at zero, so an untrained network predicts the
    identity transform.
    """

    def __init__(self, config: PoseNetConfig | None = None) -> None:
        super().__init__()
        self.config = config or PoseNetConfig()
        layers: list[nn.Module] = []
        in_channels = 6
        for width in self.config.encoder_widths:
            layers += [
                nn.Conv2d(in_channels, width, 3, stride=2, padding=1),
                nn.ReLU(inplace=True),
            ]
            in_channels = width
        self.encoder = nn.Sequential(*layers)
        self.head = nn.Conv2d(in_channels, 6, 1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, frame_t: torch.Tensor, frame_s: torch.Tensor) -> PoseSE3:
        """Predict the target-to-source transform for each pair in the batch."""
        features = self.encoder(torch.cat([frame_t, frame_s], dim=1))
        vector = self.head(features).mean(dim=(2, 3)) * self.config.output_scale
        return PoseSE3.from_vector(vector)


def freeze(model: nn.Module) -> nn.Module:
    """Put ``model`` in evaluation mode and make its weights immutable."""
    model.eval()
    for parameter in model.parameters():
        parameter.requires_grad_(False)
    model.frozen = True  # type: ignore[assignment]
    return model


def is_frozen(model: nn.Module) -> bool:
    """Whether :func:`freeze` was applied."""
    return bool(getattr(model, "frozen", False))


def build_optimizer(modules: Iterable[nn.Module], lr: float) -> torch.optim.Adam:
    """Adam over the parameters of ``modules``.

    Raises:
        FrozenModelError: If any module is frozen.
    """
    params: list[nn.Parameter] = []
    for module in modules:
        if is_frozen(module):
            raise FrozenModelError(
                f"{type(module).__name__} is frozen; "
                "refusing to build an optimizer for it"
            )
        params.extend(module.parameters())
    return torch.optim.Adam(params, lr=lr, betas=ADAM_BETAS)


def set_learning_rate(optimizer: torch.optim.Optimizer, lr: float) -> None:
    """Apply ``lr`` to every parameter group."""
    for group in optimizer.param_groups:
        group["lr"] = lr


def parameter_checksum(model: nn.Module) -> str:
    """SHA-256 over every parameter and buffer, in state-dict order."""
    digest = hashlib.sha256()
    for name, tensor in model.state_dict().items():
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def target_and_sources(frames: int) -> tuple[int, list[int]]:
    """Middle frame as target, its immediate neighbors as sources."""
    if frames < 2:
        raise ValueError(f"At least two frames are needed, got {frames}")
    target = frames // 2
    sources = [index for index in (target - 1, target + 1) if 0 <= index < frames]
    return target, sources


def predict_disparities(depth_net: DepthNet, frames: torch.Tensor) -> torch.Tensor:
    """Run the depth network over every frame of a ``B×T×3×H×W`` batch."""
    batch, steps = frames.shape[:2]
    disparity = depth_net(frames.reshape(batch * steps, *frames.shape[2:]))
    return disparity.reshape(batch, steps, *disparity.shape[1:])


def sequence_self_supervised(
    depth_net: DepthNet,
    pose_net: PoseNet,
    frames: torch.Tensor,
    intrinsics: CameraIntrinsics,
    weights: LossWeights,
    use_projection: bool = True,
) -> tuple[PairTerms, torch.Tensor]:
    """Self-supervised terms of a frame window, averaged over its source frames.

    Args:
        depth_net: Depth network being trained.
        pose_net: Pose network being trained.
        frames: ``B×T×3×H×W`` images in ``[0, 1]``.
        intrinsics: Camera intrinsics.
        weights: Loss weights.
        use_projection: Whether the 3D projection term is active.

    Returns:
        ``(terms, disparities)`` where ``disparities`` is ``B×T×1×H×W`` and can be
        reused as the generator's sequence for the discriminator.
    """
    disparities = predict_disparities(depth_net, frames)
    target, sources = target_and_sources(frames.shape[1])
    depth_t = depth_net.to_depth(disparities[:, target])
    pairs = []
    for source in sources:
        pose = pose_net(frames[:, target], frames[:, source])
        pairs.append(
            pair_terms(
                frames[:, target],
                frames[:, source],
                depth_t,
                depth_net.to_depth(disparities[:, source]),
                disparities[:, target],
                pose,
                intrinsics,
                weights,
                use_projection,
            )
        )
    return average_pairs(pairs), disparities


def pretrain_daytime(
    depth_net: DepthNet,
    pose_net: PoseNet,
    batches: Iterable[torch.Tensor],
    *,
    intrinsics: CameraIntrinsics,
    weights: LossWeights,
    learning_rate: Callable[[int], float],
    use_projection: bool = True,
    on_step: Callable[[int, LossReport], Any] | None = None,
) -> list[LossReport]:
    """Train on day windows with the self-supervised objective, then freeze.

    Args:
        depth_net: Daytime depth network; frozen on return.
        pose_net: Pose network trained alongside it.
        batches: ``B×T×3×H×W`` day windows, one optimizer step each.
        intrinsics: Camera intrinsics.
        weights: Loss weights.
        learning_rate: Step-indexed learning rate.
        use_projection: Whether the 3D projection term is active.
        on_step: Optional callback receiving each step's report.

    Returns:
        One :class:`LossReport` per step.
    """
    depth_net.train()
    pose_net.train()
    optimizer = build_optimizer([depth_net, pose_net], learning_rate(0))
    reports = []
    for step, frames in enumerate(batches):
        set_learning_rate(optimizer, learning_rate(step))
        terms, _ = sequence_self_supervised(
            depth_net, pose_net, frames, intrinsics, weights, use_projection
        )
        optimizer.zero_grad(set_to_none=True)
        terms.total.backward()
        optimizer.step()
        report = report_from_terms(terms)
        reports.append(report)
        if on_step is not None:
            on_step(step, report)
    freeze(depth_net)
    return reports
