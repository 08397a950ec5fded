"""Spatiotemporal prior blocks and the depth-sequence discriminator built from them.

A block splits its channels in half. One half goes through a temporal module
that convolves inter-frame differences and refines them with axial attention
along each spatial axis. The other half goes through a spatial module that mixes
height/width axial attention with asymmetric convolutions and axis-wise pooled
direction gates. The two outputs are fused by a 3×3 convolution and added back
to the input, so every block preserves its input shape.

Sequences are laid out ``B×T×C×H×W``. Spatial operations fold time into the
batch dimension.
"""

import math
from dataclasses import dataclass, replace
from typing import Literal

import torch
import torch.nn.functional as F
from torch import nn

Axis = Literal["height", "width"]
NUM_BLOCKS = 4
RANGE_EPS = 1e-7


@dataclass(frozen=True, slots=True)
class SPLBConfig:
    """Shape of a spatiotemporal prior block.

    Attributes:
        channels (int): Block width ``C``; the discriminator stem width.
        time_steps (int): Sequence length ``T``.
        compression (int): Channel reduction ``r`` inside the temporal module.
        attention_heads (int): Requested attention heads (reduced to a divisor of
            the embedding width when needed).
        pool_factor (int): Down/up-sampling factor of the local gating paths.
    """

    channels: int = 16
    time_steps: int = 3
    compression: int = 4
    attention_heads: int = 4
    pool_factor: int = 2

    def __post_init__(self) -> None:
        """Validate the block shape."""
        if self.channels <= 0 or self.channels % 2:
            raise ValueError(
                f"splb.channels must be positive and even, got {self.channels}"
            )
        if self.compression < 1 or self.channels // 2 < self.compression:
            raise ValueError(
                f"splb.channels / (2 * compression) must be >= 1, got "
                f"{self.channels} / (2 * {self.compression})"
            )
        if self.time_steps < 2:
            raise ValueError(
                f"splb.time_steps must be >= 2 to form temporal differences, "
                f"got {self.time_steps}"
            )
        if self.attention_heads < 1 or self.pool_factor < 1:
            raise ValueError("splb.attention_heads and splb.pool_factor must be >= 1")

    @property
    def half_channels(self) -> int:
        """Channels routed to each of the two branches."""
        return self.channels // 2

    @property
    def compressed_channels(self) -> int:
        """Temporal-module width after compression."""
        return self.half_channels // self.compression


def _fold(x: torch.Tensor) -> torch.Tensor:
    batch, steps = x.shape[:2]
    return x.reshape(batch * steps, *x.shape[2:])


def _unfold(x: torch.Tensor, batch: int) -> torch.Tensor:
    return x.reshape(batch, -1, *x.shape[1:])


def _upsample(x: torch.Tensor, size: torch.Size | tuple[int, int]) -> torch.Tensor:
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def _gate_conv(channels: int, kernel: tuple[int, int]) -> nn.Conv2d:
    padding = (kernel[0] // 2, kernel[1] // 2)
    return nn.Conv2d(
        channels, channels, kernel, padding=padding, padding_mode="replicate"
    )


def _conv3x3(in_channels: int, out_channels: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1)


def _check_pool_size(x: torch.Tensor, pool_factor: int) -> None:
    height, width = x.shape[-2:]
    if height < pool_factor or width < pool_factor:
        raise ValueError(
            f"Feature map {height}x{width} is smaller than pool_factor {pool_factor}"
        )


class AxialAttention(nn.Module):
    """Multi-head self-attention restricted to one spatial axis.

    Each row (``axis="width"``) or column (``axis="height"``) of an ``N×C×H×W``
    map is an independent sequence whose tokens are the ``C``-dim pixel features.
    """

    def __init__(self, channels: int, heads: int, axis: Axis) -> None:
        """Build the attention layer.

        Args:
            channels: Feature width, used as the embedding size.
            heads: Requested heads; the greatest common divisor with
                ``channels`` is used.
            axis: Axis the attention spans.
        """
        super().__init__()
        self.axis = axis
        self.heads = math.gcd(heads, channels)
        self.attention = nn.MultiheadAttention(channels, self.heads, batch_first=True)

    def _to_sequences(self, x: torch.Tensor) -> torch.Tensor:
        n, c, h, w = x.shape
        if self.axis == "width":
            return x.permute(0, 2, 3, 1).reshape(n * h, w, c)
        return x.permute(0, 3, 2, 1).reshape(n * w, h, c)

    def _from_sequences(self, seq: torch.Tensor, shape: torch.Size) -> torch.Tensor:
        n, c, h, w = shape
        if self.axis == "width":
            return seq.reshape(n, h, w, c).permute(0, 3, 1, 2)
        return seq.reshape(n, w, h, c).permute(0, 3, 2, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Attend along the configured axis; output has the input shape."""
        seq = self._to_sequences(x)
        out, _ = self.attention(seq, seq, seq, need_weights=False)
        return self._from_sequences(out, x.shape)

    def attention_weights(self, x: torch.Tensor) -> torch.Tensor:
        """Per-head attention matrices ``(N·lines)×heads×L×L`` (rows sum to 1)."""
        seq = self._to_sequences(x)
        _, weights = self.attention(
            seq, seq, seq, need_weights=True, average_attn_weights=False
        )
        return weights


class TemporalAxisBranch(nn.Module):
    """Difference features of one axis view, refined by gated axial attention."""

    def __init__(self, channels: int, config: SPLBConfig, axis: Axis) -> None:
        super().__init__()
        self.pool_factor = config.pool_factor
        local_kernel = (3, 1) if axis == "width" else (1, 3)
        refine_kernel = (1, 3) if axis == "width" else (3, 1)
        self.difference = _conv3x3(channels, channels)
        nn.init.dirac_(self.difference.weight)
        nn.init.zeros_(self.difference.bias)
        self.local = _gate_conv(channels, local_kernel)
        self.attention = AxialAttention(channels, config.attention_heads, axis)
        self.refine = _gate_conv(channels, refine_kernel)

    def temporal_differences(self, x: torch.Tensor) -> torch.Tensor:
        """``conv3x3(x[t+1]) − x[t]``, zero-padded at the end to length ``T``."""
        batch, steps = x.shape[:2]
        following = _unfold(self.difference(_fold(x[:, 1:])), batch)
        diffs = following - x[:, :-1]
        return torch.cat([diffs, torch.zeros_like(x[:, :1])], dim=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch = x.shape[0]
        diffs = _fold(self.temporal_differences(x))
        size = diffs.shape[-2:]
        pooled = F.avg_pool2d(diffs, self.pool_factor)
        local = torch.sigmoid(_upsample(self.local(pooled), size))
        multiscale = local * (diffs + self.attention(diffs))
        refined = torch.sigmoid(self.refine(multiscale))
        return _unfold(refined, batch)


class TemporalLearningModule(nn.Module):
    """Gate the temporal half of a block by refined inter-frame differences."""

    def __init__(self, config: SPLBConfig) -> None:
        super().__init__()
        self.config = config
        half, compressed = config.half_channels, config.compressed_channels
        self.compress = nn.Conv2d(half, compressed, 1)
        self.width_branch = TemporalAxisBranch(compressed, config, "width")
        self.height_branch = TemporalAxisBranch(compressed, config, "height")
        self.expand = nn.Conv2d(compressed, half, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Map ``B×T×C/2×H×W`` to the same shape.

        Raises:
            ValueError: If fewer than two frames are given or a map is smaller
                than the pool factor.
        """
        if x.ndim != 5 or x.shape[1] < 2:
            raise ValueError(
                "Temporal module needs B x T x C x H x W with T >= 2, "
                f"got {tuple(x.shape)}"
            )
        _check_pool_size(x, self.config.pool_factor)
        batch = x.shape[0]
        compressed = _unfold(self.compress(_fold(x)), batch)
        gates = self.width_branch(compressed) + self.height_branch(compressed)
        return _unfold(self.expand(_fold(gates)), batch) * x


class AxialSpatialModule(nn.Module):
    """Axial attention fused with asymmetric convolutions and direction gates.

    Frames are processed independently.
    """

    def __init__(self, config: SPLBConfig) -> None:
        super().__init__()
        channels = config.half_channels
        self.pool_factor = config.pool_factor
        heads = config.attention_heads
        self.attention_height = AxialAttention(channels, heads, "height")
        self.attention_width = AxialAttention(channels, heads, "width")
        self.local_row = _gate_conv(channels, (1, 3))
        self.local_column = _gate_conv(channels, (3, 1))
        self.direction_height = _gate_conv(channels, (3, 1))
        self.direction_width = _gate_conv(channels, (1, 3))
        self.output = _conv3x3(channels, channels)

    @staticmethod
    def axis_profiles(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Max over width (``N×C×H×1``) and max over height (``N×C×1×W``)."""
        return x.amax(dim=3, keepdim=True), x.amax(dim=2, keepdim=True)

    def integrate(self, x: torch.Tensor) -> torch.Tensor:
        """``F_local ⊙ (F_global + X)`` on folded ``N×C×H×W`` frames."""
        global_features = self.attention_width(self.attention_height(x))
        pooled = F.avg_pool2d(x, self.pool_factor)
        local = self.local_column(self.local_row(pooled))
        local = torch.sigmoid(_upsample(local, x.shape[-2:]))
        return local * (global_features + x)

    def direction_gates(self, features: torch.Tensor) -> torch.Tensor:
        """Sum of the two axis-profile gates, broadcast back to the full map."""
        row_profile, column_profile = self.axis_profiles(features)
        gate = torch.sigmoid(self.direction_height(row_profile)) + torch.sigmoid(
            self.direction_width(column_profile)
        )
        return gate.expand_as(features)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Map ``B×T×C/2×H×W`` to the same shape."""
        _check_pool_size(x, self.pool_factor)
        batch = x.shape[0]
        frames = _fold(x)
        integrated = self.integrate(frames)
        out = self.output(integrated) * self.direction_gates(integrated)
        return _unfold(out, batch)


class PlainBranch(nn.Module):
    """Per-frame 3×3 convolution standing in for an ablated module."""

    def __init__(self, channels: int) -> None:
        super().__init__()
        self.conv = _conv3x3(channels, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return _unfold(self.conv(_fold(x)), x.shape[0])


class SPLB(nn.Module):
    """Spatiotemporal prior block: temporal and spatial halves fused residually."""

    def __init__(
        self, config: SPLBConfig, use_stlm: bool = True, use_aslm: bool = True
    ) -> None:
        """Build the block.

        Args:
            config: Block shape.
            use_stlm: Use the temporal module (else a plain convolution).
            use_aslm: Use the spatial module (else a plain convolution).
        """
        super().__init__()
        self.config = config
        half = config.half_channels
        self.temporal: nn.Module = (
            TemporalLearningModule(config) if use_stlm else PlainBranch(half)
        )
        self.spatial: nn.Module = (
            AxialSpatialModule(config) if use_aslm else PlainBranch(half)
        )
        self.fuse = _conv3x3(half, half)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Map ``B×T×C×H×W`` to the same shape.

        Raises:
            ValueError: If the channel count or sequence length differs from the
                configuration.
        """
        if x.ndim != 5 or x.shape[2] != self.config.channels:
            raise ValueError(
                f"Expected B x T x {self.config.channels} x H x W, got {tuple(x.shape)}"
            )
        if x.shape[1] != self.config.time_steps:
            raise ValueError(
                f"Expected {self.config.time_steps} frames, got {x.shape[1]}"
            )
        half = self.config.half_channels
        x_temporal, x_spatial = x[:, :, :half], x[:, :, half:]
        f_temporal = self.temporal(x_temporal)
        f_spatial = self.spatial(x_spatial)
        fused = _unfold(self.fuse(_fold(f_temporal + f_spatial)), x.shape[0])
        return torch.cat([f_temporal + fused, f_spatial + fused], dim=2) + x

    @torch.no_grad()
    def reset_to_identity(self) -> None:
        """Zero the output, expansion and fusion convolutions, making ``Y = X``."""
        outputs: list[nn.Conv2d] = [self.fuse]
        for branch in (self.temporal, self.spatial):
            if isinstance(branch, TemporalLearningModule):
                outputs.append(branch.expand)
            elif isinstance(branch, AxialSpatialModule):
                outputs.append(branch.output)
            elif isinstance(branch, PlainBranch):
                outputs.append(branch.conv)
        for conv in outputs:
            conv.weight.zero_()
            if conv.bias is not None:
                conv.bias.zero_()


class SequenceDiscriminator(nn.Module):
    """Score a normalized disparity sequence; higher means "looks like day".

    Scores are raw (no squashing) for the least-squares GAN objective.
    """

    def __init__(
        self, config: SPLBConfig, use_stlm: bool = True, use_aslm: bool = True
    ) -> None:
        super().__init__()
        self.config = config
        self.use_stlm = use_stlm
        self.use_aslm = use_aslm
        widths = [config.channels * 2**index for index in range(NUM_BLOCKS)]
        self.stem = _conv3x3(1, widths[0])
        self.blocks = nn.ModuleList(
            SPLB(replace(config, channels=width), use_stlm, use_aslm)
            for width in widths
        )
        self.downsample = nn.ModuleList(
            _conv3x3(widths[i], widths[i + 1], stride=2) for i in range(NUM_BLOCKS - 1)
        )
        self.head = nn.Linear(widths[-1], 1)

    def forward(self, depths: torch.Tensor) -> torch.Tensor:
        """Score ``B×T×1×H×W`` sequences.

        Returns:
            ``B`` raw scores.

        Raises:
            ValueError: On a wrong layout, a sequence length other than the
                configured ``T``, or a resolution not divisible by 16.
        """
        if depths.ndim != 5 or depths.shape[2] != 1:
            raise ValueError(f"Expected B x T x 1 x H x W, got {tuple(depths.shape)}")
        if depths.shape[1] != self.config.time_steps:
            raise ValueError(
                f"Expected {self.config.time_steps} frames, got {depths.shape[1]}"
            )
        height, width = depths.shape[-2:]
        multiple = 2**NUM_BLOCKS
        if height % multiple or width % multiple:
            raise ValueError(
                f"Discriminator input {height}x{width} must be divisible by {multiple}"
            )
        batch = depths.shape[0]
        x = _unfold(F.leaky_relu(self.stem(_fold(depths)), 0.2), batch)
        for index, block in enumerate(self.blocks):
            x = block(x)
            if index < len(self.downsample):
                x = _unfold(F.leaky_relu(self.downsample[index](_fold(x)), 0.2), batch)
        pooled = x.mean(dim=(1, 3, 4))
        return self.head(pooled).squeeze(-1)


def normalize_disparity_sequence(disparity: torch.Tensor) -> torch.Tensor:
    """Min-max normalize every ``H×W`` map of a ``B×T×1×H×W`` sequence.

    Each map ends up in ``[0, 1]``.

    A constant map becomes all zeros.
    """
    low = disparity.amin(dim=(-2, -1), keepdim=True)
    high = disparity.amax(dim=(-2, -1), keepdim=True)
    return (disparity - low) / (high - low).clamp(min=RANGE_EPS)
