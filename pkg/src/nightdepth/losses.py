"""Training objectives for self-supervised depth with adversarial day priors.

The self-supervised part scores a target frame against its reconstruction from
a neighboring source frame: an SSIM + L1 photometric map weighted by the
self-discovered mask, edge-aware disparity smoothness, the normalized depth
difference between the two views, and the 3D distance between the two lifts of
each matched pixel. The adversarial part is a least-squares GAN over depth
sequences.
"""

import warnings
from dataclasses import dataclass
from typing import Any, NamedTuple

import torch
import torch.nn.functional as F

from .geometry import (
    CameraIntrinsics,
    DepthMap,
    PoseSE3,
    lift_pair_to_3d,
    warp_frame,
)

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
# Pixels whose summed depths fall below this are dropped from the depth difference.
DEPTH_SUM_EPS = 1e-7
NORM_EPS = 1e-12
# Tolerance for values a bilinear blend can push past the unit interval.
RANGE_TOLERANCE = 1e-6


@dataclass(frozen=True, slots=True)
class LossWeights:
    """Weights of the self-supervised objective.

    Attributes:
        alpha (float): SSIM share of the photometric map (L1 gets ``1 - alpha``).
        lambda1 (float): Weight of the masked photometric term.
        lambda2 (float): Weight of the disparity smoothness term.
        lambda3 (float): Weight of the geometric consistency term.
        lambda4 (float): Weight of the 3D projection consistency term.
    """

    alpha: float = 0.85
    lambda1: float = 0.7
    lambda2: float = 0.1
    lambda3: float = 0.5
    lambda4: float = 0.5

    def __post_init__(self) -> None:
        """Reject an out-of-range alpha and negative weights."""
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if getattr(self, name) < 0:
                raise ValueError(
                    f"{name} must be non-negative, got {getattr(self, name)}"
                )


class GeometricConsistency(NamedTuple):
    """Depth disagreement between the projected target and the sampled source."""

    loss: torch.Tensor
    self_mask: torch.Tensor  # M_s = 1 - D_diff
    valid_mask: torch.Tensor
    depth_difference: torch.Tensor


class PairTerms(NamedTuple):
    """Every self-supervised term for one target/source pair, as tensors."""

    photometric_map: torch.Tensor
    photometric: torch.Tensor  # weighted by M_s over pixels with a target depth
    photometric_raw: torch.Tensor
    smoothness: torch.Tensor
    geom_consistency: torch.Tensor
    projection: torch.Tensor | None
    total: torch.Tensor
    self_mask: torch.Tensor
    valid_mask: torch.Tensor


@dataclass
class LossReport:
    """Per-term scalar losses and the masks they were computed with.

    ``self_total`` always equals the weighted combination of the parts, so the
    report can be checked against :class:`LossWeights` after the fact.
    """

    photometric: float
    smoothness: float
    geom_consistency: float
    projection: float | None
    self_total: float
    gan_generator: float | None = None
    gan_discriminator: float | None = None
    photometric_raw: float | None = None
    self_mask_mean: float | None = None
    valid_fraction: float | None = None
    self_mask: torch.Tensor | None = None
    valid_mask: torch.Tensor | None = None

    def to_record(self, step: int, **extra: Any) -> dict[str, Any]:
        """Serialize to one metrics-log record.

        Args:
            step: Global training step.
            **extra: Additional fields such as ``epoch`` or ``lr``.

        Returns:
            Flat mapping of JSON-friendly values. Masks are summarized by their
            means; a disabled projection term is omitted.
        """
        record: dict[str, Any] = {"kind": "train", "step": step, **extra}
        for name in (
            "photometric",
            "photometric_raw",
            "smoothness",
            "geom_consistency",
            "projection",
            "self_total",
            "gan_generator",
            "gan_discriminator",
            "self_mask_mean",
            "valid_fraction",
        ):
            value = getattr(self, name)
            if value is not None:
                record[name] = float(value)
        return record


def _check_unit_range(image: torch.Tensor, name: str) -> None:
    low = float(image.detach().min())
    high = float(image.detach().max())
    if low < -RANGE_TOLERANCE or high > 1.0 + RANGE_TOLERANCE:
        raise ValueError(
            f"{name} values must lie in [0, 1], got [{low:.4g}, {high:.4g}]"
        )


def masked_mean(values: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean of ``values`` over ``mask``; zero (with gradient graph) when empty."""
    weights = mask.to(values.dtype).expand_as(values)
    return (values * weights).sum() / weights.sum().clamp(min=1.0)


def mean_depth(depth: DepthMap) -> torch.Tensor:
    """Per-sample mean over valid pixels, shaped ``B×1×1×1`` for broadcasting."""
    weights = depth.mask.to(depth.values.dtype)
    total = (depth.values * weights).sum(dim=(1, 2, 3), keepdim=True)
    count = weights.sum(dim=(1, 2, 3), keepdim=True)
    return (total / count.clamp(min=1.0)).clamp(min=depth.min_depth)


def ssim(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Structural similarity from 3×3 reflection-padded local statistics."""
    x_pad = F.pad(x, (1, 1, 1, 1), mode="reflect")
    y_pad = F.pad(y, (1, 1, 1, 1), mode="reflect")
    mu_x = F.avg_pool2d(x_pad, 3, 1)
    mu_y = F.avg_pool2d(y_pad, 3, 1)
    sigma_x = F.avg_pool2d(x_pad * x_pad, 3, 1) - mu_x * mu_x
    sigma_y = F.avg_pool2d(y_pad * y_pad, 3, 1) - mu_y * mu_y
    sigma_xy = F.avg_pool2d(x_pad * y_pad, 3, 1) - mu_x * mu_y

    numerator = (2 * mu_x * mu_y + SSIM_C1) * (2 * sigma_xy + SSIM_C2)
    denominator = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (sigma_x + sigma_y + SSIM_C2)
    return numerator / denominator


def photometric_loss(
    target: torch.Tensor, warped: torch.Tensor, alpha: float = 0.85
) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-pixel ``α·(1−SSIM)/2 + (1−α)·|I_t − Î_t|`` averaged over channels.

    Args:
        target: ``B×C×H×W`` target image in ``[0, 1]``.
        warped: Reconstruction of the target, same shape.
        alpha: SSIM share of the mix.

    Returns:
        ``(map, mean)`` where ``map`` is ``B×1×H×W``.

    Raises:
        ValueError: On mismatched shapes or values outside ``[0, 1]``.
    """
    if target.shape != warped.shape:
        raise ValueError(
            f"Image shapes differ: {tuple(target.shape)} vs {tuple(warped.shape)}"
        )
    _check_unit_range(target, "target")
    _check_unit_range(warped, "warped")
    l1 = (target - warped).abs()
    if alpha == 0.0:
        per_pixel = l1
    else:
        dssim = ((1 - ssim(target, warped)) / 2).clamp(0, 1)
        per_pixel = alpha * dssim + (1 - alpha) * l1
    loss_map = per_pixel.mean(dim=1, keepdim=True)
    return loss_map, loss_map.mean()


def smoothness_loss(disparity: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
    """Edge-aware smoothness of mean-normalized disparity.

    Args:
        disparity: ``B×1×H×W`` disparity (or any positive inverse depth).
        image: ``B×C×H×W`` image whose gradients relax the penalty at edges.

    Returns:
        ``mean(|∂x d|·e^{−|∂x I|}) + mean(|∂y d|·e^{−|∂y I|})`` using forward
        differences.
    """
    mean_disp = disparity.mean(dim=(2, 3), keepdim=True)
    norm_disp = disparity / mean_disp

    grad_disp_x = (norm_disp[:, :, :, :-1] - norm_disp[:, :, :, 1:]).abs()
    grad_disp_y = (norm_disp[:, :, :-1, :] - norm_disp[:, :, 1:, :]).abs()
    grad_img_x = (image[:, :, :, :-1] - image[:, :, :, 1:]).abs().mean(1, keepdim=True)
    grad_img_y = (image[:, :, :-1, :] - image[:, :, 1:, :]).abs().mean(1, keepdim=True)

    grad_disp_x = grad_disp_x * torch.exp(-grad_img_x)
    grad_disp_y = grad_disp_y * torch.exp(-grad_img_y)
    return grad_disp_x.mean() + grad_disp_y.mean()


def geometric_consistency(
    sampled_depth: torch.Tensor,
    projected_depth: torch.Tensor,
    valid_mask: torch.Tensor,
) -> GeometricConsistency:
    """Normalized depth difference between the two views of each pixel.

    Args:
        sampled_depth: Source depth interpolated at the reprojected pixels.
        projected_depth: Depth of the transformed target points.
        valid_mask: Valid projections inside the source image.

    Returns:
        ``L_geom`` (mean of ``D_diff`` over valid pixels), the self-discovered
        mask ``M_s = 1 − D_diff`` in ``(0, 1]``, the valid mask narrowed by the
        division guard, and ``D_diff`` itself.
    """
    depth_sum = projected_depth + sampled_depth
    valid = valid_mask & (depth_sum.detach() >= DEPTH_SUM_EPS)
    safe_sum = torch.where(valid, depth_sum, torch.ones_like(depth_sum))
    depth_difference = (projected_depth - sampled_depth).abs() / safe_sum
    depth_difference = torch.where(
        valid, depth_difference, torch.zeros_like(depth_difference)
    )
    if not bool(valid.any()):
        warnings.warn(
            "degenerate batch: no valid pixels for geometric consistency",
            stacklevel=2,
        )
    return GeometricConsistency(
        loss=masked_mean(depth_difference, valid),
        self_mask=1 - depth_difference,
        valid_mask=valid,
        depth_difference=depth_difference,
    )


def projection_consistency_loss(
    residuals: torch.Tensor, valid_mask: torch.Tensor
) -> torch.Tensor:
    """Mean Euclidean length of the 3D residuals over valid pixels.

    An empty mask returns zero and warns, since such a batch carries no
    geometric signal.
    """
    if not bool(valid_mask.any()):
        warnings.warn(
            "degenerate batch: empty validity mask for projection consistency",
            stacklevel=2,
        )
        return residuals.sum() * 0.0
    squared = (residuals * residuals).sum(dim=1, keepdim=True)
    norms = torch.sqrt(squared + NORM_EPS**2) - NORM_EPS
    return masked_mean(norms, valid_mask)


def self_supervised_total(
    photometric_map: torch.Tensor,
    self_mask: torch.Tensor,
    photometric_mask: torch.Tensor,
    smoothness: torch.Tensor,
    geom_consistency: torch.Tensor,
    projection: torch.Tensor | None,
    weights: LossWeights,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Weighted self-supervised objective.

    ``λ1·mean(L_p ⊙ M_s) + λ2·L_ds + λ3·L_geom + λ4·L_proj``. ``M_s``
    multiplies the photometric map before it is averaged over
    ``photometric_mask``. A ``None`` projection term (ablated) contributes
    nothing.

    Returns:
        ``(total, masked_photometric)``.
    """
    photometric = masked_mean(photometric_map * self_mask, photometric_mask)
    total = (
        weights.lambda1 * photometric
        + weights.lambda2 * smoothness
        + weights.lambda3 * geom_consistency
    )
    if projection is not None:
        total = total + weights.lambda4 * projection
    return total, photometric


def lsgan_discriminator_loss(
    day_scores: torch.Tensor, night_scores: torch.Tensor
) -> torch.Tensor:
    """Least-squares discriminator loss: day sequences toward 1, night toward 0.

    Raises:
        ValueError: If either batch is empty.
    """
    if day_scores.numel() == 0 or night_scores.numel() == 0:
        raise ValueError(
            "Discriminator loss needs at least one day and one night score"
        )
    return 0.5 * ((day_scores - 1) ** 2).mean() + 0.5 * (night_scores**2).mean()


def lsgan_generator_loss(night_scores: torch.Tensor) -> torch.Tensor:
    """Least-squares generator loss pulling night scores toward the day label."""
    if night_scores.numel() == 0:
        raise ValueError("Generator loss needs at least one night score")
    return 0.5 * ((night_scores - 1) ** 2).mean()


def total_loss(
    self_total: torch.Tensor | float,
    generator: torch.Tensor | float,
    discriminator: torch.Tensor | float,
) -> torch.Tensor | float:
    """Plain sum of the three objectives (logging only; updates route them apart)."""
    return self_total + generator + discriminator


def pair_terms(
    target: torch.Tensor,
    source: torch.Tensor,
    depth_t: DepthMap,
    depth_s: DepthMap,
    disparity_t: torch.Tensor,
    pose: PoseSE3,
    intrinsics: CameraIntrinsics,
    weights: LossWeights,
    use_projection: bool = True,
) -> PairTerms:
    """Compute every self-supervised term for one target/source pair.

    Args:
        target: Target image ``I_t``.
        source: Source image ``I_s``.
        depth_t: Predicted target depth.
        depth_s: Predicted source depth.
        disparity_t: Target disparity fed to the smoothness term.
        pose: Predicted ``T_{t→s}``.
        intrinsics: Camera intrinsics.
        weights: Loss weights.
        use_projection: Whether the 3D projection term is active.

    The photometric term averages over every pixel with a target depth, with
    out-of-view samples clamped to the source border, so a prediction cannot
    zero it by pushing every reprojection out of the image. The 3D residuals
    are divided by the mean target depth, which keeps the projection term
    from rewarding a uniformly shrunk scene.

    Returns:
        :class:`PairTerms` holding differentiable tensors.
    """
    warped, warp_valid = warp_frame(source, depth_t, pose, intrinsics)
    photo_map, photo_raw = photometric_loss(target, warped, weights.alpha)
    lift = lift_pair_to_3d(depth_t, depth_s, pose, intrinsics)
    geometry = geometric_consistency(
        lift.sampled_depth, lift.projected_depth, lift.valid_mask & warp_valid
    )
    smooth = smoothness_loss(disparity_t, target)
    projection = (
        projection_consistency_loss(
            lift.residuals / mean_depth(depth_t), geometry.valid_mask
        )
        if use_projection
        else None
    )
    total, photometric = self_supervised_total(
        photo_map,
        geometry.self_mask,
        depth_t.mask,
        smooth,
        geometry.loss,
        projection,
        weights,
    )
    return PairTerms(
        photometric_map=photo_map,
        photometric=photometric,
        photometric_raw=photo_raw,
        smoothness=smooth,
        geom_consistency=geometry.loss,
        projection=projection,
        total=total,
        self_mask=geometry.self_mask,
        valid_mask=geometry.valid_mask,
    )


def average_pairs(pairs: list[PairTerms]) -> PairTerms:
    """Average the terms of several pairs sharing one target frame."""
    if not pairs:
        raise ValueError("At least one target/source pair is required")
    count = len(pairs)

    def mean_of(name: str) -> torch.Tensor:
        return sum(getattr(pair, name) for pair in pairs) / count

    projections = [pair.projection for pair in pairs]
    return PairTerms(
        photometric_map=mean_of("photometric_map"),
        photometric=mean_of("photometric"),
        photometric_raw=mean_of("photometric_raw"),
        smoothness=mean_of("smoothness"),
        geom_consistency=mean_of("geom_consistency"),
        projection=None if projections[0] is None else mean_of("projection"),
        total=mean_of("total"),
        self_mask=mean_of("self_mask"),
        valid_mask=torch.stack([pair.valid_mask for pair in pairs]).any(dim=0),
    )


def report_from_terms(
    terms: PairTerms,
    gan_generator: torch.Tensor | None = None,
    gan_discriminator: torch.Tensor | None = None,
) -> LossReport:
    """Detach a :class:`PairTerms` into a loggable :class:`LossReport`."""

    def scalar(value: torch.Tensor | None) -> float | None:
        return None if value is None else float(value.detach())

    return LossReport(
        photometric=float(terms.photometric.detach()),
        photometric_raw=float(terms.photometric_raw.detach()),
        smoothness=float(terms.smoothness.detach()),
        geom_consistency=float(terms.geom_consistency.detach()),
        projection=scalar(terms.projection),
        self_total=float(terms.total.detach()),
        gan_generator=scalar(gan_generator),
        gan_discriminator=scalar(gan_discriminator),
        self_mask_mean=float(masked_mean(terms.self_mask.detach(), terms.valid_mask)),
        valid_fraction=float(terms.valid_mask.float().mean()),
        self_mask=terms.self_mask.detach(),
        valid_mask=terms.valid_mask,
    )
