"""Differentiable pinhole-camera geometry used for view synthesis.

Tensors are batch-first throughout: images are ``B×C×H×W``, depth maps
``B×1×H×W``, camera points ``B×3×H×W`` and pixel coordinates ``B×H×W×2``
holding ``(u, v)`` in pixels (``u`` is the column index). Every operation is a
pure function of its inputs and is differentiable with respect to depth, pose
parameters and image values.
"""

from dataclasses import dataclass
from typing import Any, NamedTuple

import torch
from kornia.geometry.conversions import (
    axis_angle_to_rotation_matrix,
    rotation_matrix_to_axis_angle,
)

# Points closer than this to the camera plane (meters) are masked out.
Z_EPS = 1e-3
MIN_DEPTH = 0.1
MAX_DEPTH = 100.0


@dataclass(frozen=True, slots=True)
class CameraIntrinsics:
    """Pinhole intrinsics ``K`` together with the image size they apply to.

    Attributes:
        fx (float): Horizontal focal length in pixels.
        fy (float): Vertical focal length in pixels.
        cx (float): Principal point column in pixels.
        cy (float): Principal point row in pixels.
        width (int): Image width in pixels.
        height (int): Image height in pixels.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        """Validate focal lengths and principal point placement.

        Raises:
            ValueError: If a focal length is not positive or the principal point
                lies outside the image.
        """
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(
                f"Focal lengths must be positive, got {self.fx}, {self.fy}"
            )
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"Image size must be positive, got {self.width}x{self.height}"
            )
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"Principal point ({self.cx}, {self.cy}) outside "
                f"{self.width}x{self.height} image"
            )

    @classmethod
    def centered(
        cls, width: int, height: int, focal_scale: float = 0.5
    ) -> "CameraIntrinsics":
        """Build square-pixel intrinsics with the principal point at the center.

        Args:
            width: Image width in pixels.
            height: Image height in pixels.
            focal_scale: Focal length as a fraction of the image width.

        Returns:
            Intrinsics with ``fx = fy = focal_scale * width``.
        """
        focal = focal_scale * width
        return cls(
            fx=focal,
            fy=focal,
            cx=(width - 1) / 2.0,
            cy=(height - 1) / 2.0,
            width=width,
            height=height,
        )

    def as_matrix(
        self, dtype: torch.dtype = torch.float64, device: Any = None
    ) -> torch.Tensor:
        """Return ``K`` as a ``3×3`` tensor."""
        return torch.tensor(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=dtype,
            device=device,
        )

    def as_inverse_matrix(
        self, dtype: torch.dtype = torch.float64, device: Any = None
    ) -> torch.Tensor:
        """Return the closed-form inverse ``K⁻¹`` as a ``3×3`` tensor."""
        return torch.tensor(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ],
            dtype=dtype,
            device=device,
        )

    def to_dict(self) -> dict[str, float | int]:
        """Serialize to a plain mapping for manifests."""
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "CameraIntrinsics":
        """Rebuild intrinsics from :meth:`to_dict` output."""
        return cls(
            fx=float(payload["fx"]),
            fy=float(payload["fy"]),
            cx=float(payload["cx"]),
            cy=float(payload["cy"]),
            width=int(payload["width"]),
            height=int(payload["height"]),
        )


@dataclass(frozen=True, slots=True)
class PoseSE3:
    """Batched rigid transform ``T`` mapping target-camera points to another camera.

    The pose is stored as the 6 values a pose network emits: an axis-angle
    rotation (radians) and a translation (meters). The rotation matrix is derived
    on use, so ``from_vector(v).to_vector()`` returns ``v`` unchanged.

    Attributes:
        axis_angle (torch.Tensor): ``B×3`` rotation vectors.
        translation (torch.Tensor): ``B×3`` translations.
    """

    axis_angle: torch.Tensor
    translation: torch.Tensor

    def __post_init__(self) -> None:
        """Check the batched ``B×3`` layout of both parts."""
        if self.axis_angle.ndim != 2 or self.axis_angle.shape[-1] != 3:
            raise ValueError(
                f"axis_angle must be Bx3, got {tuple(self.axis_angle.shape)}"
            )
        if self.translation.shape != self.axis_angle.shape:
            raise ValueError(
                "translation must match axis_angle shape, got "
                f"{tuple(self.translation.shape)} vs {tuple(self.axis_angle.shape)}"
            )

    @classmethod
    def identity(
        cls, batch: int = 1, dtype: torch.dtype = torch.float64, device: Any = None
    ) -> "PoseSE3":
        """Return ``batch`` identity transforms."""
        zeros = torch.zeros(batch, 3, dtype=dtype, device=device)
        return cls(axis_angle=zeros, translation=zeros.clone())

    @classmethod
    def from_vector(cls, vector: torch.Tensor) -> "PoseSE3":
        """Decode ``B×6`` vectors laid out as axis-angle then translation."""
        if vector.ndim != 2 or vector.shape[-1] != 6:
            raise ValueError(f"Pose vectors must be Bx6, got {tuple(vector.shape)}")
        return cls(axis_angle=vector[:, :3], translation=vector[:, 3:])

    @classmethod
    def from_matrix(
        cls, rotation: torch.Tensor, translation: torch.Tensor
    ) -> "PoseSE3":
        """Build a pose from ``B×3×3`` rotations and ``B×3`` translations."""
        return cls(
            axis_angle=rotation_matrix_to_axis_angle(rotation),
            translation=translation,
        )

    def to_vector(self) -> torch.Tensor:
        """Encode as ``B×6`` (axis-angle, translation)."""
        return torch.cat([self.axis_angle, self.translation], dim=-1)

    @property
    def batch_size(self) -> int:
        """Number of transforms in the batch."""
        return int(self.axis_angle.shape[0])

    @property
    def rotation(self) -> torch.Tensor:
        """``B×3×3`` rotation matrices (Rodrigues formula)."""
        return axis_angle_to_rotation_matrix(self.axis_angle)

    def matrix(self) -> torch.Tensor:
        """Homogeneous ``B×4×4`` transforms."""
        batch = self.batch_size
        out = torch.zeros(
            batch, 4, 4, dtype=self.axis_angle.dtype, device=self.axis_angle.device
        )
        out[:, :3, :3] = self.rotation
        out[:, :3, 3] = self.translation
        out[:, 3, 3] = 1.0
        return out

    def transform(self, points: torch.Tensor) -> torch.Tensor:
        """Apply ``R·p + t`` to ``B×3×N`` points."""
        return self.rotation @ points + self.translation.unsqueeze(-1)

    def inverse(self) -> "PoseSE3":
        """Return ``T⁻¹`` with rotation ``Rᵀ`` and translation ``-Rᵀ·t``."""
        rotation_t = self.rotation.transpose(1, 2)
        translation = -(rotation_t @ self.translation.unsqueeze(-1)).squeeze(-1)
        return PoseSE3(axis_angle=-self.axis_angle, translation=translation)

    def compose(self, other: "PoseSE3") -> "PoseSE3":
        """Return ``self ∘ other`` (apply ``other`` first)."""
        rotation = self.rotation @ other.rotation
        translation = (
            self.rotation @ other.translation.unsqueeze(-1)
        ).squeeze(-1) + self.translation
        return PoseSE3.from_matrix(rotation, translation)

    def to(self, dtype: torch.dtype) -> "PoseSE3":
        """Cast both parts to ``dtype``."""
        return PoseSE3(self.axis_angle.to(dtype), self.translation.to(dtype))


@dataclass(frozen=True, slots=True)
class DepthMap:
    """Dense metric depth with an optional validity mask.

    Attributes:
        values (torch.Tensor): ``B×1×H×W`` depth in meters.
        valid_mask (torch.Tensor | None): ``B×1×H×W`` boolean mask, ``None``
            meaning every pixel is valid.
        min_depth (float): Lower bound enforced on valid pixels.
        max_depth (float): Upper bound enforced on valid pixels.
    """

    values: torch.Tensor
    valid_mask: torch.Tensor | None = None
    min_depth: float = MIN_DEPTH
    max_depth: float = MAX_DEPTH

    def __post_init__(self) -> None:
        """Enforce shape, positivity and the configured depth bounds.

        Raises:
            ValueError: On a non ``B×1×H×W`` layout, a mask of another shape, or
                valid pixels outside ``[min_depth, max_depth]``.
        """
        if self.values.ndim != 4 or self.values.shape[1] != 1:
            raise ValueError(f"Depth must be Bx1xHxW, got {tuple(self.values.shape)}")
        if self.valid_mask is not None and self.valid_mask.shape != self.values.shape:
            raise ValueError(
                f"Mask shape {tuple(self.valid_mask.shape)} does not match depth "
                f"shape {tuple(self.values.shape)}"
            )
        values = self.values.detach()
        if self.valid_mask is not None:
            values = values[self.valid_mask]
        if values.numel() == 0:
            return
        if bool((values <= 0).any()):
            raise ValueError("Depth must be positive on valid pixels")
        if bool((values < self.min_depth).any()) or bool(
            (values > self.max_depth).any()
        ):
            raise ValueError(
                f"Depth outside [{self.min_depth}, {self.max_depth}] m on valid pixels"
            )

    @property
    def height(self) -> int:
        """Image height in pixels."""
        return int(self.values.shape[-2])

    @property
    def width(self) -> int:
        """Image width in pixels."""
        return int(self.values.shape[-1])

    @property
    def mask(self) -> torch.Tensor:
        """Boolean validity mask, all ``True`` when none was given."""
        if self.valid_mask is None:
            return torch.ones_like(self.values, dtype=torch.bool)
        return self.valid_mask


@dataclass(frozen=True, slots=True)
class DisparityMap:
    """Sigmoid disparity in ``(0, 1)`` emitted by a depth network.

    Attributes:
        values (torch.Tensor): ``B×1×H×W`` bounded inverse depth.
    """

    values: torch.Tensor

    def to_depth(
        self, min_depth: float = MIN_DEPTH, max_depth: float = MAX_DEPTH
    ) -> DepthMap:
        """Map disparity to depth with :func:`disparity_to_depth`."""
        return DepthMap(
            values=disparity_to_depth(self.values, min_depth, max_depth),
            min_depth=min_depth,
            max_depth=max_depth,
        )


class Reprojection(NamedTuple):
    """Result of projecting target-frame points into a source camera."""

    pixels: torch.Tensor  # B×H×W×2
    frontal_mask: torch.Tensor  # B×1×H×W, bool
    depth: torch.Tensor  # B×1×H×W, z in the source camera
    points: torch.Tensor  # B×3×H×W, transformed points


class PairLift(NamedTuple):
    """Both 3D lifts of a target/source pair in the source camera frame."""

    residuals: torch.Tensor  # B×3×H×W
    valid_mask: torch.Tensor  # B×1×H×W, bool
    sampled_depth: torch.Tensor  # source depth interpolated at p̂_s
    projected_depth: torch.Tensor  # z of the transformed target points
    pixels: torch.Tensor  # B×H×W×2


def disparity_to_depth(
    disparity: torch.Tensor, min_depth: float = MIN_DEPTH, max_depth: float = MAX_DEPTH
) -> torch.Tensor:
    """Convert sigmoid disparity to depth bounded by ``[min_depth, max_depth]``.

    ``σ = 1`` maps to ``min_depth`` and ``σ → 0`` to ``max_depth``. The clamp only
    acts when float rounding lands a hair outside the bounds.
    """
    min_disp = 1.0 / max_depth
    max_disp = 1.0 / min_depth
    depth = 1.0 / ((max_disp - min_disp) * disparity + min_disp)
    return depth.clamp(min_depth, max_depth)


def pixel_grid(
    height: int, width: int, dtype: torch.dtype = torch.float64, device: Any = None
) -> torch.Tensor:
    """Homogeneous pixel coordinates ``(u, v, 1)`` laid out ``H×W×3``."""
    v, u = torch.meshgrid(
        torch.arange(height, dtype=dtype, device=device),
        torch.arange(width, dtype=dtype, device=device),
        indexing="ij",
    )
    return torch.stack([u, v, torch.ones_like(u)], dim=-1)


def _check_size(height: int, width: int, intrinsics: CameraIntrinsics) -> None:
    if (height, width) != (intrinsics.height, intrinsics.width):
        raise ValueError(
            f"Shape {height}x{width} does not match intrinsics "
            f"{intrinsics.height}x{intrinsics.width}"
        )


def backproject(depth: DepthMap, intrinsics: CameraIntrinsics) -> torch.Tensor:
    """Lift every pixel to a 3D camera point ``D(p)·K⁻¹·p``.

    Args:
        depth: Target depth map.
        intrinsics: Camera intrinsics matching the depth resolution.

    Returns:
        ``B×3×H×W`` points in meters.

    Raises:
        ValueError: If the depth resolution differs from the intrinsics.
    """
    values = depth.values
    batch, _, height, width = values.shape
    _check_size(height, width, intrinsics)
    grid = pixel_grid(height, width, values.dtype, values.device)
    rays = intrinsics.as_inverse_matrix(values.dtype, values.device) @ grid.reshape(
        -1, 3
    ).T
    points = values.reshape(batch, 1, -1) * rays.unsqueeze(0)
    return points.reshape(batch, 3, height, width)


def reproject(
    points: torch.Tensor,
    pose: PoseSE3,
    intrinsics: CameraIntrinsics,
    z_eps: float = Z_EPS,
) -> Reprojection:
    """Transform camera points by ``pose`` and project them through ``K``.

    Args:
        points: ``B×3×H×W`` target-frame points from :func:`backproject`.
        pose: Target-to-source transform.
        intrinsics: Camera intrinsics.
        z_eps: Minimum transformed depth kept by the frontal mask.

    Returns:
        Source pixel coordinates, the frontal mask (false behind the camera or
        outside the image), the transformed depth and the transformed points.
    """
    batch, _, height, width = points.shape
    _check_size(height, width, intrinsics)
    pose = pose.to(points.dtype)
    moved = pose.transform(points.reshape(batch, 3, -1))
    z = moved[:, 2]
    safe_z = z.clamp(min=z_eps)
    u = intrinsics.fx * (moved[:, 0] / safe_z) + intrinsics.cx
    v = intrinsics.fy * (moved[:, 1] / safe_z) + intrinsics.cy
    pixels = torch.stack([u, v], dim=-1).reshape(batch, height, width, 2)
    frontal = (
        (z > z_eps) & (u >= 0) & (u <= width - 1) & (v >= 0) & (v <= height - 1)
    ).reshape(batch, 1, height, width)
    return Reprojection(
        pixels=pixels,
        frontal_mask=frontal,
        depth=z.reshape(batch, 1, height, width),
        points=moved.reshape(batch, 3, height, width),
    )


def bilinear_sample(
    image: torch.Tensor, coords: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Sample ``image`` at fractional pixel ``coords`` with bilinear weights.

    Out-of-bounds coordinates are clamped to the border and reported as
    invalid. Integer coordinates reproduce pixel values exactly.

    Args:
        image: ``B×C×H×W`` values.
        coords: ``B×Ho×Wo×2`` pixel coordinates ``(u, v)``.

    Returns:
        ``(samples, in_bounds)`` with shapes ``B×C×Ho×Wo`` and ``B×1×Ho×Wo``.

    Raises:
        ValueError: If ``coords`` contains NaN.
    """
    if bool(torch.isnan(coords).any()):
        raise ValueError("NaN sampling coordinates (upstream geometry produced NaN)")
    batch, channels, height, width = image.shape
    out_h, out_w = coords.shape[1], coords.shape[2]
    u, v = coords[..., 0], coords[..., 1]
    in_bounds = (u >= 0) & (u <= width - 1) & (v >= 0) & (v <= height - 1)

    u = u.clamp(0, width - 1)
    v = v.clamp(0, height - 1)
    u0 = u.detach().floor()
    v0 = v.detach().floor()
    wu = (u - u0).unsqueeze(1)
    wv = (v - v0).unsqueeze(1)
    u0i, v0i = u0.long(), v0.long()
    u1i = (u0i + 1).clamp(max=width - 1)
    v1i = (v0i + 1).clamp(max=height - 1)

    flat = image.reshape(batch, channels, height * width)

    def gather(rows: torch.Tensor, cols: torch.Tensor) -> torch.Tensor:
        index = (rows * width + cols).reshape(batch, 1, -1).expand(-1, channels, -1)
        return flat.gather(2, index).reshape(batch, channels, out_h, out_w)

    samples = (
        (1 - wu) * (1 - wv) * gather(v0i, u0i)
        + wu * (1 - wv) * gather(v0i, u1i)
        + (1 - wu) * wv * gather(v1i, u0i)
        + wu * wv * gather(v1i, u1i)
    )
    return samples, in_bounds.unsqueeze(1)


def warp_frame(
    source: torch.Tensor,
    depth_t: DepthMap,
    pose: PoseSE3,
    intrinsics: CameraIntrinsics,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Synthesize the target view from ``source`` (inverse warping).

    Args:
        source: ``B×C×H×W`` source image ``I_s``.
        depth_t: Target depth ``D_t``.
        pose: Target-to-source transform ``T_{t→s}``.
        intrinsics: Camera intrinsics.

    Returns:
        ``(warped, valid)``: the reconstruction ``Î_t`` and a ``B×1×H×W`` mask of
        pixels that landed in front of the source camera and inside its image.
    """
    if source.shape[-2:] != depth_t.values.shape[-2:]:
        raise ValueError(
            f"Source image {tuple(source.shape[-2:])} and depth "
            f"{tuple(depth_t.values.shape[-2:])} resolutions differ"
        )
    projection = reproject(backproject(depth_t, intrinsics), pose, intrinsics)
    warped, in_bounds = bilinear_sample(source, projection.pixels)
    return warped, projection.frontal_mask & in_bounds & depth_t.mask


def lift_pair_to_3d(
    depth_t: DepthMap,
    depth_s: DepthMap,
    pose: PoseSE3,
    intrinsics: CameraIntrinsics,
) -> PairLift:
    """Lift a target pixel and its interpolated source match into the source frame.

    The residual is ``D_s(p̂_s)·K⁻¹·p̂_s − T_{t→s}·D_t(p_t)·K⁻¹·p_t`` where the
    source depth is bilinearly interpolated at the reprojected pixel ``p̂_s``.

    Args:
        depth_t: Target depth ``D_t``.
        depth_s: Source depth ``D_s``.
        pose: Target-to-source transform.
        intrinsics: Camera intrinsics.

    Returns:
        :class:`PairLift` with residuals, the validity mask, the sampled source
        depth and the projected target depth (both reused by the geometric
        consistency loss).
    """
    projection = reproject(backproject(depth_t, intrinsics), pose, intrinsics)
    sampled, in_bounds = bilinear_sample(depth_s.values, projection.pixels)
    valid = projection.frontal_mask & in_bounds & depth_t.mask
    if depth_s.valid_mask is not None:
        source_mask, _ = bilinear_sample(
            depth_s.valid_mask.to(sampled.dtype), projection.pixels
        )
        valid = valid & (source_mask >= 1.0)

    batch, _, height, width = sampled.shape
    u = projection.pixels[..., 0].reshape(batch, -1)
    v = projection.pixels[..., 1].reshape(batch, -1)
    homogeneous = torch.stack([u, v, torch.ones_like(u)], dim=1)
    rays = intrinsics.as_inverse_matrix(sampled.dtype, sampled.device) @ homogeneous
    lifted = sampled.reshape(batch, 1, -1) * rays
    residuals = lifted.reshape(batch, 3, height, width) - projection.points
    return PairLift(
        residuals=residuals,
        valid_mask=valid,
        sampled_depth=sampled,
        projected_depth=projection.depth,
        pixels=projection.pixels,
    )
