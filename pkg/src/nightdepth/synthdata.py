"""Procedural day/night sequences with exact ground-truth depth and pose.

Scenes are street-like corridors made of axis-aligned planes (ground, two side
walls, a far wall) plus a few moving boxes. A forward-moving, slowly yawing
camera renders each frame by ray casting, so depth is exact and relative poses
are known in closed form.

Static surfaces share one smooth world-anchored albedo field whose contrast
fades with distance. Re-rendering a frame from its neighbor with the true depth
and pose therefore reproduces static pixels up to bilinear interpolation error.
Box textures are anchored to the moving box, so box pixels violate that
consistency on purpose.

Night frames apply ``gain · day^gamma``, add glowing wall lamps and Gaussian
sensor noise, then clip to ``[0, 1]``.

On-disk layout (one directory per sequence)::

    manifest.json         intrinsics, domain, seed, frame count, size, format tag
    frame_000.png ...     RGB frames, 8 bit
    depth_000.bin ...     uint32 H, uint32 W, then H*W float32, little-endian, row-major
    dynamic_000.png ...   moving-object masks (white = moving)
    poses.txt             one "rx ry rz tx ty tz" line per pair (T_{i -> i+1})

Real recordings can be dropped into the same layout; ``depth_*.bin`` then holds
zeros where no ground truth exists and ``poses.txt`` may be empty.
"""

import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import matplotlib

matplotlib.use("Agg")  # must be set before importing pyplot
import matplotlib.pyplot as plt
import numpy as np
import torch

from .geometry import (
    MAX_DEPTH,
    MIN_DEPTH,
    CameraIntrinsics,
    DepthMap,
    PoseSE3,
    backproject,
    bilinear_sample,
    reproject,
)

Domain = Literal["day", "night"]
SEQUENCE_FORMAT = "nightdepth-sequence/1"
MANIFEST_FILE = "manifest.json"
POSES_FILE = "poses.txt"
SPLIT_CODES = {"train": 0, "val": 1, "day": 2}

DAY_TINT = np.array([1.0, 0.96, 0.9])
LAMP_TINT = np.array([1.0, 0.85, 0.6])
CAMERA_HEIGHT = 1.5
TEXTURE_FADE_METERS = 10.0


@dataclass(frozen=True, slots=True)
class Plane:
    """Infinite plane ``normal · X = offset`` in world coordinates."""

    normal: tuple[float, float, float]
    offset: float


@dataclass(frozen=True, slots=True)
class MovingBox:
    """Axis-aligned box translating at constant velocity (meters per frame)."""

    center: tuple[float, float, float]
    half_size: tuple[float, float, float]
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    stripe_period: float = 0.6

    def center_at(self, frame: int) -> np.ndarray:
        """Box center at ``frame``."""
        return np.asarray(self.center) + frame * np.asarray(self.velocity)

    def corners_at(self, frame: int) -> np.ndarray:
        """``8×3`` corner positions at ``frame``."""
        signs = np.array(np.meshgrid([-1, 1], [-1, 1], [-1, 1])).reshape(3, -1).T
        return self.center_at(frame) + signs * np.asarray(self.half_size)


@dataclass(frozen=True, slots=True)
class TextureField:
    """Smooth world-anchored albedo.

    ``0.5 + fade(z)·Σ a_k sin(2π f_k·X + φ_k)``.
    """

    frequencies: tuple[tuple[float, float, float], ...]
    amplitudes: tuple[float, ...]
    phases: tuple[float, ...]
    fade_meters: float = TEXTURE_FADE_METERS

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the albedo at ``N×3`` world points."""
        if not self.amplitudes:
            return np.full(points.shape[0], 0.5)
        freqs = np.asarray(self.frequencies)
        waves = np.sin(2 * np.pi * points @ freqs.T + np.asarray(self.phases))
        fade = np.exp(-points[:, 2] / self.fade_meters)
        return 0.5 + fade * (waves @ np.asarray(self.amplitudes))


@dataclass(frozen=True, slots=True)
class NightModel:
    """Night illumination: darkening, gamma, lamp glow and sensor noise."""

    gain: float = 0.15
    gamma: float = 2.2
    noise: float = 0.02
    lamp_intensity: float = 0.8
    lamp_radius: float = 0.6


@dataclass(frozen=True, slots=True)
class SceneSpec:
    """Everything needed to render a sequence deterministically.

    Camera ``i`` sits at ``camera_positions[i]`` with heading ``camera_yaws[i]``
    (rotation about the downward y axis); camera axes are x right, y down,
    z forward.
    """

    planes: tuple[Plane, ...]
    camera_positions: tuple[tuple[float, float, float], ...]
    camera_yaws: tuple[float, ...]
    texture: TextureField
    boxes: tuple[MovingBox, ...] = ()
    lamps: tuple[tuple[float, float, float], ...] = ()
    night: NightModel = field(default_factory=NightModel)
    seed: int = 0

    def __post_init__(self) -> None:
        """Check trajectory consistency."""
        if len(self.camera_positions) != len(self.camera_yaws):
            raise ValueError("camera_positions and camera_yaws must have equal length")
        if not self.camera_positions:
            raise ValueError("The trajectory needs at least one camera")

    @property
    def num_frames(self) -> int:
        """Frames available along the trajectory."""
        return len(self.camera_positions)

    def rotation(self, frame: int) -> np.ndarray:
        """Camera-to-world rotation of ``frame``."""
        return _yaw_matrix(self.camera_yaws[frame])

    def relative_pose(self, frame_from: int, frame_to: int) -> np.ndarray:
        """6-vector of ``T_{from→to}`` mapping points of one camera into the other."""
        rotation_to = self.rotation(frame_to)
        translation = rotation_to.T @ (
            np.asarray(self.camera_positions[frame_from])
            - np.asarray(self.camera_positions[frame_to])
        )
        yaw = self.camera_yaws[frame_from] - self.camera_yaws[frame_to]
        return np.array([0.0, yaw, 0.0, *translation])

    def validate(self, frames: int) -> None:
        """Reject scenes with geometry behind the camera.

        Raises:
            ValueError: If the trajectory is too short, a fronto-parallel plane
                or a box corner lies behind (or within ``MIN_DEPTH`` of) any
                camera, or a camera sits on a plane.
        """
        if frames > self.num_frames:
            raise ValueError(
                f"Trajectory has {self.num_frames} cameras, {frames} frames requested"
            )
        for index in range(frames):
            position = np.asarray(self.camera_positions[index])
            rotation = self.rotation(index)
            for plane in self.planes:
                normal = np.asarray(plane.normal)
                gap = plane.offset - normal @ position
                if abs(gap) <= MIN_DEPTH:
                    raise ValueError(f"Camera {index} lies on plane {plane}")
                if abs(normal[2]) == 1.0 and gap * normal[2] <= MIN_DEPTH:
                    raise ValueError(f"Plane {plane} is behind camera {index}")
            for box in self.boxes:
                corners = (box.corners_at(index) - position) @ rotation
                if (corners[:, 2] <= MIN_DEPTH).any():
                    raise ValueError(f"Box {box} is behind camera {index}")


@dataclass
class GeneratedSample:
    """One rendered sequence with its ground truth.

    Attributes:
        frames (np.ndarray): ``T×H×W×3`` float32 images in ``[0, 1]``.
        gt_depth (np.ndarray): ``T×H×W`` float32 depth in meters (0 = no GT).
        gt_pose (np.ndarray): ``(T−1)×6`` float64 ``T_{i→i+1}`` vectors.
        domain (str): ``"day"`` or ``"night"``.
        dynamic_mask (np.ndarray): ``T×H×W`` boolean moving-object pixels.
        intrinsics (CameraIntrinsics): Camera used for rendering.
        seed (int): Scene seed.
    """

    frames: np.ndarray
    gt_depth: np.ndarray
    gt_pose: np.ndarray
    domain: str
    dynamic_mask: np.ndarray
    intrinsics: CameraIntrinsics
    seed: int = 0

    @property
    def num_frames(self) -> int:
        """Sequence length ``T``."""
        return int(self.frames.shape[0])

    def depth_map(self, frame: int, dtype: torch.dtype = torch.float64) -> DepthMap:
        """Ground-truth depth of ``frame`` as a ``1×1×H×W`` :class:`DepthMap`."""
        values = torch.as_tensor(self.gt_depth[frame], dtype=dtype)[None, None]
        return DepthMap(values=values, valid_mask=values > 0)

    def pose(self, frame: int, dtype: torch.dtype = torch.float64) -> PoseSE3:
        """Ground-truth ``T_{frame→frame+1}`` as a batch of one."""
        vector = torch.as_tensor(self.gt_pose[frame], dtype=dtype)
        return PoseSE3.from_vector(vector[None])

    def image(self, frame: int, dtype: torch.dtype = torch.float64) -> torch.Tensor:
        """Frame ``frame`` as a ``1×3×H×W`` tensor."""
        return torch.as_tensor(self.frames[frame], dtype=dtype).permute(2, 0, 1)[None]


@dataclass
class FrameSequence:
    """A batch of sequences as tensors.

    Attributes:
        frames (torch.Tensor): ``B×T×3×H×W`` images.
        gt_depth (torch.Tensor): ``B×T×1×H×W`` depth (0 where missing).
        gt_pose (torch.Tensor): ``B×(T−1)×6`` relative poses.
        dynamic_mask (torch.Tensor): ``B×T×1×H×W`` booleans.
        domain (str): Shared domain tag.
    """

    frames: torch.Tensor
    gt_depth: torch.Tensor
    gt_pose: torch.Tensor
    dynamic_mask: torch.Tensor
    domain: str

    @property
    def batch_size(self) -> int:
        """Number of sequences."""
        return int(self.frames.shape[0])

    @property
    def time_steps(self) -> int:
        """Frames per sequence."""
        return int(self.frames.shape[1])


def collate(samples: Sequence[GeneratedSample]) -> FrameSequence:
    """Stack samples of one domain into a float32 :class:`FrameSequence`."""
    if not samples:
        raise ValueError("Cannot collate an empty list of samples")
    domains = {sample.domain for sample in samples}
    if len(domains) != 1:
        raise ValueError(f"Cannot mix domains in one batch: {sorted(domains)}")

    def stacked(name: str) -> torch.Tensor:
        return torch.as_tensor(np.stack([getattr(s, name) for s in samples]))

    frames = stacked("frames").permute(0, 1, 4, 2, 3)
    return FrameSequence(
        frames=frames.float().contiguous(),
        gt_depth=stacked("gt_depth")[:, :, None].float(),
        gt_pose=stacked("gt_pose").float(),
        dynamic_mask=stacked("dynamic_mask")[:, :, None],
        domain=domains.pop(),
    )


def _yaw_matrix(yaw: float) -> np.ndarray:
    cos, sin = np.cos(yaw), np.sin(yaw)
    return np.array([[cos, 0.0, sin], [0.0, 1.0, 0.0], [-sin, 0.0, cos]])


def _camera_rays(intrinsics: CameraIntrinsics) -> np.ndarray:
    """``(H·W)×3`` camera rays with unit z, row-major over pixels."""
    v, u = np.meshgrid(
        np.arange(intrinsics.height, dtype=np.float64),
        np.arange(intrinsics.width, dtype=np.float64),
        indexing="ij",
    )
    return np.stack(
        [
            (u.ravel() - intrinsics.cx) / intrinsics.fx,
            (v.ravel() - intrinsics.cy) / intrinsics.fy,
            np.ones(u.size),
        ],
        axis=1,
    )


def _intersect_box(
    origin: np.ndarray, directions: np.ndarray, center: np.ndarray, half: np.ndarray
) -> np.ndarray:
    """Slab test; returns the entry distance or ``inf`` where the ray misses."""
    safe = np.where(directions == 0, 1e-12, directions)
    t_low = (center - half - origin) / safe
    t_high = (center + half - origin) / safe
    t_near = np.minimum(t_low, t_high).max(axis=1)
    t_far = np.maximum(t_low, t_high).min(axis=1)
    hit = (t_near <= t_far) & (t_near > 0)
    return np.where(hit, t_near, np.inf)


def _box_albedo(points: np.ndarray, box: MovingBox, center: np.ndarray) -> np.ndarray:
    local = points - center
    phase = local[:, 0] + local[:, 1] + local[:, 2]
    stripes = np.sin(2 * np.pi * phase / box.stripe_period)
    return np.where(stripes > 0, 0.85, 0.15)


def _lamp_glow(points: np.ndarray, lamps: np.ndarray, model: NightModel) -> np.ndarray:
    if lamps.size == 0:
        return np.zeros(points.shape[0])
    squared = ((points[:, None, :] - lamps[None]) ** 2).sum(axis=-1)
    falloff = np.exp(-squared / (2 * model.lamp_radius**2))
    return model.lamp_intensity * falloff.sum(axis=1)


def _render_frame(
    spec: SceneSpec, frame: int, rays: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Cast every ray of ``frame``.

    Returns:
        Depth, albedo, world points and dynamic flags per ray.
    """
    origin = np.asarray(spec.camera_positions[frame], dtype=np.float64)
    directions = rays @ spec.rotation(frame).T
    best = np.full(rays.shape[0], np.inf)
    owner = np.full(rays.shape[0], -1)

    for plane in spec.planes:
        normal = np.asarray(plane.normal, dtype=np.float64)
        denom = directions @ normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (plane.offset - normal @ origin) / denom
        closer = (denom != 0) & (t > 0) & (t < best)
        best = np.where(closer, t, best)

    for index, box in enumerate(spec.boxes):
        t = _intersect_box(
            origin, directions, box.center_at(frame), np.asarray(box.half_size)
        )
        closer = t < best
        best = np.where(closer, t, best)
        owner = np.where(closer, index, owner)

    if not np.isfinite(best).all():
        raise ValueError(f"Rays escape the scene in frame {frame}")

    points = origin + best[:, None] * directions
    albedo = spec.texture(points)
    for index, box in enumerate(spec.boxes):
        hit = owner == index
        if hit.any():
            albedo[hit] = _box_albedo(points[hit], box, box.center_at(frame))
    return best, albedo, points, owner >= 0


def render_sequence(
    spec: SceneSpec,
    frames: int,
    intrinsics: CameraIntrinsics,
    domain: Domain = "day",
) -> GeneratedSample:
    """Render ``frames`` consecutive frames of ``spec``.

    Args:
        spec: Scene description.
        frames: Sequence length ``T``.
        intrinsics: Camera intrinsics.
        domain: ``"day"`` (uniform light) or ``"night"``.

    Returns:
        Frames with ground-truth depth, relative poses and moving-object masks.

    Raises:
        ValueError: If the scene fails validation or rendered depth leaves
            ``[MIN_DEPTH, MAX_DEPTH]``.
    """
    if domain not in ("day", "night"):
        raise ValueError(f"Unknown domain {domain!r}")
    spec.validate(frames)
    rays = _camera_rays(intrinsics)
    height, width = intrinsics.height, intrinsics.width
    lamps = np.asarray(spec.lamps, dtype=np.float64).reshape(-1, 3)
    noise_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1]))

    images, depths, masks = [], [], []
    for index in range(frames):
        depth, albedo, points, dynamic = _render_frame(spec, index, rays)
        if depth.min() < MIN_DEPTH or depth.max() > MAX_DEPTH:
            raise ValueError(
                f"Frame {index} depth range [{depth.min():.3f}, {depth.max():.3f}] m "
                f"is outside [{MIN_DEPTH}, {MAX_DEPTH}] m"
            )
        day = np.clip(albedo[:, None] * DAY_TINT, 0.0, 1.0)
        if domain == "day":
            image = day
        else:
            night = spec.night
            glow = _lamp_glow(points, lamps, night)[:, None] * LAMP_TINT
            image = night.gain * day**night.gamma + glow
            image = image + noise_rng.normal(0.0, night.noise, size=image.shape)
            image = np.clip(image, 0.0, 1.0)
        images.append(image.reshape(height, width, 3))
        depths.append(depth.reshape(height, width))
        masks.append(dynamic.reshape(height, width))

    poses = np.array([spec.relative_pose(i, i + 1) for i in range(frames - 1)]).reshape(
        -1, 6
    )
    return GeneratedSample(
        frames=np.stack(images).astype(np.float32),
        gt_depth=np.stack(depths).astype(np.float32),
        gt_pose=poses,
        domain=domain,
        dynamic_mask=np.stack(masks),
        intrinsics=intrinsics,
        seed=spec.seed,
    )


def day_night_pair(
    spec: SceneSpec, frames: int, intrinsics: CameraIntrinsics
) -> tuple[GeneratedSample, GeneratedSample]:
    """Render the same geometry and trajectory under day and night light."""
    return (
        render_sequence(spec, frames, intrinsics, "day"),
        render_sequence(spec, frames, intrinsics, "night"),
    )


def random_texture(rng: np.random.Generator, components: int = 4) -> TextureField:
    """Draw a texture with 1.5–4 m lateral and 2–6 m depthwise wavelengths."""
    lateral = rng.uniform(1.5, 4.0, size=(components, 2))
    depthwise = rng.uniform(2.0, 6.0, size=components)
    signs = rng.choice([-1.0, 1.0], size=(components, 3))
    frequencies = signs * np.column_stack([1 / lateral, 1 / depthwise])
    amplitudes = np.array([0.16, 0.10, 0.07, 0.05][:components])
    phases = rng.uniform(0.0, 2 * np.pi, size=components)
    return TextureField(
        frequencies=tuple(tuple(float(v) for v in row) for row in frequencies),
        amplitudes=tuple(float(a) for a in amplitudes),
        phases=tuple(float(p) for p in phases),
    )


def random_scene(
    seed: int,
    frames: int,
    night: NightModel | None = None,
    lamps_per_wall: int = 3,
    max_boxes: int = 2,
) -> SceneSpec:
    """Draw a corridor scene with moving boxes along a forward, yawing trajectory.

    Args:
        seed: Scene seed; equal seeds give identical scenes.
        frames: Trajectory length.
        night: Night illumination model.
        lamps_per_wall: Lamps attached to each side wall.
        max_boxes: Upper bound on moving boxes (at least one is placed when
            positive).

    Returns:
        A validated :class:`SceneSpec`.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    half_width = float(rng.uniform(3.0, 5.0))
    far = float(rng.uniform(40.0, 60.0))
    planes = (
        Plane((0.0, 1.0, 0.0), CAMERA_HEIGHT),
        Plane((1.0, 0.0, 0.0), half_width),
        Plane((1.0, 0.0, 0.0), -half_width),
        Plane((0.0, 0.0, 1.0), far),
    )

    step = float(rng.uniform(0.2, 0.6))
    yaw_rate = float(rng.uniform(-0.02, 0.02))
    positions = tuple((0.0, 0.0, index * step) for index in range(frames))
    yaws = tuple(index * yaw_rate for index in range(frames))

    boxes = []
    for _ in range(int(rng.integers(1, max_boxes + 1)) if max_boxes > 0 else 0):
        half = rng.uniform(0.4, 0.8, size=3)
        center = (
            float(rng.uniform(-half_width + 1.0, half_width - 1.0)),
            CAMERA_HEIGHT - float(half[1]),
            float(rng.uniform(8.0, 14.0)),
        )
        velocity = (
            float(rng.choice([-1.0, 1.0]) * rng.uniform(0.25, 0.5)),
            0.0,
            float(rng.uniform(-0.2, 0.2)),
        )
        boxes.append(MovingBox(center, tuple(float(h) for h in half), velocity))

    lamps = tuple(
        (side * (half_width - 0.01), -0.5, float(z))
        for side in (-1.0, 1.0)
        for z in rng.uniform(5.0, 35.0, size=lamps_per_wall)
    )
    spec = SceneSpec(
        planes=planes,
        camera_positions=positions,
        camera_yaws=yaws,
        texture=random_texture(rng),
        boxes=tuple(boxes),
        lamps=lamps,
        night=night or NightModel(),
        seed=seed,
    )
    spec.validate(frames)
    return spec


def fronto_parallel_scene(
    depth: float, step: float, frames: int, seed: int = 0
) -> SceneSpec:
    """A single textured wall at ``depth`` approached at ``step`` meters per frame.

    Ground-truth depth of frame ``i`` is exactly ``depth − i·step`` everywhere.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    return SceneSpec(
        planes=(Plane((0.0, 0.0, 1.0), depth),),
        camera_positions=tuple((0.0, 0.0, index * step) for index in range(frames)),
        camera_yaws=(0.0,) * frames,
        texture=random_texture(rng),
        seed=seed,
    )


def static_scene(seed: int, frames: int) -> SceneSpec:
    """A corridor without moving objects seen from a camera that never moves."""
    base = random_scene(seed, frames, max_boxes=0)
    return SceneSpec(
        planes=base.planes,
        camera_positions=(base.camera_positions[0],) * frames,
        camera_yaws=(0.0,) * frames,
        texture=base.texture,
        lamps=base.lamps,
        night=base.night,
        seed=seed,
    )


def scene_seed(seed: int, split: str, index: int) -> int:
    """Stable per-sequence seed derived from the run seed, split and index."""
    if split not in SPLIT_CODES:
        raise ValueError(
            f"Unknown split {split!r}; expected one of {sorted(SPLIT_CODES)}"
        )
    sequence = np.random.SeedSequence([seed, SPLIT_CODES[split], index])
    return int(sequence.generate_state(1)[0])


def make_sample(
    seed: int,
    split: str,
    index: int,
    frames: int,
    intrinsics: CameraIntrinsics,
    domain: Domain,
    night: NightModel | None = None,
    lamps_per_wall: int = 3,
) -> GeneratedSample:
    """Render sequence ``index`` of ``split`` in ``domain``."""
    spec = random_scene(
        scene_seed(seed, split, index),
        frames,
        night=night,
        lamps_per_wall=lamps_per_wall,
    )
    return render_sequence(spec, frames, intrinsics, domain)


def static_reprojection_mask(
    sample: GeneratedSample, target: int, source: int
) -> np.ndarray:
    """Pixels of ``target`` whose reprojection into ``source`` sees only static scene.

    Moving-object pixels of the target (grown by one pixel), pixels landing on
    or next to a moving object in the source, and out-of-view pixels are
    excluded.
    """
    if abs(target - source) != 1:
        raise ValueError("Only adjacent frames have a stored ground-truth pose")
    pose = sample.pose(min(target, source))
    if source < target:
        pose = pose.inverse()
    points = backproject(sample.depth_map(target), sample.intrinsics)
    projection = reproject(points, pose, sample.intrinsics)
    source_dynamic = torch.as_tensor(sample.dynamic_mask[source], dtype=torch.float64)
    grown_source = torch.nn.functional.max_pool2d(source_dynamic[None, None], 3, 1, 1)
    landed, _ = bilinear_sample(grown_source, projection.pixels)
    target_dynamic = torch.as_tensor(sample.dynamic_mask[target], dtype=torch.float64)
    grown_target = torch.nn.functional.max_pool2d(target_dynamic[None, None], 3, 1, 1)
    static = projection.frontal_mask & (landed == 0) & (grown_target == 0)
    return static[0, 0].numpy()


def _png_bytes_image(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)


def save_sample(sample: GeneratedSample, directory: Path) -> Path:
    """Write ``sample`` in the on-disk sequence layout.

    Args:
        sample: Sequence to write.
        directory: Target directory (created if absent).

    Returns:
        The directory.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    height, width = sample.gt_depth.shape[1:]
    for index in range(sample.num_frames):
        plt.imsave(
            directory / f"frame_{index:03d}.png",
            _png_bytes_image(sample.frames[index]),
            format="png",
            metadata={"Software": None},
        )
        plt.imsave(
            directory / f"dynamic_{index:03d}.png",
            sample.dynamic_mask[index].astype(np.uint8) * 255,
            cmap="gray",
            vmin=0,
            vmax=255,
            format="png",
            metadata={"Software": None},
        )
        header = np.array([height, width], dtype="<u4").tobytes()
        body = np.ascontiguousarray(sample.gt_depth[index], dtype="<f4").tobytes()
        (directory / f"depth_{index:03d}.bin").write_bytes(header + body)

    lines = [" ".join(f"{value:.17g}" for value in row) for row in sample.gt_pose]
    (directory / POSES_FILE).write_text(
        "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
    )
    manifest = {
        "format": SEQUENCE_FORMAT,
        "domain": sample.domain,
        "seed": sample.seed,
        "frames": sample.num_frames,
        "height": int(height),
        "width": int(width),
        "intrinsics": sample.intrinsics.to_dict(),
    }
    (directory / MANIFEST_FILE).write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )
    return directory


def read_depth_file(path: Path) -> np.ndarray:
    """Read one ``depth_*.bin`` file into an ``H×W`` float32 array.

    Raises:
        ValueError: If the payload size disagrees with the header.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"{path} is too short to hold a depth header")
    height, width = (int(v) for v in np.frombuffer(raw[:8], dtype="<u4"))
    body = np.frombuffer(raw[8:], dtype="<f4")
    if body.size != height * width:
        raise ValueError(
            f"{path} holds {body.size} values, header says {height}x{width}"
        )
    return body.reshape(height, width).astype(np.float32)


def load_sample(directory: Path) -> GeneratedSample:
    """Read a sequence directory in the :func:`save_sample` layout.

    Recordings laid out the same way load too.

    Raises:
        FileNotFoundError: If the manifest or a referenced file is missing.
        ValueError: On a foreign format tag or inconsistent sizes.
    """
    directory = Path(directory)
    manifest_path = directory / MANIFEST_FILE
    if not manifest_path.exists():
        raise FileNotFoundError(f"Missing required file: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != SEQUENCE_FORMAT:
        raise ValueError(
            f"{manifest_path} has unsupported format {manifest.get('format')!r}"
        )
    frames = int(manifest["frames"])

    images, depths, masks = [], [], []
    for index in range(frames):
        for prefix in ("frame", "depth", "dynamic"):
            suffix = "bin" if prefix == "depth" else "png"
            path = directory / f"{prefix}_{index:03d}.{suffix}"
            if not path.exists():
                raise FileNotFoundError(f"Missing required file: {path}")
        images.append(plt.imread(directory / f"frame_{index:03d}.png")[..., :3])
        depths.append(read_depth_file(directory / f"depth_{index:03d}.bin"))
        masks.append(plt.imread(directory / f"dynamic_{index:03d}.png")[..., 0] > 0.5)

    poses_path = directory / POSES_FILE
    poses_text = poses_path.read_text(encoding="utf-8") if poses_path.exists() else ""
    rows = [line.split() for line in poses_text.splitlines() if line.strip()]
    poses = np.array([[float(v) for v in row] for row in rows]).reshape(-1, 6)
    shape = (int(manifest["height"]), int(manifest["width"]))
    if any(depth.shape != shape for depth in depths):
        raise ValueError(f"Depth maps in {directory} do not match {shape}")
    return GeneratedSample(
        frames=np.stack(images).astype(np.float32),
        gt_depth=np.stack(depths),
        gt_pose=poses,
        domain=manifest["domain"],
        dynamic_mask=np.stack(masks),
        intrinsics=CameraIntrinsics.from_dict(manifest["intrinsics"]),
        seed=int(manifest.get("seed", 0)),
    )


def load_dataset(root: Path) -> list[GeneratedSample]:
    """Load every sequence directory under ``root`` in sorted order.

    Raises:
        FileNotFoundError: If ``root`` holds no sequence directories.
    """
    root = Path(root)
    directories = sorted(path.parent for path in root.glob(f"*/{MANIFEST_FILE}"))
    if not directories:
        raise FileNotFoundError(f"No sequence directories found under {root}")
    return [load_sample(directory) for directory in directories]
