"""Two-stage training: daytime pretraining, then adversarial nighttime training.

The daytime stage trains a depth/pose pair with the self-supervised objective
and freezes the depth network. Its depth sequences become the "real" class of
a least-squares GAN whose discriminator is built from spatiotemporal prior
blocks. The nighttime stage trains a fresh depth/pose pair on night windows
with the self-supervised objective plus the generator loss, alternating one
discriminator step and one generator step per iteration.

Run artifacts (all under the output directory):

* ``config.json``: merged settings.
* ``metrics.jsonl``: one JSON record per logged step or evaluation.
* ``day_model.ckpt`` / ``night_model.ckpt``: network archives.
* ``summary.json``: final metrics, resource usage and environment.
"""

import copy
import importlib.metadata
import json
import platform
import sys
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, ClassVar

import numpy as np
import torch
from rich.console import Console
from rich.progress import Progress

from .checkpoint import config_dict, save_checkpoint
from .geometry import CameraIntrinsics
from .losses import (
    LossReport,
    LossWeights,
    lsgan_discriminator_loss,
    lsgan_generator_loss,
    report_from_terms,
)
from .metrics import DEFAULT_CAPS, MetricsReport, aggregate, evaluate
from .networks import (
    DepthNet,
    FrozenModelError,
    PoseNet,
    build_optimizer,
    is_frozen,
    predict_disparities,
    pretrain_daytime,
    sequence_self_supervised,
    set_learning_rate,
    target_and_sources,
)
from .prefetch import BatchWorker
from .resource_monitor import ResourceMonitor
from .splb import SequenceDiscriminator, normalize_disparity_sequence
from .synthdata import FrameSequence, GeneratedSample, collate, make_sample

if TYPE_CHECKING:
    from .settings import ExperimentSettings

METRICS_LOG_FILE = "metrics.jsonl"
SUMMARY_FILE = "summary.json"
DAY_CHECKPOINT_FILE = "day_model.ckpt"
NIGHT_CHECKPOINT_FILE = "night_model.ckpt"

# (use_proj_loss, use_stlm, use_aslm) in ablation-table row order.
ABLATION_ROWS: tuple[tuple[bool, bool, bool], ...] = (
    (False, False, False),
    (True, False, False),
    (False, True, False),
    (False, False, True),
    (False, True, True),
    (True, True, False),
    (True, False, True),
    (True, True, True),
)


@dataclass(frozen=True, slots=True)
class TrainConfig:
    """Optimization schedule, window length and ablation toggles.

    Attributes:
        batch_size (int): Sequences per batch.
        epochs (int): Passes over the night training split when ``max_steps`` is 0.
        lr_init (float): Learning rate at step 0.
        lr_peak (float): Learning rate reached after the warmup.
        warmup_iters (int): Linear warmup length in steps.
        halve_at_epoch (int): First epoch trained at ``lr_peak / 2``.
        frames (int): Frames per training window ``T``.
        use_proj_loss (bool): Enable the 3D projection consistency term.
        use_stlm (bool): Enable the temporal module in discriminator blocks.
        use_aslm (bool): Enable the axial spatial module in discriminator blocks.
        max_steps (int): Night-stage steps; 0 means ``epochs`` full epochs.
        day_pretrain_steps (int): Daytime pretraining steps.
        log_interval (int): Steps between ``metrics.jsonl`` training records.
        eval_interval (int): Steps between validation evaluations.
        prefetch_depth (int): Batches assembled ahead by the background worker.
    """

    batch_size: int = 8
    epochs: int = 50
    lr_init: float = 3e-5
    lr_peak: float = 1e-4
    warmup_iters: int = 500
    halve_at_epoch: int = 15
    frames: int = 3
    use_proj_loss: bool = True
    use_stlm: bool = True
    use_aslm: bool = True
    max_steps: int = 2000
    day_pretrain_steps: int = 1000
    log_interval: int = 10
    eval_interval: int = 200
    prefetch_depth: int = 4

    def __post_init__(self) -> None:
        """Validate schedule and sizes."""
        if self.warmup_iters < 1:
            raise ValueError("train.warmup_iters must be >= 1")
        if not 0 < self.lr_init <= self.lr_peak:
            raise ValueError(
                "train needs 0 < lr_init <= lr_peak, "
                f"got {self.lr_init}, {self.lr_peak}"
            )
        if self.frames < 2:
            raise ValueError(
                f"train.frames must be >= 2 (temporal differences need two frames), "
                f"got {self.frames}"
            )
        for name in (
            "batch_size",
            "epochs",
            "log_interval",
            "eval_interval",
            "prefetch_depth",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"train.{name} must be >= 1")
        for name in ("halve_at_epoch", "max_steps", "day_pretrain_steps"):
            if getattr(self, name) < 0:
                raise ValueError(f"train.{name} must be >= 0")

    @property
    def toggles(self) -> dict[str, bool]:
        """Ablation switches as a mapping."""
        return {
            "use_proj_loss": self.use_proj_loss,
            "use_stlm": self.use_stlm,
            "use_aslm": self.use_aslm,
        }


def lr_schedule(step: int, epoch: int, cfg: TrainConfig) -> float:
    """Linear warmup to ``lr_peak``, then half of it from ``halve_at_epoch`` on.

    Raises:
        ValueError: If ``step`` or ``epoch`` is negative.
    """
    if step < 0 or epoch < 0:
        raise ValueError(f"step and epoch must be non-negative, got {step}, {epoch}")
    if epoch >= cfg.halve_at_epoch:
        return cfg.lr_peak / 2
    if step >= cfg.warmup_iters:
        return cfg.lr_peak
    return cfg.lr_init + (cfg.lr_peak - cfg.lr_init) * step / cfg.warmup_iters


@dataclass
class Splits:
    """Rendered sequences of one run.

    ``val_day[i]`` shows the geometry of ``val_night[i]`` in daylight.
    """

    train_night: list[GeneratedSample]
    train_day: list[GeneratedSample]
    val_night: list[GeneratedSample]
    val_day: list[GeneratedSample]


def render_split(
    settings: "ExperimentSettings", split: str, domain: str, count: int | None = None
) -> list[GeneratedSample]:
    """Render ``count`` sequences of ``split`` (default: the configured split size)."""
    data = settings.data
    if count is None:
        count = data.val_sequences if split == "val" else data.train_sequences
    intrinsics = data.intrinsics()
    night = data.night_model()
    return [
        make_sample(
            settings.seed,
            split,
            index,
            settings.train.frames,
            intrinsics,
            domain,  # type: ignore[arg-type]
            night=night,
            lamps_per_wall=data.lamps_per_wall,
        )
        for index in range(count)
    ]


def generate_splits(settings: "ExperimentSettings") -> Splits:
    """Render the training and validation splits for ``settings.seed``."""
    return Splits(
        train_night=render_split(settings, "train", "night"),
        train_day=render_split(settings, "day", "day"),
        val_night=render_split(settings, "val", "night"),
        val_day=render_split(settings, "val", "day"),
    )


class BatchPlan:
    """Seeded per-epoch shuffling of night windows paired with day windows.

    Step ``s`` belongs to epoch ``s // steps_per_epoch``; within an epoch both
    splits are permuted with a generator seeded by ``(seed, epoch)``, so the
    batch of any step can be rebuilt independently of the others.
    """

    def __init__(
        self,
        night: Sequence[GeneratedSample],
        day: Sequence[GeneratedSample],
        batch_size: int,
        seed: int,
    ) -> None:
        if batch_size > min(len(night), len(day)):
            raise ValueError(
                f"batch_size {batch_size} exceeds the split sizes "
                f"({len(night)} night, {len(day)} day)"
            )
        self.night = list(night)
        self.day = list(day)
        self.batch_size = batch_size
        self.seed = seed
        self.steps_per_epoch = len(self.night) // batch_size

    def epoch_of(self, step: int) -> int:
        """Epoch index of a global step."""
        return step // self.steps_per_epoch

    def indices(self, step: int) -> tuple[np.ndarray, np.ndarray]:
        """Night and day sample indices of ``step``.

        The day permutation wraps around when the day split is the shorter one.
        """
        epoch, position = divmod(step, self.steps_per_epoch)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, epoch]))
        night_order = rng.permutation(len(self.night))
        day_order = rng.permutation(len(self.day))
        window = np.arange(position * self.batch_size, (position + 1) * self.batch_size)
        return night_order[window], day_order[window % len(self.day)]

    def __call__(self, step: int) -> tuple[FrameSequence, FrameSequence]:
        night_index, day_index = self.indices(step)
        return (
            collate([self.night[i] for i in night_index]),
            collate([self.day[i] for i in day_index]),
        )


def total_steps(cfg: TrainConfig, steps_per_epoch: int) -> int:
    """Night-stage length: ``max_steps`` if set, else ``epochs`` full epochs."""
    return cfg.max_steps or cfg.epochs * steps_per_epoch


@dataclass
class NightModels:
    """Generator (depth and pose networks), discriminator and their optimizers."""

    depth_net: DepthNet
    pose_net: PoseNet
    discriminator: SequenceDiscriminator
    generator_optimizer: torch.optim.Adam
    discriminator_optimizer: torch.optim.Adam

    @classmethod
    def build(cls, settings: "ExperimentSettings") -> "NightModels":
        """Fresh networks for the night stage; the caller seeds torch first."""
        depth_net = DepthNet(settings.depth_net)
        pose_net = PoseNet(settings.pose_net)
        discriminator = SequenceDiscriminator(
            settings.splb,
            use_stlm=settings.train.use_stlm,
            use_aslm=settings.train.use_aslm,
        )
        lr = lr_schedule(0, 0, settings.train)
        return cls(
            depth_net=depth_net,
            pose_net=pose_net,
            discriminator=discriminator,
            generator_optimizer=build_optimizer([depth_net, pose_net], lr),
            discriminator_optimizer=build_optimizer([discriminator], lr),
        )

    def set_learning_rate(self, lr: float) -> None:
        """Apply ``lr`` to both optimizers."""
        set_learning_rate(self.generator_optimizer, lr)
        set_learning_rate(self.discriminator_optimizer, lr)


def discriminator_step(
    models: NightModels, night_disparities: torch.Tensor, day_disparities: torch.Tensor
) -> torch.Tensor:
    """One discriminator update: day-prior sequences toward 1, night toward 0.

    Night disparities are detached, so no generator parameter receives gradient.
    """
    day_scores = models.discriminator(normalize_disparity_sequence(day_disparities))
    night_scores = models.discriminator(
        normalize_disparity_sequence(night_disparities.detach())
    )
    loss = lsgan_discriminator_loss(day_scores, night_scores)
    models.discriminator_optimizer.zero_grad(set_to_none=True)
    loss.backward()
    models.discriminator_optimizer.step()
    return loss.detach()


def generator_step(
    models: NightModels, self_total: torch.Tensor, night_disparities: torch.Tensor
) -> torch.Tensor:
    """One generator update with ``self_total`` plus the least-squares generator loss.

    Discriminator parameters stop requiring gradients for the duration of the step.
    """
    parameters = list(models.discriminator.parameters())
    for parameter in parameters:
        parameter.requires_grad_(False)
    try:
        scores = models.discriminator(normalize_disparity_sequence(night_disparities))
        gan_generator = lsgan_generator_loss(scores)
        models.generator_optimizer.zero_grad(set_to_none=True)
        (self_total + gan_generator).backward()
        models.generator_optimizer.step()
    finally:
        for parameter in parameters:
            parameter.requires_grad_(True)
    return gan_generator.detach()


def train_step_night(
    night: FrameSequence,
    day: FrameSequence,
    day_prior: DepthNet,
    models: NightModels,
    cfg: TrainConfig,
    intrinsics: CameraIntrinsics,
    weights: LossWeights,
) -> LossReport:
    """One alternating night-stage iteration.

    The generator predicts night depth for all frames and the target-to-source
    poses and computes the self-supervised terms. The frozen day prior predicts
    the day batch. The discriminator updates first on both sequences, then the
    generator updates on the self-supervised total plus the generator loss.

    Raises:
        FrozenModelError: If ``day_prior`` is not frozen.
        ValueError: If either batch does not hold ``cfg.frames`` frames.
    """
    if not is_frozen(day_prior):
        raise FrozenModelError("The day prior must be frozen before night training")
    for name, batch in (("night", night), ("day", day)):
        if batch.time_steps != cfg.frames:
            raise ValueError(
                f"{name} batch has {batch.time_steps} frames, expected {cfg.frames}"
            )

    models.depth_net.train()
    models.pose_net.train()
    models.discriminator.train()

    terms, night_disparities = sequence_self_supervised(
        models.depth_net,
        models.pose_net,
        night.frames,
        intrinsics,
        weights,
        use_projection=cfg.use_proj_loss,
    )
    with torch.no_grad():
        day_disparities = predict_disparities(day_prior, day.frames)

    gan_discriminator = discriminator_step(models, night_disparities, day_disparities)
    gan_generator = generator_step(models, terms.total, night_disparities)
    return report_from_terms(
        terms, gan_generator=gan_generator, gan_discriminator=gan_discriminator
    )


def evaluate_predictor(
    predict: Callable[[torch.Tensor], torch.Tensor],
    samples: Sequence[GeneratedSample],
    caps: Sequence[float] = DEFAULT_CAPS,
    median_scale: bool = True,
) -> dict[float, MetricsReport]:
    """Evaluate a single-frame depth predictor on the target frame of each sample.

    Args:
        predict: Maps a ``1×3×H×W`` float32 image to ``1×1×H×W`` depth in meters.
        samples: Sequences with ground truth.
        caps: Ground-truth depth caps in meters.
        median_scale: Apply per-image median scaling.

    Returns:
        One aggregated report per cap.
    """
    if not samples:
        raise ValueError("Cannot evaluate on zero samples")
    per_cap: dict[float, list[MetricsReport]] = {float(cap): [] for cap in caps}
    for sample in samples:
        target, _ = target_and_sources(sample.num_frames)
        depth = predict(sample.image(target, dtype=torch.float32))
        gt = sample.depth_map(target)
        for cap, reports in per_cap.items():
            reports.append(
                evaluate(depth, gt, max_depth=cap, median_scale=median_scale)
            )
    return {cap: aggregate(reports) for cap, reports in per_cap.items()}


def evaluate_model(
    depth_net: DepthNet,
    samples: Sequence[GeneratedSample],
    caps: Sequence[float] = DEFAULT_CAPS,
    median_scale: bool = True,
) -> dict[float, MetricsReport]:
    """:func:`evaluate_predictor` for a depth network, run in evaluation mode."""
    was_training = depth_net.training
    depth_net.eval()
    try:
        return evaluate_predictor(
            lambda image: depth_net.predict(image)[1].values,
            samples,
            caps,
            median_scale,
        )
    finally:
        if was_training:
            depth_net.train()


@torch.no_grad()
def adversarial_gap(
    discriminator: SequenceDiscriminator,
    day_prior: DepthNet,
    untrained: DepthNet,
    day_samples: Sequence[GeneratedSample],
    night_samples: Sequence[GeneratedSample],
) -> float:
    """Mean day-prior score minus mean score of an untrained night network."""
    discriminator.eval()
    untrained.eval()
    day = collate(day_samples).frames
    night = collate(night_samples).frames
    day_scores = discriminator(
        normalize_disparity_sequence(predict_disparities(day_prior, day))
    )
    night_scores = discriminator(
        normalize_disparity_sequence(predict_disparities(untrained, night))
    )
    return float(day_scores.mean() - night_scores.mean())


class MetricsLog:
    """Append-only JSON-lines log."""

    def __init__(self, path: Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = open(self.path, "a", encoding="utf-8")  # noqa: SIM115

    def write(self, record: dict[str, Any]) -> None:
        """Append one record and flush."""
        self._handle.write(json.dumps(record, sort_keys=True) + "\n")
        self._handle.flush()

    def write_eval(
        self, step: int, split: str, reports: dict[float, MetricsReport]
    ) -> None:
        """Append one ``kind = "eval"`` record per cap."""
        for cap, report in reports.items():
            record = {"kind": "eval", "step": step, "split": split, "cap": cap}
            self.write({**record, **report.to_dict()})

    def close(self) -> None:
        """Close the underlying file."""
        self._handle.close()

    def __enter__(self) -> "MetricsLog":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def read_metrics_log(path: Path) -> list[dict[str, Any]]:
    """Parse every record of a ``metrics.jsonl`` file."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]


def _prefetched(worker: BatchWorker) -> Iterator[Any]:
    with worker:
        for _ in range(worker.steps):
            yield worker.next_batch()


def _metrics_json(reports: dict[float, MetricsReport]) -> dict[str, Any]:
    return {f"{cap:g}": report.to_dict() for cap, report in reports.items()}


def _environment() -> dict[str, str]:
    return {
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "torch_version": torch.__version__,
        "nightdepth_version": _package_version(),
    }


def _progress(console: Console, show_progress: bool) -> Progress:
    return Progress(console=console, disable=not show_progress, transient=True)


def _package_version() -> str:
    try:
        return importlib.metadata.version("nightdepth")
    except importlib.metadata.PackageNotFoundError:  # pragma: no cover
        return "unknown"


def _start_monitor(console: Console) -> ResourceMonitor | None:
    try:
        return ResourceMonitor()
    except RuntimeError as e:
        console.print(f"[yellow]Warning:[/] Resource monitoring is disabled ({e})")
        return None


@dataclass
class DayResult:
    """Frozen day prior with its pose network and validation metrics."""

    depth_net: DepthNet
    pose_net: PoseNet
    metrics: dict[float, MetricsReport]
    checkpoint: Path


def train_day(
    settings: "ExperimentSettings",
    splits: Splits | None = None,
    *,
    show_progress: bool = False,
    console: Console | None = None,
) -> DayResult:
    """Pretrain and freeze the daytime depth network.

    Writes ``day_model.ckpt`` and ``kind = "day"`` records to ``metrics.jsonl``
    under ``settings.output_directory``.
    """
    console = console or Console()
    cfg = settings.train
    output_directory = Path(settings.output_directory)
    output_directory.mkdir(parents=True, exist_ok=True)
    splits = splits or generate_splits(settings)

    torch.manual_seed(settings.seed)
    depth_net = DepthNet(settings.depth_net)
    pose_net = PoseNet(settings.pose_net)
    plan = BatchPlan(splits.train_day, splits.train_day, cfg.batch_size, settings.seed)
    worker = BatchWorker(
        lambda step: plan(step)[0].frames, cfg.day_pretrain_steps, cfg.prefetch_depth
    )

    with (
        MetricsLog(output_directory / METRICS_LOG_FILE) as log,
        _progress(console, show_progress) as progress,
    ):
        task = progress.add_task("day pretraining", total=cfg.day_pretrain_steps)

        def learning_rate(step: int) -> float:
            return lr_schedule(step, plan.epoch_of(step), cfg)

        def on_step(step: int, report: LossReport) -> None:
            progress.advance(task)
            if step % cfg.log_interval == 0 or step == cfg.day_pretrain_steps - 1:
                record = report.to_record(
                    step, epoch=plan.epoch_of(step), lr=learning_rate(step)
                )
                log.write({**record, "kind": "day"})

        pretrain_daytime(
            depth_net,
            pose_net,
            _prefetched(worker),
            intrinsics=settings.data.intrinsics(),
            weights=settings.loss,
            learning_rate=learning_rate,
            use_projection=cfg.use_proj_loss,
            on_step=on_step,
        )
        metrics = evaluate_model(depth_net, splits.val_day)
        log.write_eval(cfg.day_pretrain_steps, "val_day", metrics)

    checkpoint = save_checkpoint(
        output_directory / DAY_CHECKPOINT_FILE,
        {"depth_net": depth_net, "pose_net": pose_net},
        {
            "kind": "day",
            "seed": settings.seed,
            "steps": cfg.day_pretrain_steps,
            "depth_net": config_dict(settings.depth_net),
            "pose_net": config_dict(settings.pose_net),
            "data": config_dict(settings.data),
        },
    )
    return DayResult(depth_net, pose_net, metrics, checkpoint)


@dataclass
class ExperimentResult:
    """Outcome of one night-stage run."""

    output_directory: Path
    initial_metrics: dict[float, MetricsReport]
    final_metrics: dict[float, MetricsReport]
    day_metrics: dict[float, MetricsReport] | None
    adversarial_gap: float
    reports: list[LossReport] = field(default_factory=list)
    models: NightModels | None = None
    day_prior: DepthNet | None = None

    def self_totals(self) -> list[float]:
        """``self_total`` of every step, in order."""
        return [report.self_total for report in self.reports]


def run_experiment(
    settings: "ExperimentSettings",
    day_prior: DepthNet | None = None,
    *,
    show_progress: bool = False,
    console: Console | None = None,
) -> ExperimentResult:
    """Run the full procedure for one configuration.

    Args:
        settings: Fully resolved configuration; ``output_directory`` receives
            every artifact.
        day_prior: Frozen daytime depth network to reuse. When ``None`` one is
            pretrained first and written as ``day_model.ckpt``.
        show_progress: Show a ``rich`` progress bar.
        console: Console for progress and warnings.

    Returns:
        Metrics before and after night training, the adversarial score gap and
        the trained networks.

    Raises:
        FrozenModelError: If ``day_prior`` is given but not frozen.
    """
    console = console or Console()
    cfg = settings.train
    output_directory = Path(settings.output_directory)
    output_directory.mkdir(parents=True, exist_ok=True)
    settings.write(output_directory)
    splits = generate_splits(settings)
    intrinsics = settings.data.intrinsics()

    day_metrics = None
    if day_prior is None:
        day = train_day(settings, splits, show_progress=show_progress, console=console)
        day_prior, day_metrics = day.depth_net, day.metrics
    elif not is_frozen(day_prior):
        raise FrozenModelError("The day prior must be frozen before night training")

    torch.manual_seed(settings.seed)
    models = NightModels.build(settings)
    untrained = copy.deepcopy(models.depth_net)
    plan = BatchPlan(
        splits.train_night, splits.train_day, cfg.batch_size, settings.seed
    )
    steps = total_steps(cfg, plan.steps_per_epoch)
    monitor = _start_monitor(console)
    reports: list[LossReport] = []

    with (
        MetricsLog(output_directory / METRICS_LOG_FILE) as log,
        BatchWorker(plan, steps, cfg.prefetch_depth) as worker,
        _progress(console, show_progress) as progress,
    ):
        initial_metrics = evaluate_model(models.depth_net, splits.val_night)
        log.write_eval(0, "val_night", initial_metrics)
        task = progress.add_task("night training", total=steps)
        for step in range(steps):
            epoch = plan.epoch_of(step)
            lr = lr_schedule(step, epoch, cfg)
            models.set_learning_rate(lr)
            night, day = worker.next_batch()
            report = train_step_night(
                night, day, day_prior, models, cfg, intrinsics, settings.loss
            )
            reports.append(report)
            if step % cfg.log_interval == 0 or step == steps - 1:
                log.write(report.to_record(step, epoch=epoch, lr=lr))
            if (step + 1) % cfg.eval_interval == 0 and step + 1 < steps:
                metrics = evaluate_model(models.depth_net, splits.val_night)
                log.write_eval(step + 1, "val_night", metrics)
            if monitor is not None:
                monitor.maybe_sample(step=step + 1)
            progress.advance(task)
        final_metrics = evaluate_model(models.depth_net, splits.val_night)
        log.write_eval(steps, "val_night", final_metrics)
        stalls = worker.stalls

    gap = adversarial_gap(
        models.discriminator, day_prior, untrained, splits.val_day, splits.val_night
    )
    if monitor is not None:
        monitor.finalize(step=steps)
    usage = monitor.snapshot() if monitor is not None else None

    save_checkpoint(
        output_directory / NIGHT_CHECKPOINT_FILE,
        {
            "depth_net": models.depth_net,
            "pose_net": models.pose_net,
            "discriminator": models.discriminator,
        },
        {
            "kind": "night",
            "seed": settings.seed,
            "steps": steps,
            "depth_net": config_dict(settings.depth_net),
            "pose_net": config_dict(settings.pose_net),
            "splb": config_dict(settings.splb),
            "toggles": cfg.toggles,
            "data": config_dict(settings.data),
        },
    )
    summary = {
        "seed": settings.seed,
        "steps": steps,
        "frames": cfg.frames,
        "toggles": cfg.toggles,
        "initial_metrics": _metrics_json(initial_metrics),
        "final_metrics": _metrics_json(final_metrics),
        "day_metrics": None if day_metrics is None else _metrics_json(day_metrics),
        "adversarial_gap": gap,
        "prefetch_stalls": stalls,
        "resources": None if usage is None else usage.to_dict(),
        "environment": _environment(),
    }
    (output_directory / SUMMARY_FILE).write_text(
        json.dumps(summary, indent=2), encoding="utf-8"
    )

    return ExperimentResult(
        output_directory=output_directory,
        initial_metrics=initial_metrics,
        final_metrics=final_metrics,
        day_metrics=day_metrics,
        adversarial_gap=gap,
        reports=reports,
        models=models,
        day_prior=day_prior,
    )


@dataclass(frozen=True)
class AblationRow:
    """One configuration of the ablation grid and its final metrics."""

    index: int
    use_proj_loss: bool
    use_stlm: bool
    use_aslm: bool
    metrics: dict[float, MetricsReport]

    MARKS: ClassVar[dict[bool, str]] = {True: "✓", False: ""}

    def to_dict(self) -> dict[str, Any]:
        """Plain mapping for ``ablation.json``."""
        return {
            "index": self.index,
            "use_proj_loss": self.use_proj_loss,
            "use_stlm": self.use_stlm,
            "use_aslm": self.use_aslm,
            "metrics": _metrics_json(self.metrics),
        }


def ablation_grid(
    settings: "ExperimentSettings",
    *,
    show_progress: bool = False,
    console: Console | None = None,
) -> list[AblationRow]:
    """Train every toggle combination of :data:`ABLATION_ROWS`.

    All rows train against one shared day prior.

    Row ``i`` writes its artifacts to ``<output_directory>/row_<i>``; the shared
    day prior lives in ``<output_directory>/day``. ``ablation.json`` collects
    the rows.
    """
    output_directory = Path(settings.output_directory)
    settings.write(output_directory)
    day = train_day(
        replace(settings, output_directory=output_directory / "day"),
        show_progress=show_progress,
        console=console,
    )
    rows = []
    for index, (use_proj_loss, use_stlm, use_aslm) in enumerate(ABLATION_ROWS, start=1):
        row_settings = replace(
            settings.with_train(
                use_proj_loss=use_proj_loss, use_stlm=use_stlm, use_aslm=use_aslm
            ),
            output_directory=output_directory / f"row_{index}",
        )
        result = run_experiment(
            row_settings, day.depth_net, show_progress=show_progress, console=console
        )
        rows.append(
            AblationRow(index, use_proj_loss, use_stlm, use_aslm, result.final_metrics)
        )
    (output_directory / "ablation.json").write_text(
        json.dumps([row.to_dict() for row in rows], indent=2), encoding="utf-8"
    )
    return rows


@dataclass(frozen=True)
class SweepRow:
    """Final metrics of one window length."""

    frames: int
    metrics: dict[float, MetricsReport]

    @property
    def label(self) -> str:
        """Row label such as ``Frame(3)``."""
        return f"Frame({self.frames})"


def frame_sweep(
    settings: "ExperimentSettings",
    frames_list: Sequence[int],
    *,
    show_progress: bool = False,
    console: Console | None = None,
) -> list[SweepRow]:
    """Train one configuration per window length against one shared day prior.

    Raises:
        ValueError: If the list is empty or any length is below 2.
    """
    if not frames_list:
        raise ValueError("frame_sweep needs at least one window length")
    too_short = [frames for frames in frames_list if frames < 2]
    if too_short:
        raise ValueError(
            f"Window lengths {too_short} are too short; temporal differences need "
            "at least two frames"
        )
    output_directory = Path(settings.output_directory)
    settings.write(output_directory)
    day = train_day(
        replace(settings, output_directory=output_directory / "day"),
        show_progress=show_progress,
        console=console,
    )
    rows = []
    for frames in frames_list:
        frame_settings = replace(
            settings.with_train(frames=frames),
            output_directory=output_directory / f"frames_{frames}",
        )
        result = run_experiment(
            frame_settings, day.depth_net, show_progress=show_progress, console=console
        )
        rows.append(SweepRow(frames, result.final_metrics))
    (output_directory / "sweep.json").write_text(
        json.dumps(
            [
                {"frames": row.frames, "metrics": _metrics_json(row.metrics)}
                for row in rows
            ],
            indent=2,
        ),
        encoding="utf-8",
    )
    return rows
