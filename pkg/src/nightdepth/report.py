"""Functions for generating visual artifacts from a training run.

:func:`render_html_report` reads ``summary.json`` and ``metrics.jsonl`` from a
run directory, plots the loss terms and the validation Abs Rel trajectory, and
renders a Jinja2 template to ``report.html``. :func:`visualize_sequence` writes
color-mapped depth and self-discovered mask images for one sequence.
"""

import json
from collections import defaultdict
from pathlib import Path
from typing import Any

import jinja2
import matplotlib

matplotlib.use("Agg")  # must be set before importing pyplot
import matplotlib.pyplot as plt
import numpy as np
import torch

from .losses import LossWeights, pair_terms
from .metrics import MetricsReport
from .networks import DepthNet, PoseNet
from .synthdata import GeneratedSample

SUMMARY_JSON_FILE = "summary.json"
METRICS_LOG_FILE = "metrics.jsonl"
LOSS_PLOT_FILE = "loss_curves.png"
ABS_REL_PLOT_FILE = "abs_rel.png"
REPORT_FILE = "report.html"
RANGES_FILE = "ranges.txt"

PLOT_DPI = 120
DEPTH_CMAP = "magma"
LOSS_TERMS = (
    "photometric",
    "smoothness",
    "geom_consistency",
    "projection",
    "self_total",
    "gan_generator",
    "gan_discriminator",
)


def _read_records(path: Path) -> list[dict[str, Any]]:
    lines = path.read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]


def _plot_losses(records: list[dict[str, Any]], target: Path) -> bool:
    train = [record for record in records if record.get("kind") == "train"]
    if not train:
        return False
    plt.figure()
    for term in LOSS_TERMS:
        points = [(r["step"], r[term]) for r in train if term in r]
        if points:
            steps, values = zip(*points, strict=True)
            plt.plot(steps, values, label=term)
    plt.xlabel("Step")
    plt.ylabel("Loss")
    plt.yscale("log")
    plt.title("Night-stage loss terms")
    plt.legend(fontsize="small")
    plt.savefig(target, dpi=PLOT_DPI, bbox_inches="tight")
    plt.close()
    return True


def _plot_abs_rel(records: list[dict[str, Any]], target: Path) -> bool:
    curves: dict[float, list[tuple[int, float]]] = defaultdict(list)
    for record in records:
        if record.get("kind") == "eval" and record.get("split") == "val_night":
            curves[float(record["cap"])].append((record["step"], record["abs_rel"]))
    if not curves:
        return False
    plt.figure()
    for cap, points in sorted(curves.items()):
        steps, values = zip(*sorted(points), strict=True)
        plt.plot(steps, values, marker="o", label=f"cap {cap:g} m")
    plt.xlabel("Step")
    plt.ylabel("Abs Rel")
    plt.title("Validation Abs Rel (night)")
    plt.legend()
    plt.savefig(target, dpi=PLOT_DPI, bbox_inches="tight")
    plt.close()
    return True


def _metric_rows(metrics: dict[str, Any] | None) -> list[dict[str, Any]]:
    if not metrics:
        return []
    rows = []
    for cap, values in metrics.items():
        report = MetricsReport(**values)
        rows.append({"cap": cap, "values": report.table_row()})
    return rows


def write_depth_png(path: Path, depth: np.ndarray) -> tuple[float, float]:
    """Write ``H×W`` depth as a magma PNG normalized by its own min/max.

    Returns:
        The ``(min, max)`` used for normalization.
    """
    low, high = float(np.min(depth)), float(np.max(depth))
    plt.imsave(
        path,
        np.asarray(depth, dtype=np.float64),
        cmap=DEPTH_CMAP,
        vmin=low,
        vmax=high,
        format="png",
        metadata={"Software": None},
    )
    return low, high


def write_mask_png(path: Path, mask: np.ndarray) -> tuple[float, float]:
    """Write an ``H×W`` mask in ``[0, 1]`` as a grayscale PNG."""
    plt.imsave(
        path,
        np.clip(np.asarray(mask, dtype=np.float64), 0.0, 1.0),
        cmap="gray",
        vmin=0.0,
        vmax=1.0,
        format="png",
        metadata={"Software": None},
    )
    return 0.0, 1.0


@torch.no_grad()
def visualize_sequence(
    depth_net: DepthNet,
    pose_net: PoseNet,
    sample: GeneratedSample,
    output_directory: Path,
    weights: LossWeights | None = None,
) -> list[Path]:
    """Write predicted depth and the self-discovered mask for every frame.

    Frame ``i`` uses frame ``i + 1`` as its source (the last frame uses
    ``i − 1``). Each image's normalization range is listed in ``ranges.txt``.

    Returns:
        The ``2·T`` written PNG paths, depth maps first.
    """
    output_directory = Path(output_directory)
    output_directory.mkdir(parents=True, exist_ok=True)
    weights = weights or LossWeights()
    depth_net.eval()
    pose_net.eval()
    frames = sample.num_frames
    images = [sample.image(index, dtype=torch.float32) for index in range(frames)]
    disparities = [depth_net(image) for image in images]
    depths = [depth_net.to_depth(disparity) for disparity in disparities]

    depth_paths, mask_paths, ranges = [], [], []
    for index in range(frames):
        path = output_directory / f"depth_{index:03d}.png"
        low, high = write_depth_png(path, depths[index].values[0, 0].numpy())
        depth_paths.append(path)
        ranges.append(f"{path.name} {low:.6g} {high:.6g}")
    for index in range(frames):
        source = index + 1 if index + 1 < frames else index - 1
        terms = pair_terms(
            images[index],
            images[source],
            depths[index],
            depths[source],
            disparities[index],
            pose_net(images[index], images[source]),
            sample.intrinsics,
            weights,
            use_projection=False,
        )
        mask = (terms.self_mask * terms.valid_mask)[0, 0].numpy()
        path = output_directory / f"mask_{index:03d}.png"
        low, high = write_mask_png(path, mask)
        mask_paths.append(path)
        ranges.append(f"{path.name} {low:.6g} {high:.6g}")

    (output_directory / RANGES_FILE).write_text(
        "\n".join(ranges) + "\n", encoding="utf-8"
    )
    return depth_paths + mask_paths


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"Missing required file: {path}")
    return path


def render_html_report(run_directory: Path) -> Path:
    """Generate an HTML report with plots from a run directory.

    Args:
        run_directory (Path): Directory written by a training command.

    Returns:
        Path: The written ``report.html``.

    Raises:
        FileNotFoundError: If ``summary.json`` or ``metrics.jsonl`` is missing in
        the run directory.

    Notes:
        Creates ``loss_curves.png`` and ``abs_rel.png`` next to the report when
        the log holds training and evaluation records respectively.
    """
    run_directory = Path(run_directory)

    summary_path = _require(run_directory / SUMMARY_JSON_FILE)
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    records = _read_records(_require(run_directory / METRICS_LOG_FILE))

    loss_plot = _plot_losses(records, run_directory / LOSS_PLOT_FILE)
    abs_rel_plot = _plot_abs_rel(records, run_directory / ABS_REL_PLOT_FILE)

    templates = jinja2.Environment(
        loader=jinja2.FileSystemLoader(Path(__file__).parent / "templates"),
        autoescape=True,
    )
    template = templates.get_template("report.html.j2")
    html_report = template.render(
        summary=summary,
        labels=MetricsReport.LABELS,
        initial_rows=_metric_rows(summary.get("initial_metrics")),
        final_rows=_metric_rows(summary.get("final_metrics")),
        day_rows=_metric_rows(summary.get("day_metrics")),
        loss_plot=LOSS_PLOT_FILE if loss_plot else None,
        abs_rel_plot=ABS_REL_PLOT_FILE if abs_rel_plot else None,
    )
    report_path = run_directory / REPORT_FILE
    report_path.write_text(html_report, encoding="utf-8")
    return report_path
