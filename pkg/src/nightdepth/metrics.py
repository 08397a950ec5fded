"""Depth evaluation metrics with depth capping and median scaling."""

from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, fields
from typing import Any, ClassVar

import numpy as np
import torch

from .geometry import DepthMap

DEFAULT_CAPS = (40.0, 60.0)
DELTA_BASE = 1.25


@dataclass(frozen=True)
class MetricsReport:
    """The seven standard depth metrics over one or more images.

    Attributes:
        abs_rel (float): Mean ``|p − g| / g``.
        sq_rel (float): Mean ``(p − g)² / g``.
        rmse (float): Root mean squared error in meters.
        rmse_log (float): Root mean squared log error.
        delta1 (float): Fraction with ``max(p/g, g/p) < 1.25``.
        delta2 (float): Same with ``1.25²``.
        delta3 (float): Same with ``1.25³``.
        max_depth (float): Ground-truth cap in meters.
        n_pixels (int): Pixels evaluated.
    """

    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    max_depth: float
    n_pixels: int

    METRICS: ClassVar[tuple[str, ...]] = (
        "abs_rel",
        "sq_rel",
        "rmse",
        "rmse_log",
        "delta1",
        "delta2",
        "delta3",
    )
    LABELS: ClassVar[tuple[str, ...]] = (
        "Abs Rel",
        "Sq Rel",
        "RMSE",
        "RMSE log",
        "δ<1.25",
        "δ<1.25²",
        "δ<1.25³",
    )

    def as_record(self) -> str:
        """Single-line ``key=value`` record."""
        parts = [f"{name}={getattr(self, name):.6f}" for name in self.METRICS]
        parts.append(f"max_depth={self.max_depth:g}")
        parts.append(f"n_pixels={self.n_pixels}")
        return " ".join(parts)

    def table_row(self, precision: int = 3) -> list[str]:
        """Formatted values in column order (errors first, then accuracies)."""
        return [f"{getattr(self, name):.{precision}f}" for name in self.METRICS]

    def to_dict(self) -> dict[str, Any]:
        """Plain mapping for JSON records."""
        return asdict(self)


def _as_array(
    depth: DepthMap | torch.Tensor | np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(depth, DepthMap):
        values = depth.values.detach().cpu().numpy()
        mask = depth.mask.detach().cpu().numpy()
        return values.astype(np.float64).ravel(), mask.ravel()
    if isinstance(depth, torch.Tensor):
        depth = depth.detach().cpu().numpy()
    values = np.asarray(depth, dtype=np.float64).ravel()
    return values, np.ones(values.shape, dtype=bool)


def evaluate(
    pred: DepthMap | torch.Tensor | np.ndarray,
    gt: DepthMap | torch.Tensor | np.ndarray,
    max_depth: float = 60.0,
    median_scale: bool = True,
) -> MetricsReport:
    """Compare predicted depth with ground truth.

    Pixels count when the ground truth is valid, positive and no deeper than
    ``max_depth``. Predictions are not clamped.

    Args:
        pred: Predicted depth, same number of pixels as ``gt``.
        gt: Ground-truth depth (a :class:`DepthMap` mask marks pixels with GT).
        max_depth: Ground-truth cap in meters.
        median_scale: Multiply predictions by ``median(gt)/median(pred)`` over
            the evaluated pixels first.

    Returns:
        A :class:`MetricsReport`.

    Raises:
        ValueError: On size mismatch, no valid pixels, or non-positive
            predictions on evaluated pixels.
    """
    pred_values, _ = _as_array(pred)
    gt_values, gt_mask = _as_array(gt)
    if pred_values.shape != gt_values.shape:
        raise ValueError(
            f"Prediction has {pred_values.size} pixels, ground truth {gt_values.size}"
        )
    valid = gt_mask & (gt_values > 0) & (gt_values <= max_depth)
    if not valid.any():
        raise ValueError(f"No valid ground-truth pixels within {max_depth} m")

    p = pred_values[valid]
    g = gt_values[valid]
    if (p <= 0).any() or not np.isfinite(p).all():
        raise ValueError(
            "Predicted depth must be positive and finite on evaluated pixels"
        )
    if median_scale:
        p = p * (np.median(g) / np.median(p))

    ratio = np.maximum(p / g, g / p)
    diff = p - g
    return MetricsReport(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff**2 / g)),
        rmse=float(np.sqrt(np.mean(diff**2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < DELTA_BASE)),
        delta2=float(np.mean(ratio < DELTA_BASE**2)),
        delta3=float(np.mean(ratio < DELTA_BASE**3)),
        max_depth=float(max_depth),
        n_pixels=int(valid.sum()),
    )


def evaluate_caps(
    pred: DepthMap | torch.Tensor | np.ndarray,
    gt: DepthMap | torch.Tensor | np.ndarray,
    caps: Sequence[float] = DEFAULT_CAPS,
    median_scale: bool = True,
) -> dict[float, MetricsReport]:
    """Evaluate the same prediction at several depth caps."""
    return {
        float(cap): evaluate(pred, gt, max_depth=cap, median_scale=median_scale)
        for cap in caps
    }


def aggregate(reports: Iterable[MetricsReport]) -> MetricsReport:
    """Average per-image reports (each image weighs the same).

    Raises:
        ValueError: If ``reports`` is empty or mixes depth caps.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("Cannot aggregate zero reports")
    caps = {report.max_depth for report in reports}
    if len(caps) != 1:
        raise ValueError(
            f"Cannot aggregate reports with different caps: {sorted(caps)}"
        )
    values = {
        item.name: float(np.mean([getattr(report, item.name) for report in reports]))
        for item in fields(MetricsReport)
        if item.name in MetricsReport.METRICS
    }
    return MetricsReport(
        **values,
        max_depth=caps.pop(),
        n_pixels=sum(report.n_pixels for report in reports),
    )


__all__ = ["MetricsReport", "aggregate", "evaluate", "evaluate_caps"]
