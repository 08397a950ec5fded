"""Unit tests for nightdepth.metrics.

This module checks the seven depth metrics against hand-computed instances and
a scalar per-pixel reference, the median-scaling invariance, depth capping and
per-image aggregation.
"""

import math

import numpy as np
import pytest
import torch

from nightdepth.geometry import DepthMap
from nightdepth.metrics import MetricsReport, aggregate, evaluate, evaluate_caps


def _reference(pred, gt, max_depth, median_scale):
    """Scalar per-pixel evaluation used as the oracle."""
    pairs = [(p, g) for p, g in zip(pred, gt, strict=True) if 0 < g <= max_depth]
    if median_scale:
        gt_median = float(np.median([g for _, g in pairs]))
        scale = gt_median / float(np.median([p for p, _ in pairs]))
        pairs = [(p * scale, g) for p, g in pairs]
    n = len(pairs)
    abs_rel = sum(abs(p - g) / g for p, g in pairs) / n
    sq_rel = sum((p - g) ** 2 / g for p, g in pairs) / n
    rmse = math.sqrt(sum((p - g) ** 2 for p, g in pairs) / n)
    rmse_log = math.sqrt(sum((math.log(p) - math.log(g)) ** 2 for p, g in pairs) / n)
    deltas = [
        sum(1 for p, g in pairs if max(p / g, g / p) < 1.25**k) / n for k in (1, 2, 3)
    ]
    return [abs_rel, sq_rel, rmse, rmse_log, *deltas], n


def test_perfect_prediction():
    """pred == gt gives zero errors and unit accuracies."""
    gt = np.linspace(1.0, 50.0, 20)
    report = evaluate(gt.copy(), gt, max_depth=60.0)
    assert (report.abs_rel, report.sq_rel, report.rmse, report.rmse_log) == (0, 0, 0, 0)
    assert (report.delta1, report.delta2, report.delta3) == (1.0, 1.0, 1.0)
    assert report.n_pixels == 20


def test_two_pixel_instance_without_scaling():
    """pred = [1, 2], gt = [2, 2] works out by hand."""
    report = evaluate(
        np.array([1.0, 2.0]), np.array([2.0, 2.0]), 60.0, median_scale=False
    )
    assert report.abs_rel == pytest.approx(0.25, abs=1e-12)
    assert report.sq_rel == pytest.approx(0.25, abs=1e-12)
    assert report.rmse == pytest.approx(math.sqrt(0.5), abs=1e-12)
    assert report.rmse_log == pytest.approx(math.log(2) / math.sqrt(2), abs=1e-12)
    assert report.delta1 == 0.5
    assert report.n_pixels == 2


def test_median_scaling_cancels_global_scale():
    """Scaling the prediction changes nothing once median scaling is on."""
    rng = np.random.default_rng(0)
    gt = rng.uniform(1.0, 40.0, size=64)
    pred = gt * rng.uniform(0.7, 1.4, size=64)
    base = evaluate(pred, gt)
    for factor in (2.0, 0.25, 8.0):
        assert evaluate(factor * pred, gt) == base
    assert evaluate(2 * gt, gt) == evaluate(gt, gt)
    scaled = evaluate(3.7 * pred, gt)
    np.testing.assert_allclose(
        [getattr(scaled, name) for name in MetricsReport.METRICS],
        [getattr(base, name) for name in MetricsReport.METRICS],
        rtol=1e-12,
    )


def test_matches_scalar_reference_on_random_instances():
    """Vectorized metrics agree with a per-pixel loop on many tiny instances."""
    rng = np.random.default_rng(1)
    for _ in range(200):
        size = int(rng.integers(1, 17))
        gt = rng.uniform(0.5, 80.0, size=size)
        gt[0] = rng.uniform(0.5, 30.0)
        pred = rng.uniform(0.5, 80.0, size=size)
        median_scale = bool(rng.integers(0, 2))
        report = evaluate(pred, gt, max_depth=40.0, median_scale=median_scale)
        expected, count = _reference(pred, gt, 40.0, median_scale)
        values = [getattr(report, name) for name in MetricsReport.METRICS]
        np.testing.assert_allclose(values, expected, atol=1e-9)
        assert report.n_pixels == count


def test_report_invariants_hold():
    """Accuracies are ordered and bounded; errors are nonnegative."""
    rng = np.random.default_rng(2)
    report = evaluate(rng.uniform(1, 60, size=100), rng.uniform(1, 60, size=100))
    assert 0.0 <= report.delta1 <= report.delta2 <= report.delta3 <= 1.0
    assert min(report.abs_rel, report.sq_rel, report.rmse, report.rmse_log) >= 0.0


def test_caps_never_add_pixels():
    """A tighter cap evaluates a subset of the pixels."""
    gt = np.array([5.0, 30.0, 45.0, 55.0, 70.0])
    reports = evaluate_caps(gt.copy(), gt, caps=(60.0, 40.0, 10.0))
    assert [reports[cap].n_pixels for cap in (60.0, 40.0, 10.0)] == [4, 2, 1]
    assert all(report.max_depth == cap for cap, report in reports.items())


def test_depth_map_mask_excludes_pixels():
    """Pixels without ground truth are ignored."""
    values = torch.tensor([[[[2.0, 4.0], [8.0, 16.0]]]], dtype=torch.float64)
    mask = torch.tensor([[[[True, True], [False, True]]]])
    pred = values.clone()
    pred[0, 0, 1, 0] = 100.0
    report = evaluate(pred, DepthMap(values, valid_mask=mask), median_scale=False)
    assert report.n_pixels == 3
    assert report.abs_rel == 0.0


@pytest.mark.parametrize(
    "pred, gt, match",
    [
        (np.ones(3), np.ones(4), "pixels"),
        (np.ones(2), np.array([0.0, 80.0]), "No valid"),
        (np.array([1.0, -1.0]), np.ones(2), "positive"),
        (np.array([1.0, np.nan]), np.ones(2), "finite"),
    ],
)
def test_evaluate_errors(pred, gt, match):
    """Size mismatches, empty valid sets and bad predictions are rejected."""
    with pytest.raises(ValueError, match=match):
        evaluate(pred, gt)


def test_aggregate_averages_per_image():
    """Each image weighs the same; pixel counts add up."""
    first = evaluate(np.array([1.0, 2.0]), np.array([2.0, 2.0]), median_scale=False)
    second = evaluate(np.full(6, 3.0), np.full(6, 3.0), median_scale=False)
    combined = aggregate([first, second])
    assert combined.abs_rel == pytest.approx(0.125)
    assert combined.delta1 == pytest.approx(0.75)
    assert combined.n_pixels == 8
    with pytest.raises(ValueError, match="zero reports"):
        aggregate([])
    other_cap = evaluate(np.ones(2), np.ones(2), max_depth=40.0)
    with pytest.raises(ValueError, match="different caps"):
        aggregate([first, other_cap])


def test_report_serialization():
    """Records are single-line key=value strings; table rows follow column order."""
    report = evaluate(np.array([1.0, 2.0]), np.array([2.0, 2.0]), median_scale=False)
    record = report.as_record()
    assert "\n" not in record
    assert record.startswith("abs_rel=0.250000 sq_rel=0.250000 rmse=0.707107")
    assert record.endswith("max_depth=60 n_pixels=2")
    assert report.table_row() == [
        "0.250",
        "0.250",
        "0.707",
        "0.490",
        "0.500",
        "0.500",
        "0.500",
    ]
    assert report.to_dict()["n_pixels"] == 2
    assert len(MetricsReport.LABELS) == len(MetricsReport.METRICS)
