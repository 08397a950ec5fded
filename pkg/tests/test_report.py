"""Tests for HTML report generation and depth/mask visualization."""

import json
from unittest.mock import patch

import matplotlib.pyplot as plt
import numpy as np
import pytest
import torch

from nightdepth.geometry import CameraIntrinsics
from nightdepth.metrics import evaluate
from nightdepth.networks import DepthNet, DepthNetConfig, PoseNet, PoseNetConfig
from nightdepth.report import (
    METRICS_LOG_FILE,
    RANGES_FILE,
    SUMMARY_JSON_FILE,
    render_html_report,
    visualize_sequence,
    write_depth_png,
    write_mask_png,
)
from nightdepth.synthdata import make_sample


def _metrics():
    report = evaluate(np.array([1.0, 2.0]), np.array([2.0, 2.0]), median_scale=False)
    return {"40": report.to_dict(), "60": report.to_dict()}


@pytest.fixture
def night_run(tmp_path):
    """A finished night run: summary plus a short metrics log."""
    run_dir = tmp_path / "run_night"
    run_dir.mkdir()

    summary_data = {
        "seed": 0,
        "steps": 4,
        "frames": 3,
        "toggles": {"use_proj_loss": True, "use_stlm": False, "use_aslm": True},
        "initial_metrics": _metrics(),
        "final_metrics": _metrics(),
        "day_metrics": None,
        "adversarial_gap": 0.125,
        "prefetch_stalls": 0,
        "resources": {
            "process_cpu_percent_avg": 50.0,
            "process_rss_avg_bytes": 1048576.0,
            "process_rss_peak_bytes": 2097152.0,
            "system_cpu_percent_avg": 25.0,
            "steps_per_second": 2.5,
        },
        "environment": {
            "python": "3.11",
            "platform": "linux",
            "torch_version": "2.3.0",
        },
    }
    (run_dir / SUMMARY_JSON_FILE).write_text(json.dumps(summary_data), "utf-8")

    records = [
        {"kind": "eval", "step": 0, "split": "val_night", "cap": 40.0, "abs_rel": 0.4},
        {"kind": "train", "step": 0, "self_total": 1.0, "photometric": 0.5},
        {"kind": "train", "step": 1, "self_total": 0.8, "photometric": 0.4},
        {"kind": "eval", "step": 2, "split": "val_night", "cap": 40.0, "abs_rel": 0.3},
    ]
    (run_dir / METRICS_LOG_FILE).write_text(
        "".join(json.dumps(record) + "\n" for record in records)
    )
    return run_dir


def test_report_shows_metrics_toggles_and_resources(night_run):
    with patch("nightdepth.report.plt.savefig") as mock_savefig:
        path = render_html_report(night_run)

    assert path == night_run / "report.html"
    # Loss curves and the Abs Rel trajectory
    assert mock_savefig.call_count == 2

    content = path.read_text()
    assert "<h1>nightdepth run report</h1>" in content
    assert "<td>0.250</td>" in content
    assert "STLM off" in content
    assert "0.1250" in content
    assert 'src="loss_curves.png"' in content
    assert 'src="abs_rel.png"' in content
    assert "2.0 MiB" in content
    assert "Day prior on day validation" not in content


def test_report_skips_loss_plot_without_training_records(night_run):
    text = (night_run / METRICS_LOG_FILE).read_text(encoding="utf-8")
    records = [json.loads(line) for line in text.splitlines()]
    evals = [record for record in records if record["kind"] == "eval"]
    (night_run / METRICS_LOG_FILE).write_text(
        "".join(json.dumps(record) + "\n" for record in evals)
    )
    with patch("nightdepth.report.plt.savefig") as savefig:
        content = render_html_report(night_run).read_text()
    assert savefig.call_count == 1
    assert "loss_curves.png" not in content


@pytest.mark.parametrize("artifact", [SUMMARY_JSON_FILE, METRICS_LOG_FILE])
def test_report_requires_both_artifacts(night_run, artifact):
    (night_run / artifact).unlink()
    with pytest.raises(FileNotFoundError, match=artifact):
        render_html_report(night_run)


def test_depth_and_mask_png_ranges(tmp_path):
    """Depth is normalized by its own range; masks always by [0, 1]."""
    depth = np.linspace(2.0, 30.0, 32).reshape(4, 8)
    assert write_depth_png(tmp_path / "depth.png", depth) == (2.0, 30.0)
    assert write_mask_png(tmp_path / "mask.png", np.full((4, 8), 1.5)) == (0.0, 1.0)
    assert plt.imread(tmp_path / "depth.png").shape[:2] == (4, 8)


def test_visualize_sequence_writes_two_images_per_frame(tmp_path):
    """One depth and one mask image per frame, with their ranges listed."""
    intrinsics = CameraIntrinsics.centered(64, 32)
    sample = make_sample(0, "val", 0, 3, intrinsics, "night")
    torch.manual_seed(0)
    widths = (4, 8, 16, 32)
    paths = visualize_sequence(
        DepthNet(DepthNetConfig(encoder_widths=widths)),
        PoseNet(PoseNetConfig(encoder_widths=widths)),
        sample,
        tmp_path / "vis",
    )
    names = [path.name for path in paths]
    assert names == [
        "depth_000.png", "depth_001.png", "depth_002.png",
        "mask_000.png", "mask_001.png", "mask_002.png",
    ]
    assert all(path.exists() for path in paths)
    lines = (tmp_path / "vis" / RANGES_FILE).read_text().splitlines()
    assert len(lines) == 6
    assert lines[3] == "mask_000.png 0 1"
    low, high = (float(value) for value in lines[0].split()[1:])
    assert 0 < low <= high
