"""Command-line entry point for generating data, training and evaluating.

The ``nightdepth`` CLI exposes one subcommand per stage of the procedure. Every
command that takes experiment settings accepts ``--config`` (TOML or JSON),
``--output-directory``, ``--seed`` and repeated ``--set section.field=value``
overrides, with CLI values overriding ``NIGHTDEPTH_*`` environment variables,
which override the settings file. The merged configuration is written to
``config.json`` in the output directory.

Exit codes: 0 on success, 1 on configuration problems (unknown keys, invalid
values, missing files or checkpoints), 2 on any other failure.
"""

import json
import os
import sys
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated

import click
import typer
from rich import print
from rich.markup import escape
from rich.table import Table

from .checkpoint import CheckpointError
from .settings import ConfigError, ExperimentSettings, parse_overrides

app = typer.Typer(add_completion=False, no_args_is_help=True)

ConfigOption = Annotated[
    Path | None,
    typer.Option(
        "--config",
        help=(
            "Path to a TOML or JSON settings file. CLI arguments override"
            " environment variables, which override file values."
        ),
    ),
]
OutputOption = Annotated[
    Path | None, typer.Option(help="Directory where result files will be saved.")
]
SeedOption = Annotated[int | None, typer.Option(help="Seed for data and weights.")]
SetOption = Annotated[
    list[str] | None,
    typer.Option(
        "--set",
        help="Override one setting, e.g. --set train.lr_peak=2e-4 (repeatable).",
    ),
]
CheckpointOption = Annotated[
    Path, typer.Option(help="Checkpoint written by train-day or train-night.")
]
DatasetOption = Annotated[
    Path | None,
    typer.Option(
        help=(
            "Directory of sequence folders (as written by gen-data). Defaults to"
            " the seeded synthetic validation split."
        )
    ),
]


@contextmanager
def _exit_codes() -> Iterator[None]:
    """Map exceptions raised by a command body onto the documented exit codes."""
    try:
        yield
    except (click.exceptions.Exit, click.ClickException):
        raise
    except (ConfigError, FileNotFoundError, CheckpointError) as exc:
        print(f"[bold red]Error:[/] {escape(str(exc))}")
        raise typer.Exit(code=1) from exc
    except Exception as exc:
        print(f"[bold red]Failed:[/] {type(exc).__name__}: {escape(str(exc))}")
        raise typer.Exit(code=2) from exc


def _load_settings(
    config: Path | None,
    output_directory: Path | None,
    seed: int | None,
    overrides: list[str] | None,
) -> ExperimentSettings:
    """Compose settings, create the output directory and write ``config.json``."""
    cli_overrides = parse_overrides(overrides or [])
    if seed is not None:
        cli_overrides["seed"] = seed
    if output_directory is not None:
        cli_overrides["output_directory"] = output_directory
    settings = ExperimentSettings.from_sources(
        cli_overrides=cli_overrides, env=os.environ, settings_file=config
    )
    settings.write()
    return settings


def _metrics_table(title: str, rows: Sequence[tuple[str, Sequence[str]]]) -> Table:
    from .metrics import MetricsReport

    table = Table(title=title, show_lines=False)
    table.add_column("", style="cyan", no_wrap=True)
    for label in MetricsReport.LABELS:
        table.add_column(label, justify="right")
    for name, values in rows:
        table.add_row(name, *values)
    return table


def _cap_rows(reports: dict) -> list[tuple[str, list[str]]]:
    return [(f"{cap:g} m", report.table_row()) for cap, report in reports.items()]


def _load_samples(settings: ExperimentSettings, dataset: Path | None) -> list:
    from .synthdata import load_dataset
    from .trainer import render_split

    if dataset is not None:
        return load_dataset(dataset)
    return render_split(settings, "val", "night")


def _load_depth_predictor(
    checkpoint: Path,
) -> Callable:
    """Return ``image -> depth`` for the depth network stored in ``checkpoint``."""
    from .checkpoint import restore_models

    restored = restore_models(checkpoint)
    depth_net = restored.depth_net
    if depth_net is None:
        raise CheckpointError(f"'{checkpoint}' holds no depth network")
    depth_net.eval()
    return lambda image: depth_net.predict(image)[1].values


@app.command("gen-data")
def gen_data(
    config: ConfigOption = None,
    output_directory: OutputOption = None,
    seed: SeedOption = None,
    overrides: SetOption = None,
):
    """Render the synthetic train (night), val (night) and day splits to disk.

    Each sequence lands in ``<output>/<split>/seq_NNNN`` with frame PNGs, depth
    binaries, moving-object masks, ``poses.txt`` and ``manifest.json``. The same
    seed always produces byte-identical files.
    """
    with _exit_codes():
        from .synthdata import save_sample
        from .trainer import render_split

        settings = _load_settings(config, output_directory, seed, overrides)
        table = Table(title="Generated sequences")
        table.add_column("Split", style="cyan")
        table.add_column("Domain")
        table.add_column("Sequences", justify="right")
        for split, domain in (("train", "night"), ("val", "night"), ("day", "day")):
            samples = render_split(settings, split, domain)
            for index, sample in enumerate(samples):
                directory = settings.output_directory / split / f"seq_{index:04d}"
                save_sample(sample, directory)
            table.add_row(split, domain, str(len(samples)))
        print(table)
        print("[bold green]Done[/] ->", settings.output_directory)


@app.command("train-day")
def train_day(
    config: ConfigOption = None,
    output_directory: OutputOption = None,
    seed: SeedOption = None,
    overrides: SetOption = None,
):
    """Pretrain the daytime depth network and freeze it into ``day_model.ckpt``."""
    with _exit_codes():
        from .trainer import train_day as run_train_day

        settings = _load_settings(config, output_directory, seed, overrides)
        result = run_train_day(settings, show_progress=True)
        print(_metrics_table("Day prior (day validation)", _cap_rows(result.metrics)))
        print("[bold green]Done[/] ->", settings.output_directory)


@app.command("train-night")
def train_night(
    config: ConfigOption = None,
    output_directory: OutputOption = None,
    seed: SeedOption = None,
    overrides: SetOption = None,
    day_checkpoint: Annotated[
        Path | None,
        typer.Option(
            help="Frozen day model from train-day; pretrains one first if omitted."
        ),
    ] = None,
):
    """Train the night depth network against the frozen day prior."""
    with _exit_codes():
        from .checkpoint import restore_models
        from .trainer import run_experiment

        settings = _load_settings(config, output_directory, seed, overrides)
        day_prior = None
        if day_checkpoint is not None:
            day_prior = restore_models(day_checkpoint).depth_net
            if day_prior is None:
                raise CheckpointError(f"'{day_checkpoint}' holds no depth network")
        result = run_experiment(settings, day_prior, show_progress=True)
        rows = [
            (f"before, {cap:g} m", result.initial_metrics[cap].table_row())
            for cap in result.initial_metrics
        ] + [
            (f"after, {cap:g} m", result.final_metrics[cap].table_row())
            for cap in result.final_metrics
        ]
        print(_metrics_table("Night validation", rows))
        print(f"adversarial gap: {result.adversarial_gap:.4f}")
        print("[bold green]Done[/] ->", settings.output_directory)


@app.command("eval")
def evaluate(
    checkpoint: CheckpointOption,
    dataset: DatasetOption = None,
    median_scale: Annotated[
        bool,
        typer.Option(
            "--median-scale/--no-median-scale",
            help="Scale predictions by median(gt)/median(pred) per image.",
        ),
    ] = True,
    config: ConfigOption = None,
    output_directory: OutputOption = None,
    seed: SeedOption = None,
    overrides: SetOption = None,
):
    """Evaluate a checkpoint's depth network at the 40 m and 60 m caps.

    Prints one row per cap in the column order Abs Rel, Sq Rel, RMSE, RMSE log,
    δ<1.25, δ<1.25², δ<1.25³ and writes ``eval.json``.
    """
    with _exit_codes():
        from .metrics import DEFAULT_CAPS
        from .trainer import evaluate_predictor

        settings = _load_settings(config, output_directory, seed, overrides)
        predict = _load_depth_predictor(checkpoint)
        samples = _load_samples(settings, dataset)
        reports = evaluate_predictor(predict, samples, DEFAULT_CAPS, median_scale)
        payload = {
            "checkpoint": str(checkpoint),
            "median_scale": median_scale,
            "sequences": len(samples),
            "metrics": {
                f"{cap:g}": report.to_dict() for cap, report in reports.items()
            },
        }
        (settings.output_directory / "eval.json").write_text(
            json.dumps(payload, indent=2), encoding="utf-8"
        )
        print(_metrics_table("Depth evaluation", _cap_rows(reports)))
        for report in reports.values():
            print(report.as_record())
        print("[bold green]Done[/] ->", settings.output_directory)


@app.command("ablate")
def ablate(
    config: ConfigOption = None,
    output_directory: OutputOption = None,
    seed: SeedOption = None,
    overrides: SetOption = None,
):
    """Train all eight projection/STLM/ASLM combinations against one day prior."""
    with _exit_codes():
        from .metrics import DEFAULT_CAPS, MetricsReport
        from .trainer import AblationRow, ablation_grid

        settings = _load_settings(config, output_directory, seed, overrides)
        rows = ablation_grid(settings, show_progress=True)
        for cap in DEFAULT_CAPS:
            table = Table(title=f"Ablation ({cap:g} m cap)")
            for header in ("#", "Proj", "STLM", "ASLM", *MetricsReport.LABELS):
                table.add_column(header, justify="right")
            for row in rows:
                table.add_row(
                    str(row.index),
                    AblationRow.MARKS[row.use_proj_loss],
                    AblationRow.MARKS[row.use_stlm],
                    AblationRow.MARKS[row.use_aslm],
                    *row.metrics[cap].table_row(),
                )
            print(table)
        print("[bold green]Done[/] ->", settings.output_directory)


@app.command("visualize")
def visualize(
    checkpoint: CheckpointOption,
    dataset: DatasetOption = None,
    index: Annotated[int, typer.Option(help="Sequence to render.")] = 0,
    config: ConfigOption = None,
    output_directory: OutputOption = None,
    seed: SeedOption = None,
    overrides: SetOption = None,
):
    """Write color-mapped depth and grayscale self-discovered masks for one sequence.

    Produces ``depth_NNN.png`` and ``mask_NNN.png`` per frame plus ``ranges.txt``
    with the normalization range of every image.
    """
    with _exit_codes():
        from .checkpoint import restore_models
        from .report import visualize_sequence

        settings = _load_settings(config, output_directory, seed, overrides)
        restored = restore_models(checkpoint)
        if restored.depth_net is None or restored.pose_net is None:
            raise CheckpointError(
                f"'{checkpoint}' needs both a depth and a pose network"
            )
        samples = _load_samples(settings, dataset)
        if not 0 <= index < len(samples):
            raise ConfigError(f"--index {index} is outside 0..{len(samples) - 1}")
        paths = visualize_sequence(
            restored.depth_net,
            restored.pose_net,
            samples[index],
            settings.output_directory,
            settings.loss,
        )
        print(f"wrote {len(paths)} images")
        print("[bold green]Done[/] ->", settings.output_directory)


def _parse_frames(value: str) -> list[int]:
    try:
        frames = [int(part) for part in value.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(
            f"--frames must be comma-separated integers, got {value!r}"
        ) from exc
    if not frames:
        raise ConfigError("--frames needs at least one window length")
    too_short = [count for count in frames if count < 2]
    if too_short:
        raise ConfigError(
            f"--frames {too_short} rejected: "
            "temporal differences need at least two frames"
        )
    return frames


@app.command("sweep-frames")
def sweep_frames(
    frames: Annotated[
        str, typer.Option(help="Comma-separated window lengths, e.g. 2,3,5.")
    ] = "2,3,5",
    config: ConfigOption = None,
    output_directory: OutputOption = None,
    seed: SeedOption = None,
    overrides: SetOption = None,
):
    """Train one configuration per window length and tabulate the results."""
    with _exit_codes():
        from .metrics import DEFAULT_CAPS
        from .trainer import frame_sweep

        frames_list = _parse_frames(frames)
        settings = _load_settings(config, output_directory, seed, overrides)
        rows = frame_sweep(settings, frames_list, show_progress=True)
        for cap in DEFAULT_CAPS:
            table_rows = [(row.label, row.metrics[cap].table_row()) for row in rows]
            print(_metrics_table(f"Window length ({cap:g} m cap)", table_rows))
        print("[bold green]Done[/] ->", settings.output_directory)


@app.command()
def report(
    run: Annotated[
        Path | None,
        typer.Option(
            "--run",
            help=(
                "Run directory holding summary.json and metrics.jsonl. Defaults "
                "to results/run_001 when present; a terminal is asked otherwise."
            ),
        ),
    ] = None,
):
    """Render an HTML report with loss and Abs Rel plots from a training run.

    Raises:
        typer.BadParameter: If ``--run`` is missing, the default run directory
            does not exist and stdin is not a terminal.
    """
    from .report import render_html_report

    selected = run
    if selected is None:
        fallback = Path("results/run_001")
        if fallback.exists():
            selected = fallback
        elif sys.stdin.isatty():  # pragma: no cover
            selected = typer.prompt(
                "Enter the run directory containing summary.json",
                type=Path,
            )
        else:
            raise typer.BadParameter(
                "Pass --run; results/run_001 does not exist"
            )
    with _exit_codes():
        path = render_html_report(selected)
        print("[bold green]Done[/] ->", path)


def run(argv: Sequence[str] | None = None) -> int:
    """Invoke the CLI and return its exit code instead of exiting.

    Usage errors (unknown commands or options) count as configuration problems
    and return 1.
    """
    try:
        result = app(
            args=list(argv) if argv is not None else None,
            prog_name="nightdepth",
            standalone_mode=False,
        )
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 2
    return result if isinstance(result, int) else 0


def main() -> None:
    """Console-script entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
