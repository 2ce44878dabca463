"""Command-line entry point.

Exit codes: 0 success, 2 bad config/usage, 3 data or schema errors,
4 empty stage after filtering, 5 backend/serving errors, 6 I/O failure,
1 anything unexpected.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import pipeline
from .backends import MissingRecordingError, RemoteMalformedResponseError, RemoteTimeoutError, RemoteUnavailableError
from .catalog import SchemaViolationError, read_catalog
from .config import PipelineConfig, load_config
from .errors import BadConfigError, IoFailureError, PanctError
from .heatmap import export_heatmap_pair, write_grid_json
from .instructions import CORE_STAGES, EmptyStageError, Stage
from .metrics import read_predictions, split_count_table, sweep_table, write_predictions
from .nifti import DimsMismatchError, MalformedHeaderError, TruncatedDataError, UnsupportedDatatypeError
from .server import PortInUseError, create_app, serve

_EXIT_CODES: list[tuple[type, int]] = [
    (BadConfigError, 2),
    (PortInUseError, 5),
    (MissingRecordingError, 5),
    (RemoteUnavailableError, 5),
    (RemoteTimeoutError, 5),
    (RemoteMalformedResponseError, 5),
    (EmptyStageError, 4),
    (MalformedHeaderError, 3),
    (UnsupportedDatatypeError, 3),
    (TruncatedDataError, 3),
    (DimsMismatchError, 3),
    (SchemaViolationError, 3),
    (IoFailureError, 6),
    (PanctError, 3),
]


def _exit_code(exc: PanctError) -> int:
    for kind, code in _EXIT_CODES:
        if isinstance(exc, kind):
            return code
    return 1


def _load(config_path: str) -> PipelineConfig:
    return load_config(config_path)


def _header(config: PipelineConfig) -> str:
    return f"split_seed={config.split_seed} instruction_seed={config.instruction_seed}"


@click.group()
def cli() -> None:
    """Pancreas-CT grounding toolkit."""


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def ingest(config_path: str) -> None:
    """Volumes -> PNG store + annotation catalog."""
    config = _load(config_path)
    records, counts = pipeline.ingest(config)
    click.echo(_header(config))
    for (dataset, organ), count in sorted(counts.items()):
        click.echo(f"{dataset} [{organ}]: {count} slices selected")
    click.echo(f"catalog: {config.catalog_path} ({len(records)} records)")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--stage", "stage_name", type=click.Choice([s.value for s in Stage]), required=True)
@click.option("--threshold", type=float, default=None, help="bbox-ratio filter; defaults per stage")
def build(config_path: str, stage_name: str, threshold: float | None) -> None:
    """Build one stage's instruction dataset from the catalog."""
    config = _load(config_path)
    records = read_catalog(config.catalog_path)
    samples, report, paths = pipeline.build_stage(config, records, Stage(stage_name), threshold)
    click.echo(_header(config))
    click.echo(f"train: {paths['train']} ({sum(report.train_slices.values())} samples)")
    click.echo(f"test:  {paths['test']} ({sum(report.test_slices.values())} samples)")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--stage", "stage_name", type=click.Choice([s.value for s in Stage]), default=Stage.PANCREAS_DETECTION.value)
@click.option("--steps", type=int, default=10, show_default=True, help="thresholds 0, 0.1, ... in this many steps")
def sweep(config_path: str, stage_name: str, steps: int) -> None:
    """Build datasets across thresholds and print the split-count table."""
    config = _load(config_path)
    records = read_catalog(config.catalog_path)
    stage = Stage(stage_name)
    rows = []
    for i in range(steps):
        threshold = round(i / 10, 1)
        label = str(int(threshold * 100))
        try:
            _, report, _ = pipeline.build_stage(config, records, stage, threshold)
            rows.append((label, report.train_slices, report.test_slices))
        except EmptyStageError:
            rows.append((label, {}, {}))
    click.echo(_header(config))
    click.echo(split_count_table(rows))


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def manifest(config_path: str) -> None:
    """Emit the three-stage fine-tuning manifest."""
    config = _load(config_path)
    records = read_catalog(config.catalog_path)
    path = pipeline.build_manifest_file(config, records)
    click.echo(f"manifest: {path}")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--console", "console_dir", type=click.Path(exists=True, file_okay=False), default=None)
def serve_cmd(config_path: str, host: str | None, port: int | None, console_dir: str | None) -> None:
    """Serve the gateway over HTTP (optionally with the review console)."""
    config = _load(config_path)
    records = read_catalog(config.catalog_path)
    from .catalog import by_slice_id

    index = by_slice_id(records)
    backend = pipeline.make_backend(config, index)
    app = create_app(index, backend, png_root=config.png_root, console_dir=console_dir)
    serve(app, host=host or config.host, port=port or config.port)


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--stage", "stage_names", type=click.Choice([s.value for s in Stage]), multiple=True)
@click.option(
    "--predictions",
    "predictions_paths",
    type=click.Path(exists=True),
    multiple=True,
    help="score recorded outputs instead of the backend; repeat for a sweep, one table row per file",
)
@click.option("--label", default="run", show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
def evaluate(config_path: str, stage_names: tuple[str, ...], predictions_paths: tuple[str, ...], label: str, workers: int) -> None:
    """Score predictions files or the configured backend over the test split."""
    config = _load(config_path)
    records = read_catalog(config.catalog_path)
    stages = [Stage(s) for s in stage_names] or list(CORE_STAGES)
    config.reports_dir.mkdir(parents=True, exist_ok=True)
    click.echo(_header(config))

    if len(predictions_paths) == 1:
        runs: list[tuple[str, list | None]] = [(label, read_predictions(predictions_paths[0]))]
    elif predictions_paths:
        runs = [(Path(p).stem, read_predictions(p)) for p in predictions_paths]
    else:
        runs = [(label, None)]
    labeled_reports = []
    for run_label, predictions in runs:
        report, used = pipeline.evaluate_stages(config, records, stages, predictions, max_workers=workers)
        report_path = config.reports_dir / f"{run_label}.json"
        report_path.write_text(report.to_json(), encoding="utf-8")
        if predictions is None:
            write_predictions(used, config.reports_dir / f"{run_label}_predictions.jsonl")
        labeled_reports.append((run_label, report))
        if len(runs) == 1:
            click.echo(report.render_text())
        click.echo(f"report: {report_path}")
    click.echo(sweep_table(labeled_reports, label_header="Run"))


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--stage", "stage_name", type=click.Choice([s.value for s in Stage]), default=Stage.TUMOR_DETECTION.value)
@click.option("--predictions", "predictions_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def heatmap(config_path: str, stage_name: str, predictions_path: str | None, out_path: str | None) -> None:
    """Export GT vs prediction heatmaps (side-by-side PNG + grid JSON)."""
    config = _load(config_path)
    records = read_catalog(config.catalog_path)
    stage = Stage(stage_name)
    samples, _, _ = pipeline.build_stage(config, records, stage)
    test_samples = [s for s in samples if s.split == "test"]
    if predictions_path:
        predictions = read_predictions(predictions_path)
    else:
        _, predictions = pipeline.evaluate_stages(config, records, [stage])
    gt_grid, pred_grid = pipeline.heatmap_pair_for_stage(records, test_samples, predictions)

    config.reports_dir.mkdir(parents=True, exist_ok=True)
    png = Path(out_path) if out_path else config.reports_dir / f"heatmap_{stage.value}.png"
    export_heatmap_pair(gt_grid, pred_grid, png)
    write_grid_json(gt_grid, png.with_suffix(".gt.json"))
    write_grid_json(pred_grid, png.with_suffix(".pred.json"))
    click.echo(f"heatmaps: {png}")


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(130)
    except PanctError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(_exit_code(exc))


if __name__ == "__main__":
    main()
