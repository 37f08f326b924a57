"""
eval: p2s / Chamfer / recall / F-score of meshes against scan frames
"""
from pathlib import Path
from typing import Annotated, Dict, List, Optional

import pandas as pd
import typer
from loguru import logger
from rich.table import Table

from app.cli.common import console, guarded
from app.core.config import ExperimentConfig
from app.core.exceptions import ConfigError, DatasetError
from app.unif.dataio import ScanFrame, load_dataset, load_frame
from app.unif.evalmetrics import MetricReport, evaluate_mesh
from app.unif.model_io import load_model
from app.unif.surface import default_bbox, extract_union, read_mesh

METRIC_COLUMNS = ["p2s_mm", "chamfer_mm", "recall_pct", "precision_pct", "f1_pct"]
ROW_COLUMNS = ["frame_id", "split"] + METRIC_COLUMNS


def split_means(rows: pd.DataFrame) -> pd.DataFrame:
    """Arithmetic mean of every metric per split label; unlabeled rows are left out"""
    labeled = rows[rows["split"].fillna("") != ""]
    if labeled.empty:
        return pd.DataFrame(columns=["split", "frames"] + METRIC_COLUMNS)
    means = labeled.groupby("split", sort=True)[METRIC_COLUMNS].mean()
    means.insert(0, "frames", labeled.groupby("split", sort=True).size())
    return means.reset_index()


def _row(frame: ScanFrame, split: Optional[str], report: MetricReport) -> Dict:
    return {"frame_id": frame.frame_id, "split": split or "", **report.to_dict()}


def _print(rows: pd.DataFrame, means: pd.DataFrame) -> None:
    table = Table(title="Per-frame metrics")
    for column in ROW_COLUMNS:
        table.add_column(column, style="cyan" if column in ("frame_id", "split") else "green")
    for _, row in rows.iterrows():
        table.add_row(str(row["frame_id"]), str(row["split"]), *[f"{row[c]:.4f}" for c in METRIC_COLUMNS])
    console.print(table)
    if not means.empty:
        summary = Table(title="Split means")
        for column in ["split", "frames"] + METRIC_COLUMNS:
            summary.add_column(column, style="magenta" if column == "split" else "yellow")
        for _, row in means.iterrows():
            summary.add_row(str(row["split"]), str(int(row["frames"])), *[f"{row[c]:.4f}" for c in METRIC_COLUMNS])
        console.print(summary)


@guarded
def evaluate(
    output: Annotated[Path, typer.Option("--output", "-o", help="Per-frame CSV path")] = Path("artifacts/metrics.csv"),
    model: Annotated[Optional[Path], typer.Option("--model", "-m", help="Extract and score a trained model")] = None,
    mesh: Annotated[Optional[Path], typer.Option(help="Score an existing OBJ/PLY mesh")] = None,
    dataset: Annotated[Optional[Path], typer.Option(help="Ground-truth dataset directory")] = None,
    scan: Annotated[Optional[Path], typer.Option(help="Ground-truth frame PLY (instead of a dataset)")] = None,
    split: Annotated[str, typer.Option(help="Dataset split to score (train, interp, extrap, all)")] = "all",
    frame: Annotated[Optional[int], typer.Option(help="Single frame id")] = None,
    config: Annotated[Optional[Path], typer.Option("--config", "-c", help="TOML experiment config")] = None,
    resolution: Annotated[Optional[int], typer.Option(help="Grid cells per axis [64]")] = None,
    threshold_mm: Annotated[float, typer.Option(min=0.0, help="Recall / precision threshold in mm [1]")] = 1.0,
    samples: Annotated[Optional[int], typer.Option(min=1, help="Mesh samples (default: scan size)")] = None,
    seed: Annotated[int, typer.Option(help="Mesh sampling seed")] = 0,
) -> None:
    """Score meshes against scans; writes one CSV row per frame plus <output>_summary.csv with split means."""
    if (model is None) == (mesh is None):
        raise ConfigError("pass exactly one of --model or --mesh")
    if (dataset is None) == (scan is None):
        raise ConfigError("pass exactly one of --dataset or --scan")
    cfg = ExperimentConfig.load(config, resolution=resolution)

    if scan is not None:
        frames, split_of = [load_frame(scan)], lambda _: None
    else:
        data = load_dataset(dataset)
        frames, split_of = data.split(split), data.split_of
    if frame is not None:
        frames = [f for f in frames if f.frame_id == frame]
    if not frames:
        raise DatasetError("no frames selected for evaluation")
    if mesh is not None and len(frames) > 1:
        raise ConfigError("a single --mesh needs a single frame (use --frame or --scan)")

    net = load_model(model) if model is not None else None
    fixed_mesh = read_mesh(mesh) if mesh is not None else None
    rows: List[Dict] = []
    for item in frames:
        if net is not None:
            item.pose.check(net.skeleton)
            candidate = extract_union(net, item.pose, default_bbox(net, item.pose), cfg.resolution,
                                      union=cfg.union_extract, labels=False)
        else:
            candidate = fixed_mesh
        report = evaluate_mesh(item.points, candidate, threshold_mm / 1000.0, samples, seed)
        rows.append(_row(item, split_of(item.frame_id), report))
        logger.info(f"Frame {item.frame_id}: chamfer={report.chamfer_mm:.4f} mm f1={report.f1_pct:.2f}")

    table = pd.DataFrame(rows, columns=ROW_COLUMNS)
    output.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(output, index=False)
    means = split_means(table)
    if not means.empty:
        means.to_csv(output.with_name(output.stem + "_summary.csv"), index=False)
    _print(table, means)
