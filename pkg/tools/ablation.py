"""
Ablation runner
Trains the full model and one variant per disabled component on the same
synthetic dataset, then scores interpolation and extrapolation frames

Usage:
    python tools/ablation.py --epochs 2000 --output artifacts/ablation
"""
import os
import sys
from pathlib import Path

import pandas as pd
import typer
from loguru import logger
from rich.console import Console
from rich.table import Table

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.core.config import TrainConfig
from app.core.logging import setup_logging
from app.unif.dataio import generate_sequence, preset, split_indices
from app.unif.evalmetrics import evaluate_mesh
from app.unif.surface import connected_components, default_bbox, extract_part, extract_union
from app.unif.trainer import Trainer

console = Console()

VARIANTS = {
    "full": {},
    "no_aps": {"aps": False},
    "no_lim": {"weights": {"lim": 0.0}},
    "no_sec": {"weights": {"sec": 0.0}},
    "no_perim": {"weights": {"perim": 0.0}},
}


def variant_config(base: TrainConfig, changes: dict) -> TrainConfig:
    data = base.model_dump()
    for key, value in changes.items():
        if isinstance(value, dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return TrainConfig(**data)


def run(skeleton_name: str, schedule: str, frame_count: int, stride: int, points: int, epochs: int,
        resolution: int, seed: int, output: Path) -> pd.DataFrame:
    skeleton, body = preset(skeleton_name)
    frames = generate_sequence(skeleton, body, schedule, frame_count, seed=seed,
                               points_per_frame=points)
    splits = split_indices(frame_count, stride)
    by_id = {f.frame_id: f for f in frames}
    train_frames = [by_id[i] for i in splits["train"]]
    base = TrainConfig(epochs=epochs, seed=seed, surface_points=points // 2,
                       local_points=points // 2, global_points=points // 2)

    rows = []
    for name, changes in VARIANTS.items():
        logger.info(f"Training variant {name}")
        model = Trainer(variant_config(base, changes), train_frames, skeleton, output / name).fit()
        for split in ("interp", "extrap"):
            for frame_id in splits[split]:
                frame = by_id[frame_id]
                mesh = extract_union(model, frame.pose, resolution=resolution, labels=False)
                report = evaluate_mesh(frame.points, mesh)
                bbox = default_bbox(model, frame.pose)
                parts = [connected_components(extract_part(model, frame.pose, n, bbox, resolution))
                         for n in range(skeleton.part_count)]
                rows.append({"variant": name, "split": split, "frame_id": frame_id,
                             "components": max(parts), **report.to_dict()})
    return pd.DataFrame(rows)


def print_table(results: pd.DataFrame) -> None:
    means = results.groupby(["variant", "split"], sort=False).mean(numeric_only=True).reset_index()
    table = Table(title="Ablation (mean over frames)")
    table.add_column("Variant", style="cyan")
    table.add_column("Split", style="magenta")
    for column in ("chamfer_mm", "p2s_mm", "f1_pct", "components"):
        table.add_column(column, style="green")
    for _, row in means.iterrows():
        table.add_row(row["variant"], row["split"], f"{row['chamfer_mm']:.3f}", f"{row['p2s_mm']:.3f}",
                      f"{row['f1_pct']:.2f}", f"{row['components']:.1f}")
    console.print(table)


def main(
    skeleton: str = typer.Option("arm2", help="Preset skeleton"),
    schedule: str = typer.Option("sweep:elbow:0:90", help="Pose schedule"),
    frames: int = typer.Option(40, min=1),
    stride: int = typer.Option(4, min=1),
    points: int = typer.Option(2000, min=2),
    epochs: int = typer.Option(2000, min=1),
    resolution: int = typer.Option(96, min=8),
    seed: int = typer.Option(0),
    output: Path = typer.Option(Path("artifacts/ablation")),
):
    """Train every ablation variant and write ablation.csv"""
    setup_logging(log_dir=output)
    results = run(skeleton, schedule, frames, stride, points, epochs, resolution, seed, output)
    output.mkdir(parents=True, exist_ok=True)
    results.to_csv(output / "ablation.csv", index=False)
    print_table(results)


if __name__ == "__main__":
    typer.run(main)
