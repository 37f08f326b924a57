"""
train: fit a part-union model to a dataset split
"""
import json
from pathlib import Path
from typing import Annotated, Optional

import typer
from rich.table import Table

from app.cli.common import console, guarded
from app.core.config import ExperimentConfig
from app.core.exceptions import DatasetError
from app.unif.dataio import load_dataset
from app.unif.objective import LossReport
from app.unif.trainer import MODEL_FILE, Trainer


def _flag(enabled: bool, value):
    return value if enabled else None


@guarded
def train(
    dataset: Annotated[Optional[Path], typer.Option(help="Dataset directory")] = None,
    output: Annotated[Optional[Path], typer.Option("--output", "-o", help="Run directory")] = None,
    config: Annotated[Optional[Path], typer.Option("--config", "-c", help="TOML experiment config")] = None,
    split: Annotated[Optional[str], typer.Option(help="Training split (train, interp, extrap, all)")] = None,
    epochs: Annotated[Optional[int], typer.Option(help="Epochs [5000]")] = None,
    lr: Annotated[Optional[float], typer.Option(help="Learning rate [1e-3]")] = None,
    lr_decay: Annotated[Optional[float], typer.Option(help="Decay factor per milestone [0.3]")] = None,
    frames_per_batch: Annotated[Optional[int], typer.Option(help="Frames per Adam step [4]")] = None,
    surface_points: Annotated[Optional[int], typer.Option(help="Surface samples per frame [5000]")] = None,
    local_points: Annotated[Optional[int], typer.Option(help="Local samples per frame [5000]")] = None,
    global_points: Annotated[Optional[int], typer.Option(help="Global samples per frame [5000]")] = None,
    union: Annotated[Optional[str], typer.Option(help="Training union: smooth, min, softmin [smooth]")] = None,
    q_ratio: Annotated[Optional[str], typer.Option(help="Seam split point: length, inverse [length]")] = None,
    rigidness_geometry: Annotated[Optional[str], typer.Option(help="posed, rest [posed]")] = None,
    seed: Annotated[Optional[int], typer.Option(help="Seed [0]")] = None,
    no_aps: Annotated[bool, typer.Option("--no-aps", help="Disable adjacent part seaming")] = False,
    no_lim: Annotated[bool, typer.Option("--no-lim", help="lambda_lim = 0 (default 1)")] = False,
    no_sec: Annotated[bool, typer.Option("--no-sec", help="lambda_sec = 0 (default 0.01)")] = False,
    no_perim: Annotated[bool, typer.Option("--no-perim", help="lambda_perim = 0 (default 0.001)")] = False,
    resume: Annotated[bool, typer.Option("--resume", help="Continue from the run's checkpoint")] = False,
) -> None:
    """Train with Adam; losses go to <output>/train_log.csv, the model to <output>/model.unif."""
    cfg = ExperimentConfig.load(
        config,
        dataset=dataset,
        output=output,
        split=split,
        train={
            "epochs": epochs,
            "lr": lr,
            "lr_decay": lr_decay,
            "frames_per_batch": frames_per_batch,
            "surface_points": surface_points,
            "local_points": local_points,
            "global_points": global_points,
            "union_train": union,
            "q_ratio": q_ratio,
            "rigidness_geometry": rigidness_geometry,
            "seed": seed,
            "aps": _flag(no_aps, False),
            "weights": {
                "lim": _flag(no_lim, 0.0),
                "sec": _flag(no_sec, 0.0),
                "perim": _flag(no_perim, 0.0),
            },
        },
    )
    data = load_dataset(cfg.dataset)
    frames = data.split(cfg.split)
    if not frames:
        raise DatasetError(f"split '{cfg.split}' of {cfg.dataset} is empty")

    cfg.output.mkdir(parents=True, exist_ok=True)
    with open(cfg.output / "experiment.json", "w", encoding="utf-8") as f:
        json.dump(json.loads(cfg.model_dump_json()), f, indent=2, sort_keys=True)

    trainer = Trainer(cfg.train, frames, data.skeleton, output_dir=cfg.output)
    trainer.fit(resume=resume)

    history = trainer.history_frame
    table = Table(title=f"Final losses ({len(history)} epochs)")
    for column in ("epoch",) + LossReport.TERMS + ("total", "lr"):
        table.add_column(column, style="cyan" if column == "epoch" else "green")
    if len(history):
        last = history.iloc[-1]
        table.add_row(str(int(last["epoch"])), *[f"{last[c]:.4g}" for c in LossReport.TERMS + ("total", "lr")])
    console.print(table)
    console.print(f"Model saved to [bold]{cfg.output / MODEL_FILE}[/bold]")
