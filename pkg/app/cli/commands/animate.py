"""
animate: numbered meshes along a pose sequence
"""
from pathlib import Path
from typing import Annotated, Optional

import typer
from rich.progress import track

from app.cli.commands.reconstruct import write_meshes
from app.cli.common import console, guarded, resolve_poses
from app.core.config import ExperimentConfig
from app.core.exceptions import ConfigError
from app.unif.model_io import load_model


@guarded
def animate(
    model: Annotated[Path, typer.Option("--model", "-m", help="model.unif or checkpoint file")],
    output: Annotated[Path, typer.Option("--output", "-o", help="Output directory")] = Path("artifacts/animation"),
    poses: Annotated[Optional[Path], typer.Option(help="Pose sequence JSON ({frames: [...]})")] = None,
    dataset: Annotated[Optional[Path], typer.Option(help="Use the poses of a dataset split")] = None,
    split: Annotated[str, typer.Option(help="Dataset split (train, interp, extrap, all)")] = "all",
    config: Annotated[Optional[Path], typer.Option("--config", "-c", help="TOML experiment config")] = None,
    resolution: Annotated[Optional[int], typer.Option(help="Grid cells per axis [64]")] = None,
    union: Annotated[Optional[str], typer.Option(help="Extraction union: min, smooth, softmin [min]")] = None,
    fmt: Annotated[str, typer.Option("--format", help="obj or ply")] = "obj",
    parts: Annotated[bool, typer.Option("--parts", help="Also write per-part PLY meshes")] = False,
) -> None:
    """Write mesh_0000, mesh_0001, ... for every pose in order."""
    if poses is None and dataset is None:
        raise ConfigError("animate needs --poses or --dataset")
    cfg = ExperimentConfig.load(config, resolution=resolution, union_extract=union)
    net = load_model(model)
    sequence = resolve_poses(net.skeleton, net.rest_pose, poses, dataset, split)
    output.mkdir(parents=True, exist_ok=True)
    for i, pose in enumerate(track(sequence, description="Extracting", console=console)):
        write_meshes(net, pose, output / f"mesh_{i:04d}", cfg.resolution, fmt, parts, cfg.union_extract)
    console.print(f"[green]{len(sequence)} meshes[/green] written to {output}")
