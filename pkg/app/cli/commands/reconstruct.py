"""
reconstruct: union (and per-part) meshes of a trained model at one pose
"""
from pathlib import Path
from typing import Annotated, List, Optional

import typer
from loguru import logger

from app.cli.common import console, guarded, resolve_poses
from app.core.config import ExperimentConfig
from app.core.exceptions import ConfigError
from app.unif.model_io import load_model
from app.unif.neural_sdf import UnifModel
from app.unif.skeleton import Pose
from app.unif.surface import default_bbox, export_mesh, extract_part, extract_union


def write_meshes(model: UnifModel, pose: Pose, stem: Path, resolution: int, fmt: str,
                 parts: bool, union: str = "min", margin: float = 0.15) -> List[Path]:
    """
    Extract and export the union mesh (and part meshes) for one pose

    Returns:
        Written file paths; part meshes are always PLY with part_id
    """
    bbox = default_bbox(model, pose, margin)
    mesh = extract_union(model, pose, bbox, resolution, union=union)
    target = stem.with_suffix(f".{fmt}")
    export_mesh(mesh, target, fmt)
    written = [target]
    if parts:
        for n in range(model.part_count):
            part_path = stem.with_name(f"{stem.name}_part{n:02d}.ply")
            export_mesh(extract_part(model, pose, n, bbox, resolution), part_path, "ply")
            written.append(part_path)
    logger.info(f"Wrote {len(written)} mesh files for {stem.name}")
    return written


@guarded
def reconstruct(
    model: Annotated[Path, typer.Option("--model", "-m", help="model.unif or checkpoint file")],
    output: Annotated[Path, typer.Option("--output", "-o", help="Output directory")] = Path("artifacts/meshes"),
    pose: Annotated[Optional[Path], typer.Option(help="Pose JSON ({R, t} or {frames: [...]})")] = None,
    dataset: Annotated[Optional[Path], typer.Option(help="Take the pose from a dataset frame")] = None,
    frame: Annotated[Optional[int], typer.Option(help="Frame id inside the pose file / dataset")] = None,
    config: Annotated[Optional[Path], typer.Option("--config", "-c", help="TOML experiment config")] = None,
    resolution: Annotated[Optional[int], typer.Option(help="Grid cells per axis [64]")] = None,
    union: Annotated[Optional[str], typer.Option(help="Extraction union: min, smooth, softmin [min]")] = None,
    fmt: Annotated[str, typer.Option("--format", help="obj or ply")] = "obj",
    parts: Annotated[bool, typer.Option("--parts", help="Also write per-part PLY meshes")] = False,
    name: Annotated[str, typer.Option(help="Output file stem")] = "union",
) -> None:
    """Extract the zero level set at a pose (rest pose by default)."""
    cfg = ExperimentConfig.load(config, resolution=resolution, union_extract=union)
    net = load_model(model)
    poses = resolve_poses(net.skeleton, net.rest_pose, pose, dataset, "all", frame)
    if len(poses) > 1:
        raise ConfigError(f"{len(poses)} poses selected; pick one with --frame")
    output.mkdir(parents=True, exist_ok=True)
    written = write_meshes(net, poses[0], output / name, cfg.resolution, fmt, parts, cfg.union_extract)
    for path in written:
        console.print(f"[green]wrote[/green] {path}")
