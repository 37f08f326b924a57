"""
generate: synthetic capsule-body scan sequences
"""
from pathlib import Path
from typing import Annotated

import typer
from loguru import logger
from rich.table import Table

from app.cli.common import console, guarded
from app.unif.dataio import PoseSchedule, generate_sequence, preset, save_dataset, split_indices


@guarded
def generate(
    output: Annotated[Path, typer.Option("--output", "-o", help="Dataset directory to create")] = Path("data/synthetic"),
    skeleton: Annotated[str, typer.Option(help="Preset: arm1, arm2, arm3, ybranch, stickman")] = "arm2",
    frames: Annotated[int, typer.Option(min=1, help="Number of frames")] = 40,
    schedule: Annotated[str, typer.Option(
        help="static | sweep:<joint>:<deg0>:<deg1>[:<axis>] | walk:<max_deg>[:<step_deg>]")] = "sweep:elbow:0:90",
    points: Annotated[int, typer.Option(min=1, help="Scan points per frame")] = 5000,
    jitter: Annotated[float, typer.Option(min=0.0, help="Gaussian noise std on points (m)")] = 0.0,
    stride: Annotated[int, typer.Option(min=1, help="Split stride (train / interp / extrap)")] = 10,
    seed: Annotated[int, typer.Option(help="RNG seed")] = 0,
) -> None:
    """Generate a posed capsule-body dataset with train/interp/extrap splits."""
    plan = PoseSchedule.parse(schedule)
    skel, body = preset(skeleton)
    sequence = generate_sequence(skel, body, plan, frames, seed=seed, points_per_frame=points, jitter=jitter)
    splits = split_indices(frames, stride)
    meta = {
        "preset": skeleton,
        "body": body.to_dict(),
        "schedule": schedule,
        "points_per_frame": points,
        "jitter": jitter,
        "seed": seed,
        "stride": stride,
        "splits": splits,
    }
    save_dataset(output, skel, sequence, meta)
    logger.info(f"Dataset written to {output}")

    table = Table(title=f"Dataset {output}")
    table.add_column("Split", style="cyan")
    table.add_column("Frames", style="green")
    table.add_column("Ids", style="dim")
    for name, ids in splits.items():
        table.add_row(name, str(len(ids)), ", ".join(str(i) for i in ids[:12]) + (" ..." if len(ids) > 12 else ""))
    console.print(table)
    console.print(f"[green]{frames} frames[/green], {points} points each, {skel.part_count} parts")
