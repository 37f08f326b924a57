"""
Shared CLI helpers: console, error guard and pose resolution
"""
import functools
import json
from pathlib import Path
from typing import Callable, List, Optional

import typer
from loguru import logger
from rich.console import Console
from rich.markup import escape

from app.core.exceptions import DatasetError, MalformedFileError, UserError
from app.unif.dataio import load_dataset
from app.unif.skeleton import Pose, Skeleton, load_poses

console = Console()

EXIT_USER_ERROR = 1
EXIT_INTERNAL_ERROR = 2


def guarded(func: Callable) -> Callable:
    """
    Run a command and map failures to exit codes

    UserError subclasses exit with 1, any other exception with 2.
    """

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except typer.Exit:
            raise
        except UserError as e:
            logger.error(f"{type(e).__name__}: {e}")
            console.print(f"[red]Error:[/red] {escape(str(e))}")
            raise typer.Exit(code=EXIT_USER_ERROR) from e
        except Exception as e:
            logger.opt(exception=e).error(f"Unhandled exception in {func.__name__}: {e}")
            console.print(f"[red]Internal error ({type(e).__name__}):[/red] {escape(str(e))}")
            raise typer.Exit(code=EXIT_INTERNAL_ERROR) from e

    return wrapper


def read_pose_file(path: Path) -> List[Pose]:
    """A single {R, t} object or a {"frames": [...]} sequence"""
    if not path.exists():
        raise DatasetError(f"Pose file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise MalformedFileError(path, e.msg, f"line {e.lineno} column {e.colno}") from e
    if isinstance(data, dict) and "frames" in data:
        return load_poses(path)
    try:
        pose = Pose.from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedFileError(path, f"invalid pose data: {e}") from e
    pose.frame_id = int(data.get("frame_id", 0))
    return [pose]


def resolve_poses(skeleton: Skeleton, rest_pose: Pose, pose_file: Optional[Path] = None,
                  dataset: Optional[Path] = None, split: str = "all",
                  frame: Optional[int] = None) -> List[Pose]:
    """
    Poses selected by the command flags

    A pose file wins over a dataset; without either the rest pose is used.
    frame picks one frame id out of the selection.
    """
    if pose_file is not None:
        poses = read_pose_file(pose_file)
    elif dataset is not None:
        poses = [f.pose for f in load_dataset(dataset).split(split)]
    else:
        poses = [rest_pose]
    if frame is not None:
        poses = [p for p in poses if p.frame_id == frame]
        if not poses:
            raise DatasetError(f"frame {frame} not found")
    for pose in poses:
        pose.check(skeleton)
    return poses
