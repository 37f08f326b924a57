"""
Synthetic scans
Capsule bodies on a skeleton, pose schedules, scan sampling with hidden
surface rejection, train/interp/extrap splits and the dataset directory
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from plyfile import PlyData, PlyElement, PlyElementParseError, PlyHeaderParseError, PlyParseError

from app.core.exceptions import ConfigError, DatasetError, MalformedFileError
from app.unif.skeleton import Pose, Skeleton, posed_joints, rotation_matrix

HIDDEN_SURFACE_TOL = 1e-6
AXES = {"x": np.array([1.0, 0.0, 0.0]), "y": np.array([0.0, 1.0, 0.0]), "z": np.array([0.0, 0.0, 1.0])}


# ============================================================================
# Data types
# ============================================================================

@dataclass(eq=False)
class ScanFrame:
    """Oriented point cloud of one frame and the pose it was captured in"""
    points: np.ndarray
    normals: np.ndarray
    pose: Pose
    frame_id: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if len(self.points) == 0:
            raise DatasetError(f"frame {self.frame_id} has no points")
        if self.points.shape != self.normals.shape:
            raise DatasetError(f"frame {self.frame_id}: points and normals differ in count")
        lengths = np.linalg.norm(self.normals, axis=1)
        if np.abs(lengths - 1.0).max() > 1e-6:
            raise DatasetError(f"frame {self.frame_id}: normals are not unit length")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class CapsuleBody:
    """Per-bone capsule radius and optional radial bulge amplitude"""
    radii: List[float]
    bulge: Optional[List[float]] = None

    def __post_init__(self):
        self.radii = [float(r) for r in self.radii]
        if any(r <= 0.0 for r in self.radii):
            raise ConfigError("capsule radii must be positive")
        if self.bulge is None:
            self.bulge = [0.0] * len(self.radii)
        self.bulge = [float(b) for b in self.bulge]
        if len(self.bulge) != len(self.radii):
            raise ConfigError("bulge needs one entry per capsule")
        if any(b <= -1.0 for b in self.bulge):
            raise ConfigError("bulge amplitude must be > -1")

    def check(self, skeleton: Skeleton) -> "CapsuleBody":
        if len(self.radii) != skeleton.part_count:
            raise ConfigError(f"body has {len(self.radii)} capsules but the skeleton has {skeleton.part_count} bones")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {"radii": self.radii, "bulge": self.bulge}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CapsuleBody":
        return cls(radii=data["radii"], bulge=data.get("bulge"))


# ============================================================================
# Presets
# ============================================================================

def _chain(names: Sequence[str], positions: Sequence[Sequence[float]]) -> Skeleton:
    return Skeleton(
        joint_names=list(names),
        parent=[None] + list(range(len(names) - 1)),
        rest_joint_pos=np.array(positions, dtype=np.float64),
        bones=[(i, i + 1) for i in range(len(names) - 1)],
    )


def preset(name: str) -> Tuple[Skeleton, CapsuleBody]:
    """
    Built-in skeleton + capsule body

    arm1 (1 bone), arm2 (2 bones, elbow), arm3 (3 bones, elbow + wrist),
    ybranch (3 bones from one root) and stickman (11 bones).
    """
    if name == "arm1":
        return _chain(["shoulder", "elbow"], [[0, 0, 0], [0.4, 0, 0]]), CapsuleBody([0.06])
    if name == "arm2":
        skeleton = _chain(["shoulder", "elbow", "wrist"], [[0, 0, 0], [0.4, 0, 0], [0.75, 0, 0]])
        return skeleton, CapsuleBody([0.06, 0.05])
    if name == "arm3":
        skeleton = _chain(["shoulder", "elbow", "wrist", "hand"],
                          [[0, 0, 0], [0.4, 0, 0], [0.75, 0, 0], [0.9, 0, 0]])
        return skeleton, CapsuleBody([0.06, 0.05, 0.04])
    if name == "ybranch":
        skeleton = Skeleton(
            joint_names=["base", "fork", "left", "right"],
            parent=[None, 0, 1, 1],
            rest_joint_pos=np.array([[0, 0, 0], [0, 0.4, 0], [-0.25, 0.7, 0], [0.25, 0.7, 0]], dtype=np.float64),
            bones=[(0, 1), (1, 2), (1, 3)],
        )
        return skeleton, CapsuleBody([0.06, 0.045, 0.045])
    if name == "stickman":
        names = ["pelvis", "chest", "head", "l_elbow", "l_hand", "r_elbow", "r_hand",
                 "l_knee", "l_foot", "r_knee", "r_foot", "neck"]
        positions = [[0, 1.0, 0], [0, 1.45, 0], [0, 1.75, 0], [-0.3, 1.45, 0], [-0.55, 1.45, 0],
                     [0.3, 1.45, 0], [0.55, 1.45, 0], [-0.1, 0.55, 0], [-0.1, 0.1, 0],
                     [0.1, 0.55, 0], [0.1, 0.1, 0], [0, 1.55, 0]]
        parent = [None, 0, 11, 1, 3, 1, 5, 0, 7, 0, 9, 1]
        bones = [(0, 1), (1, 11), (11, 2), (1, 3), (3, 4), (1, 5), (5, 6), (0, 7), (7, 8), (0, 9), (9, 10)]
        skeleton = Skeleton(names, parent, np.array(positions, dtype=np.float64), bones)
        radii = [0.12, 0.05, 0.1, 0.045, 0.04, 0.045, 0.04, 0.07, 0.055, 0.07, 0.055]
        return skeleton, CapsuleBody(radii)
    raise ConfigError(f"unknown skeleton preset '{name}' (arm1, arm2, arm3, ybranch, stickman)")


# ============================================================================
# Analytic capsule SDF
# ============================================================================

def _segment_param(points: np.ndarray, head: np.ndarray, tail: np.ndarray) -> np.ndarray:
    axis = tail - head
    return np.clip(((points - head) @ axis) / (axis @ axis), 0.0, 1.0)


def capsule_sdf(points, head, tail, radius: float, bulge: float = 0.0) -> np.ndarray:
    """
    Profile SDF |x - c(s*)| - r(s*) of a (bulged) capsule

    s* is the clamped projection parameter on the axis and
    r(s) = radius * (1 + bulge * sin(pi s)); with zero bulge this is the
    exact capsule distance.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    head, tail = np.asarray(head, dtype=np.float64), np.asarray(tail, dtype=np.float64)
    s = _segment_param(points, head, tail)
    closest = head + s[:, None] * (tail - head)
    return np.linalg.norm(points - closest, axis=1) - radius * (1.0 + bulge * np.sin(np.pi * s))


def body_sdf(points, skeleton: Skeleton, body: CapsuleBody, pose: Pose) -> Tuple[np.ndarray, np.ndarray]:
    """Union SDF of the posed capsule body and the (M, N) per-capsule values"""
    body.check(skeleton)
    joints = posed_joints(skeleton, pose)
    per_part = np.stack([
        capsule_sdf(points, joints[h], joints[t], body.radii[n], body.bulge[n])
        for n, (h, t) in enumerate(skeleton.bones)
    ], axis=1)
    return per_part.min(axis=1), per_part


def _orthonormal_pair(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    ref = AXES["x"] if abs(u[0]) < 0.9 else AXES["y"]
    e1 = np.cross(u, ref)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(u, e1)


def sample_capsule(head, tail, radius: float, bulge: float, count: int,
                   rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Area-weighted points and outward normals on one capsule surface

    The side is sampled by rejection on r(s); the two hemispherical caps
    (radius r(0) = r(1) = radius) by uniform directions.
    """
    head, tail = np.asarray(head, dtype=np.float64), np.asarray(tail, dtype=np.float64)
    axis = tail - head
    length = np.linalg.norm(axis)
    u = axis / length
    e1, e2 = _orthonormal_pair(u)

    side_area = 2.0 * np.pi * radius * length * (1.0 + max(bulge, 0.0) * 2.0 / np.pi)
    cap_area = 4.0 * np.pi * radius ** 2
    n_side = int(rng.binomial(count, side_area / (side_area + cap_area)))
    n_cap = count - n_side

    # Side: accept s with probability r(s) / r_max
    r_max = radius * (1.0 + max(bulge, 0.0))
    s = np.empty(0)
    while len(s) < n_side:
        cand = rng.random(2 * n_side + 8)
        keep = rng.random(len(cand)) * r_max <= radius * (1.0 + bulge * np.sin(np.pi * cand))
        s = np.concatenate([s, cand[keep]])
    s = s[:n_side]
    phi = rng.random(n_side) * 2.0 * np.pi
    radial = np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2
    r = radius * (1.0 + bulge * np.sin(np.pi * s))
    dr = radius * bulge * np.pi * np.cos(np.pi * s)
    side_points = head + (s * length)[:, None] * u + r[:, None] * radial
    side_normals = radial - (dr / length)[:, None] * u
    side_normals /= np.linalg.norm(side_normals, axis=1, keepdims=True)

    # Caps: a direction on the sphere, folded onto the outer hemisphere
    dirs = rng.normal(size=(n_cap, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    along = dirs @ u
    at_tail = rng.random(n_cap) < 0.5
    dirs = np.where((at_tail & (along < 0) | ~at_tail & (along > 0))[:, None], dirs - 2.0 * along[:, None] * u, dirs)
    centers = np.where(at_tail[:, None], tail, head)
    cap_points = centers + radius * dirs

    return np.concatenate([side_points, cap_points]), np.concatenate([side_normals, dirs])


# ============================================================================
# Poses and schedules
# ============================================================================

def bend_pose(skeleton: Skeleton, rotations: Dict[int | str, np.ndarray]) -> Pose:
    """
    Per-bone rigid motions from rotations applied at joints

    A rotation at joint j turns every bone below j about j's position;
    rotations further down the tree compose on top of their ancestors'.

    Args:
        skeleton: Skeleton
        rotations: Joint (index or name) -> 3x3 rotation

    Returns:
        Pose with one motion per bone
    """
    joint_rot = {}
    for key, rot in rotations.items():
        j = skeleton.joint_index(key) if isinstance(key, str) else int(key)
        joint_rot[j] = np.asarray(rot, dtype=np.float64)

    count = skeleton.part_count
    R = np.tile(np.eye(3), (count, 1, 1))
    t = np.zeros((count, 3))
    done = [False] * count

    def motion_of(n: int) -> Tuple[np.ndarray, np.ndarray]:
        if done[n]:
            return R[n], t[n]
        head, _ = skeleton.bones[n]
        if head in skeleton.bone_of_joint:
            parent_R, parent_t = motion_of(skeleton.bone_of_joint[head])
        else:
            parent_R, parent_t = np.eye(3), np.zeros(3)
        local = joint_rot.get(head, np.eye(3))
        pivot = skeleton.rest_joint_pos[head]
        # x -> parent(local (x - pivot) + pivot)
        R[n] = parent_R @ local
        t[n] = parent_R @ (pivot - local @ pivot) + parent_t
        done[n] = True
        return R[n], t[n]

    for n in range(count):
        motion_of(n)
    return Pose(R, t)


@dataclass
class PoseSchedule:
    """
    Parsed schedule spec

    static | sweep:<joint>:<deg0>:<deg1>[:<axis>] | walk:<max_deg>[:<step_deg>]
    """
    kind: str
    joint: Optional[str] = None
    start_deg: float = 0.0
    end_deg: float = 0.0
    axis: str = "z"
    step_deg: float = 5.0
    spec: str = "static"

    @classmethod
    def parse(cls, spec: str) -> "PoseSchedule":
        parts = spec.strip().split(":")
        try:
            if parts[0] == "static" and len(parts) == 1:
                return cls(kind="static", spec=spec)
            if parts[0] == "sweep" and len(parts) in (4, 5):
                axis = parts[4] if len(parts) == 5 else "z"
                if axis not in AXES:
                    raise ValueError(f"axis must be x, y or z, got '{axis}'")
                return cls(kind="sweep", joint=parts[1], start_deg=float(parts[2]), end_deg=float(parts[3]),
                           axis=axis, spec=spec)
            if parts[0] == "walk" and len(parts) in (2, 3):
                step = float(parts[2]) if len(parts) == 3 else 5.0
                max_deg = float(parts[1])
                if max_deg < 0 or step < 0:
                    raise ValueError("walk angles must be non-negative")
                return cls(kind="walk", end_deg=max_deg, step_deg=step, spec=spec)
        except ValueError as e:
            raise ConfigError(f"invalid pose schedule '{spec}': {e}") from e
        raise ConfigError(
            f"invalid pose schedule '{spec}' (static | sweep:<joint>:<deg0>:<deg1>[:<axis>] | walk:<max_deg>[:<step>])"
        )

    def poses(self, skeleton: Skeleton, frames: int, seed: int = 0) -> List[Pose]:
        if frames < 1:
            raise ConfigError("frames must be >= 1")
        if self.kind == "static":
            return [Pose.identity(skeleton.part_count) for _ in range(frames)]

        if self.kind == "sweep":
            joint = skeleton.joint_index(self.joint)
            if joint not in {h for h, _ in skeleton.bones} or skeleton.parent[joint] is None:
                raise ConfigError(f"joint '{self.joint}' is not an inner joint of the skeleton")
            angles = np.linspace(self.start_deg, self.end_deg, frames) if frames > 1 else [self.start_deg]
            return [
                bend_pose(skeleton, {joint: rotation_matrix(AXES[self.axis], np.deg2rad(a))})
                for a in angles
            ]

        # walk: bounded random walk of (z, x) bend angles at every inner joint
        rng = np.random.default_rng(seed)
        inner = sorted({h for h, _ in skeleton.bones if skeleton.parent[h] is not None})
        state = np.zeros((len(inner), 2))
        poses = []
        for _ in range(frames):
            rotations = {
                j: rotation_matrix(AXES["z"], np.deg2rad(a[0])) @ rotation_matrix(AXES["x"], np.deg2rad(a[1]))
                for j, a in zip(inner, state)
            }
            poses.append(bend_pose(skeleton, rotations))
            state = np.clip(state + rng.normal(scale=self.step_deg, size=state.shape), -self.end_deg, self.end_deg)
        return poses


# ============================================================================
# Generation
# ============================================================================

def generate_frame(skeleton: Skeleton, body: CapsuleBody, pose: Pose, points_per_frame: int = 5000,
                   seed: int | Sequence[int] = 0, jitter: float = 0.0, frame_id: int = 0) -> ScanFrame:
    """
    Sample the visible outer surface of the posed capsule body

    Points inside another capsule (union SDF < -1e-6) are rejected, so the
    hidden surfaces between parts never appear in the scan.

    Args:
        skeleton: Skeleton
        body: Capsule radii / bulges
        pose: Pose to sample in
        points_per_frame: Exact number of points returned
        seed: RNG seed (int or entropy sequence)
        jitter: Gaussian noise std added to the points (normals unchanged)
        frame_id: Stored on the frame

    Returns:
        ScanFrame
    """
    body.check(skeleton)
    pose.check(skeleton)
    if points_per_frame < 1:
        raise ConfigError("points_per_frame must be >= 1")
    rng = np.random.default_rng(seed)
    joints = posed_joints(skeleton, pose)
    heads = [joints[h] for h, _ in skeleton.bones]
    tails = [joints[t] for _, t in skeleton.bones]
    lengths = np.linalg.norm(np.array(tails) - np.array(heads), axis=1)
    areas = np.array([2 * np.pi * r * l + 4 * np.pi * r * r for r, l in zip(body.radii, lengths)])
    share = areas / areas.sum()

    points, normals = [], []
    kept = 0
    for _ in range(1000):
        batch = max(points_per_frame - kept, 64) * 2
        counts = rng.multinomial(batch, share)
        for n, count in enumerate(counts):
            if count == 0:
                continue
            p, nrm = sample_capsule(heads[n], tails[n], body.radii[n], body.bulge[n], int(count), rng)
            others = [k for k in range(skeleton.part_count) if k != n]
            if others:
                other_sdf = np.min(np.stack([
                    capsule_sdf(p, heads[k], tails[k], body.radii[k], body.bulge[k]) for k in others
                ], axis=1), axis=1)
                visible = other_sdf >= -HIDDEN_SURFACE_TOL
                p, nrm = p[visible], nrm[visible]
            points.append(p)
            normals.append(nrm)
            kept += len(p)
        if kept >= points_per_frame:
            break
    else:
        raise DatasetError("could not sample enough visible surface points")

    points = np.concatenate(points)
    normals = np.concatenate(normals)
    order = rng.permutation(len(points))[:points_per_frame]
    points, normals = points[order], normals[order]
    if jitter > 0.0:
        points = points + rng.normal(scale=jitter, size=points.shape)
    return ScanFrame(points, normals, pose, frame_id)


def generate_sequence(skeleton: Skeleton, body: CapsuleBody, schedule: PoseSchedule | str, frames: int,
                      seed: int = 0, points_per_frame: int = 5000, jitter: float = 0.0) -> List[ScanFrame]:
    """Frames for every pose of the schedule; frame i is seeded with (seed, i)"""
    if isinstance(schedule, str):
        schedule = PoseSchedule.parse(schedule)
    poses = schedule.poses(skeleton, frames, seed)
    sequence = []
    for i, pose in enumerate(poses):
        pose.frame_id = i
        sequence.append(generate_frame(skeleton, body, pose, points_per_frame, (seed, i), jitter, frame_id=i))
    logger.info(f"Generated {len(sequence)} frames ({schedule.spec}, {points_per_frame} points each)")
    return sequence


def split_indices(frames: int, stride: int = 10, train_fraction: float = 0.8) -> Dict[str, List[int]]:
    """
    Frame splits: train = every stride-th frame of the leading part,
    interp = the frames half a stride later, extrap = every stride-th
    frame of the held-out tail

    The tail is sampled with the same stride as training, starting at the
    first held-out frame; with the default stride of 10 all three splits
    are one frame in ten.
    """
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    cutoff = max(1, int(round(frames * train_fraction)))
    half = stride // 2
    return {
        "train": [i for i in range(cutoff) if i % stride == 0],
        "interp": [i for i in range(cutoff) if stride > 1 and i % stride == half],
        "extrap": list(range(cutoff, frames))[::stride],
    }


# ============================================================================
# File I/O
# ============================================================================

FRAME_PROPERTIES = ("x", "y", "z", "nx", "ny", "nz")


def write_ply(path: str | Path, vertex: np.ndarray, faces: Optional[np.ndarray] = None) -> None:
    """
    Write a binary little-endian PLY

    Args:
        path: Output file
        vertex: Structured array, one field per vertex property
        faces: Optional (F, 3) triangle indices, stored as 'list uchar int vertex_indices'
    """
    elements = [PlyElement.describe(vertex, "vertex")]
    if faces is not None:
        face = np.empty(len(faces), dtype=[("vertex_indices", "<i4", (3,))])
        face["vertex_indices"] = np.asarray(faces).reshape(-1, 3)
        elements.append(PlyElement.describe(face, "face"))
    PlyData(elements, text=False, byte_order="<").write(str(path))


def read_ply(path: str | Path) -> Dict[str, np.ndarray]:
    """
    Read a PLY file

    Returns:
        Vertex property arrays by name, plus 'faces' ((F, 3) int64) when the
        file has a face element
    """
    path = Path(path)
    try:
        ply = PlyData.read(str(path), mmap=False)
    except PlyHeaderParseError as e:
        line = getattr(e, "line", None)
        raise MalformedFileError(path, str(e), f"line {line}" if line else None) from e
    except PlyElementParseError as e:
        element, row = getattr(e, "element", None), getattr(e, "row", None)
        where = f"element '{element.name}' row {row}" if element is not None else None
        raise MalformedFileError(path, str(e), where) from e
    except (PlyParseError, ValueError, EOFError, StopIteration) as e:
        raise MalformedFileError(path, f"unreadable PLY: {e}") from e

    elements = {element.name: element for element in ply.elements}
    result: Dict[str, np.ndarray] = {}
    if "vertex" in elements:
        data = elements["vertex"].data
        result = {name: np.array(data[name]) for name in data.dtype.names}
    if "face" in elements:
        lists = elements["face"].data["vertex_indices"]
        if any(len(ids) != 3 for ids in lists):
            raise MalformedFileError(path, "only triangle faces are supported", "element 'face'")
        result["faces"] = np.array([list(ids) for ids in lists], dtype=np.int64).reshape(-1, 3)
    return result


def save_frame(path: str | Path, frame: ScanFrame) -> None:
    """Write <path> (PLY, doubles) and the sibling <stem>.pose.json"""
    path = Path(path)
    vertex = np.empty(len(frame.points), dtype=[(name, "<f8") for name in FRAME_PROPERTIES])
    columns = np.concatenate([frame.points, frame.normals], axis=1)
    for i, name in enumerate(FRAME_PROPERTIES):
        vertex[name] = columns[:, i]
    write_ply(path, vertex)
    pose_data = {"frame_id": frame.frame_id, **frame.pose.to_dict()}
    with open(_pose_path(path), "w", encoding="utf-8") as f:
        json.dump(pose_data, f)


def _pose_path(path: Path) -> Path:
    return path.with_name(path.stem + ".pose.json")


def load_frame(path: str | Path) -> ScanFrame:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"Frame file not found: {path}")
    data = read_ply(path)
    missing = [name for name in FRAME_PROPERTIES if name not in data]
    if missing:
        raise MalformedFileError(path, f"missing vertex properties {missing}", "header")
    points = np.stack([data[k] for k in FRAME_PROPERTIES[:3]], axis=1).astype(np.float64)
    normals = np.stack([data[k] for k in FRAME_PROPERTIES[3:]], axis=1).astype(np.float64)

    pose_file = _pose_path(path)
    try:
        with open(pose_file, "r", encoding="utf-8") as f:
            pose_data = json.load(f)
        pose = Pose.from_dict(pose_data)
    except FileNotFoundError:
        raise DatasetError(f"Pose file not found: {pose_file}") from None
    except json.JSONDecodeError as e:
        raise MalformedFileError(pose_file, e.msg, f"line {e.lineno} column {e.colno}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedFileError(pose_file, f"invalid pose data: {e}") from e
    frame_id = int(pose_data.get("frame_id", 0))
    pose.frame_id = frame_id
    return ScanFrame(points, normals, pose, frame_id)


@dataclass
class Dataset:
    """A loaded dataset directory"""
    root: Path
    skeleton: Skeleton
    frames: List[ScanFrame]
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def splits(self) -> Dict[str, List[int]]:
        return self.meta.get("splits", {})

    def split(self, name: str) -> List[ScanFrame]:
        if name == "all":
            return list(self.frames)
        if name not in self.splits:
            raise DatasetError(f"unknown split '{name}' (available: {', '.join(sorted(self.splits)) or 'none'})")
        by_id = {f.frame_id: f for f in self.frames}
        return [by_id[i] for i in self.splits[name] if i in by_id]

    def split_of(self, frame_id: int) -> Optional[str]:
        for name, ids in self.splits.items():
            if frame_id in ids:
                return name
        return None


def save_dataset(root: str | Path, skeleton: Skeleton, frames: Sequence[ScanFrame],
                 meta: Optional[Dict[str, Any]] = None) -> Path:
    """Write frames/NNNN.ply + NNNN.pose.json, skeleton.json and dataset.json"""
    root = Path(root)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    for frame in frames:
        save_frame(root / "frames" / f"{frame.frame_id:04d}.ply", frame)
    skeleton.save(root / "skeleton.json")
    meta = dict(meta or {})
    meta["frames"] = len(frames)
    with open(root / "dataset.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    logger.info(f"Saved dataset with {len(frames)} frames to {root}")
    return root


def load_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    if not (root / "skeleton.json").exists():
        raise DatasetError(f"Not a dataset directory (no skeleton.json): {root}")
    skeleton = Skeleton.load(root / "skeleton.json")
    meta: Dict[str, Any] = {}
    if (root / "dataset.json").exists():
        try:
            with open(root / "dataset.json", "r", encoding="utf-8") as f:
                meta = json.load(f)
        except json.JSONDecodeError as e:
            raise MalformedFileError(root / "dataset.json", e.msg, f"line {e.lineno} column {e.colno}") from e
    frame_files = sorted((root / "frames").glob("*.ply"))
    if not frame_files:
        raise DatasetError(f"No frames found in {root / 'frames'}")
    frames = [load_frame(p) for p in frame_files]
    for frame in frames:
        frame.pose.check(skeleton)
    return Dataset(root, skeleton, frames, meta)
