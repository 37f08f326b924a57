"""
Skeleton
Joint tree, bone-centred coordinate frames and pose-relative quantities
"""
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from app.core.exceptions import DegenerateGeometryError, MalformedFileError, PoseMismatchError

WORLD_UP = np.array([0.0, 1.0, 0.0])
WORLD_X = np.array([1.0, 0.0, 0.0])
ZERO_ANGLE_AXIS = np.array([0.0, 0.0, 1.0])
ORTHONORMAL_TOL = 1e-9

Frame = Tuple[np.ndarray, np.ndarray]


@dataclass(eq=False)
class Skeleton:
    """
    Rest-pose joint tree with bones as (head, tail) joint pairs

    Every non-root joint is the tail of exactly one bone and each bone's head
    is the tail's parent, so bone n is the segment parent(j) -> j.
    """
    joint_names: List[str]
    parent: List[Optional[int]]
    rest_joint_pos: np.ndarray
    bones: List[Tuple[int, int]]

    def __post_init__(self):
        self.rest_joint_pos = np.asarray(self.rest_joint_pos, dtype=np.float64).reshape(-1, 3)
        self.bones = [(int(h), int(t)) for h, t in self.bones]
        self.parent = [None if p is None else int(p) for p in self.parent]
        self._validate()

    def _validate(self) -> None:
        count = len(self.joint_names)
        if count == 0 or len(self.parent) != count or len(self.rest_joint_pos) != count:
            raise PoseMismatchError("joint_names, parent and rest_joint_pos must have equal non-zero length")
        if len(set(self.joint_names)) != count:
            raise PoseMismatchError("joint names must be unique")

        roots = [j for j, p in enumerate(self.parent) if p is None]
        if len(roots) != 1:
            raise PoseMismatchError(f"skeleton must have exactly one root, found {len(roots)}")
        for j in range(count):
            # Walk to the root; a cycle never reaches it
            seen, cur = set(), j
            while cur is not None:
                if cur in seen or not 0 <= cur < count:
                    raise PoseMismatchError(f"parent relation is not a tree at joint {self.joint_names[j]}")
                seen.add(cur)
                cur = self.parent[cur]

        tails = [t for _, t in self.bones]
        for head, tail in self.bones:
            if self.parent[tail] != head:
                raise PoseMismatchError(
                    f"bone ({self.joint_names[head]}, {self.joint_names[tail]}) does not follow the parent relation"
                )
        for j in range(count):
            if self.parent[j] is not None and tails.count(j) != 1:
                raise PoseMismatchError(f"joint {self.joint_names[j]} must belong to exactly one bone")
        if not self.bones:
            raise PoseMismatchError("skeleton has no bones")

        for n, length in enumerate(self.bone_lengths):
            if length <= 0.0:
                raise DegenerateGeometryError(f"bone {n} has zero length")

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    @property
    def part_count(self) -> int:
        return len(self.bones)

    @cached_property
    def bone_of_joint(self) -> Dict[int, int]:
        """Non-root joint -> the bone it is the tail of"""
        return {tail: n for n, (_, tail) in enumerate(self.bones)}

    @cached_property
    def bone_lengths(self) -> np.ndarray:
        heads = self.rest_joint_pos[[h for h, _ in self.bones]]
        tails = self.rest_joint_pos[[t for _, t in self.bones]]
        return np.linalg.norm(tails - heads, axis=1)

    @cached_property
    def neighbors(self) -> List[List[Tuple[int, int]]]:
        """For every bone, the (neighbor bone, shared joint) pairs sorted by bone index"""
        result: List[List[Tuple[int, int]]] = [[] for _ in self.bones]
        for n, bone_n in enumerate(self.bones):
            for b, bone_b in enumerate(self.bones):
                if b == n:
                    continue
                shared = set(bone_n) & set(bone_b)
                if shared:
                    result[n].append((b, shared.pop()))
        return result

    @cached_property
    def adjacency(self) -> np.ndarray:
        """N x N boolean matrix of bones sharing a joint"""
        mask = np.zeros((self.part_count, self.part_count), dtype=bool)
        for n, pairs in enumerate(self.neighbors):
            for b, _ in pairs:
                mask[n, b] = True
        return mask

    def adjacent_joints(self, n: int) -> List[int]:
        """Joints of bone n shared with at least one other bone (J^(n))"""
        return sorted({joint for _, joint in self.neighbors[n]})

    def shared_joint(self, n: int, b: int) -> int:
        for other, joint in self.neighbors[n]:
            if other == b:
                return joint
        raise PoseMismatchError(f"bones {n} and {b} are not adjacent")

    def far_joint(self, n: int, joint: int) -> int:
        """The endpoint of bone n that is not `joint`"""
        head, tail = self.bones[n]
        if joint == head:
            return tail
        if joint == tail:
            return head
        raise PoseMismatchError(f"joint {joint} is not an endpoint of bone {n}")

    def joint_index(self, name: str) -> int:
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise PoseMismatchError(f"unknown joint '{name}'") from None

    @cached_property
    def rest_frames(self) -> Tuple[np.ndarray, np.ndarray]:
        """Bone-centred rest frames (R_hat (N,3,3), t_hat (N,3))"""
        rotations = np.stack([_complete_frame(*self._rest_endpoints(n)) for n in range(self.part_count)])
        centers = np.stack([0.5 * sum(self._rest_endpoints(n)) for n in range(self.part_count)])
        return rotations, centers

    def _rest_endpoints(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        head, tail = self.bones[n]
        return self.rest_joint_pos[head], self.rest_joint_pos[tail]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "joints": [
                {
                    "name": name,
                    "parent": None if p is None else self.joint_names[p],
                    "rest_pos": [float(v) for v in pos],
                }
                for name, p, pos in zip(self.joint_names, self.parent, self.rest_joint_pos)
            ],
            "bones": [[self.joint_names[h], self.joint_names[t]] for h, t in self.bones],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Skeleton":
        joints = data["joints"]
        names = [str(j["name"]) for j in joints]

        def resolve(ref):
            if ref is None:
                return None
            if isinstance(ref, str):
                if ref not in names:
                    raise PoseMismatchError(f"unknown joint '{ref}'")
                return names.index(ref)
            return int(ref)

        return cls(
            joint_names=names,
            parent=[resolve(j.get("parent")) for j in joints],
            rest_joint_pos=np.array([j["rest_pos"] for j in joints], dtype=np.float64),
            bones=[(resolve(h), resolve(t)) for h, t in data["bones"]],
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path: str | Path) -> "Skeleton":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
            return cls.from_dict(data)
        except json.JSONDecodeError as e:
            raise MalformedFileError(path, e.msg, f"line {e.lineno} column {e.colno}") from e
        except (KeyError, TypeError) as e:
            raise MalformedFileError(path, f"missing or invalid field: {e}") from e


@dataclass(eq=False)
class Pose:
    """
    Per-bone rigid motion from the rest configuration

    A rest-space point p on bone n sits at R[n] @ p + t[n] in this pose.
    """
    R: np.ndarray
    t: np.ndarray
    frame_id: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64).reshape(-1, 3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(-1, 3)
        if len(self.R) != len(self.t):
            raise PoseMismatchError("R and t must have one entry per bone")
        eye = np.eye(3)
        for n, rot in enumerate(self.R):
            err = np.abs(rot.T @ rot - eye).max()
            if not np.isfinite(err) or err >= ORTHONORMAL_TOL or np.linalg.det(rot) <= 0.0:
                raise PoseMismatchError(f"rotation of bone {n} is not a proper rotation (err={err:.3g})")

    @property
    def part_count(self) -> int:
        return len(self.R)

    @classmethod
    def identity(cls, part_count: int) -> "Pose":
        return cls(np.tile(np.eye(3), (part_count, 1, 1)), np.zeros((part_count, 3)))

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "Pose":
        """Apply a global rigid motion on top of this pose"""
        rotation = np.asarray(rotation, dtype=np.float64)
        return Pose(
            np.einsum("ij,njk->nik", rotation, self.R),
            self.t @ rotation.T + np.asarray(translation, dtype=np.float64),
            self.frame_id,
        )

    def check(self, skeleton: Skeleton) -> "Pose":
        if self.part_count != skeleton.part_count:
            raise PoseMismatchError(
                f"pose has {self.part_count} bones but the skeleton has {skeleton.part_count}"
            )
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {"R": self.R.reshape(-1, 9).tolist(), "t": self.t.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Pose":
        return cls(np.array(data["R"], dtype=np.float64), np.array(data["t"], dtype=np.float64))


def save_poses(path: str | Path, poses: Sequence[Pose]) -> None:
    """Write a pose file ({"frames": [{R, t}, ...]})"""
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"frames": [p.to_dict() for p in poses]}, f)


def load_poses(path: str | Path) -> List[Pose]:
    """Read a pose file; frame ids are the positions in the file"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        poses = [Pose.from_dict(frame) for frame in data["frames"]]
    except json.JSONDecodeError as e:
        raise MalformedFileError(path, e.msg, f"line {e.lineno} column {e.colno}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedFileError(path, f"invalid pose data: {e}") from e
    for i, pose in enumerate(poses):
        pose.frame_id = i
    return poses


def _complete_frame(head: np.ndarray, tail: np.ndarray) -> np.ndarray:
    """Columns: bone direction, up x direction (x-axis fallback), right-handed third axis"""
    axis = tail - head
    length = np.linalg.norm(axis)
    if length <= 0.0:
        raise DegenerateGeometryError("cannot build a frame for a zero-length bone")
    first = axis / length
    ref = WORLD_X if abs(np.dot(WORLD_UP, first)) > 0.99 else WORLD_UP
    second = np.cross(ref, first)
    second /= np.linalg.norm(second)
    third = np.cross(first, second)
    return np.stack([first, second, third], axis=1)


def bone_frame(skeleton: Skeleton, pose: Pose, n: int) -> Frame:
    """
    Bone-centred coordinate system of bone n in the given pose

    Args:
        skeleton: Skeleton
        pose: Per-bone rigid motions
        n: Bone index

    Returns:
        (R_n, t_n): first column of R_n is the posed bone direction, t_n the
        midpoint of the posed bone
    """
    if not 0 <= n < skeleton.part_count:
        raise IndexError(f"bone index {n} out of range")
    if skeleton.bone_lengths[n] <= 0.0:
        raise DegenerateGeometryError(f"bone {n} has zero length")
    rest_R, rest_t = skeleton.rest_frames
    return pose.R[n] @ rest_R[n], pose.R[n] @ rest_t[n] + pose.t[n]


def bone_frames(skeleton: Skeleton, pose: Pose) -> Tuple[np.ndarray, np.ndarray]:
    """All bone frames stacked as (N,3,3), (N,3)"""
    pose.check(skeleton)
    rest_R, rest_t = skeleton.rest_frames
    return np.einsum("nij,njk->nik", pose.R, rest_R), np.einsum("nij,nj->ni", pose.R, rest_t) + pose.t


def to_local(x: np.ndarray, frame: Frame) -> np.ndarray:
    """R^T (x - t) for one point or a (..., 3) array"""
    rotation, translation = frame
    return (np.asarray(x, dtype=np.float64) - translation) @ rotation


def from_local(x_local: np.ndarray, frame: Frame) -> np.ndarray:
    """Inverse of to_local"""
    rotation, translation = frame
    return np.asarray(x_local, dtype=np.float64) @ rotation.T + translation


def posed_joints(skeleton: Skeleton, pose: Pose) -> np.ndarray:
    """World positions of all joints; the root follows the first bone it heads"""
    pose.check(skeleton)
    positions = np.empty_like(skeleton.rest_joint_pos)
    for n, (head, tail) in enumerate(skeleton.bones):
        positions[tail] = pose.R[n] @ skeleton.rest_joint_pos[tail] + pose.t[n]
    for j, p in enumerate(skeleton.parent):
        if p is None:
            n = next(n for n, (head, _) in enumerate(skeleton.bones) if head == j)
            positions[j] = pose.R[n] @ skeleton.rest_joint_pos[j] + pose.t[n]
    return positions


def pose_condition_from_frames(rotations: np.ndarray, translations: np.ndarray, n: int) -> np.ndarray:
    """
    Pose condition vector of part n from stacked frames

    Concatenates, for every frame j, the row-major entries of R_n^T R_j and
    then R_n^T (t_j - t_n): 12 * N values.
    """
    rel_R = np.einsum("ji,mjk->mik", rotations[n], rotations)
    rel_t = (translations - translations[n]) @ rotations[n]
    return np.concatenate([rel_R.reshape(-1, 9), rel_t], axis=1).reshape(-1)


def pose_condition(skeleton: Skeleton, pose: Pose, n: int) -> np.ndarray:
    """Pose condition vector z^(n) (length 12 * N)"""
    rotations, translations = bone_frames(skeleton, pose)
    return pose_condition_from_frames(rotations, translations, n)


def relative_delta_rotation(
    skeleton: Skeleton, rest_pose: Pose, pose: Pose, n: int, b: int
) -> Tuple[np.ndarray, float, np.ndarray]:
    """
    Rotation of neighbor bone b relative to part n, measured against the rest pose

    Args:
        skeleton: Skeleton
        rest_pose: Reference pose
        pose: Current pose
        n: Part (bone) index
        b: Neighbor bone index, must share a joint with n

    Returns:
        (axis, angle, center): unit axis and angle in [0, pi] of
        (R_n^T R_b)(R_hat_n^T R_hat_b)^T in part-n coordinates, and the
        shared joint mapped into part n's frame
    """
    joint = skeleton.shared_joint(n, b)
    frame_n = bone_frame(skeleton, pose, n)
    frame_b = bone_frame(skeleton, pose, b)
    rest_n = bone_frame(skeleton, rest_pose, n)
    rest_b = bone_frame(skeleton, rest_pose, b)

    delta = (frame_n[0].T @ frame_b[0]) @ (rest_n[0].T @ rest_b[0]).T
    axis, angle = axis_angle(delta)

    joint_world = pose.R[n] @ skeleton.rest_joint_pos[joint] + pose.t[n]
    return axis, angle, to_local(joint_world, frame_n)


def axis_angle(rotation: np.ndarray) -> Tuple[np.ndarray, float]:
    """Axis-angle of a rotation matrix, angle in [0, pi]; fixed z axis at angle 0"""
    rotvec = Rotation.from_matrix(rotation).as_rotvec()
    angle = float(np.linalg.norm(rotvec))
    if angle < 1e-12:
        return ZERO_ANGLE_AXIS.copy(), 0.0
    return rotvec / angle, angle


def rotation_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis"""
    axis = np.asarray(axis, dtype=np.float64)
    return Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle).as_matrix()
