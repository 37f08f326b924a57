"""
Adjacent part seaming
Non-rigid canonicalization of points near joints and the competing-parts
rigidness / blending weights that drive it
"""
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from app.core.exceptions import DegenerateGeometryError
from app.unif.skeleton import (
    Pose,
    Skeleton,
    bone_frame,
    bone_frames,
    pose_condition_from_frames,
    posed_joints,
    relative_delta_rotation,
    to_local,
)

QRatio = Literal["length", "inverse"]
GeometryMode = Literal["posed", "rest"]

DTYPE = torch.float64


def _tensor(value, dtype=DTYPE) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value.to(dtype)
    return torch.as_tensor(np.asarray(value, dtype=np.float64), dtype=dtype)


@dataclass
class NeighborGeometry:
    """
    Bone endpoints for one (part, neighbor) pair in part-n coordinates

    O is the shared joint, A the far end of part n's bone, B the far end of
    the neighbor bone and Q the split point on AB.
    """
    O: torch.Tensor
    A: torch.Tensor
    B: torch.Tensor
    Q: torch.Tensor


class RigidnessCoeffs(nn.Module):
    """
    Learnable rigidness scale (alpha) and bias (beta_r) matrices

    Entry [i, j] holds the coefficient of bone i in its pair with bone j.
    Only entries of adjacent pairs are read.
    """

    def __init__(self, part_count: int, adjacency: Optional[np.ndarray] = None,
                 alpha_init: float = 2.0, beta_init: float = 0.0):
        super().__init__()
        self.alpha = nn.Parameter(torch.full((part_count, part_count), float(alpha_init), dtype=DTYPE))
        self.beta_r = nn.Parameter(torch.full((part_count, part_count), float(beta_init), dtype=DTYPE))
        if adjacency is None:
            adjacency = np.ones((part_count, part_count), dtype=bool) & ~np.eye(part_count, dtype=bool)
        self.register_buffer("adjacency", torch.as_tensor(np.asarray(adjacency, dtype=bool)))

    def pair(self, n: int, b: int) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        """(alpha_n, beta_n, alpha_b, beta_b) for part n and neighbor b"""
        if not bool(self.adjacency[n, b]):
            raise DegenerateGeometryError(f"parts {n} and {b} are not adjacent")
        return self.alpha[n, b], self.beta_r[n, b], self.alpha[b, n], self.beta_r[b, n]

    def mask_gradients(self) -> None:
        """Zero gradients of entries that belong to no adjacent pair"""
        for param in (self.alpha, self.beta_r):
            if param.grad is not None:
                param.grad.mul_(self.adjacency.to(param.dtype))


def split_point(A, B, len1: float, len2: float) -> torch.Tensor:
    """
    Point Q on AB with |AQ| / |QB| = len1 / len2

    Args:
        A: Far end of the first bone
        B: Far end of the second bone
        len1: Length associated with the A side
        len2: Length associated with the B side

    Returns:
        Q as a tensor
    """
    A, B = _tensor(A), _tensor(B)
    if len1 <= 0.0 or len2 <= 0.0:
        raise DegenerateGeometryError("bone lengths must be positive")
    if float(torch.linalg.norm(B - A)) == 0.0:
        raise DegenerateGeometryError("bone endpoints A and B coincide")
    return A + (len1 / (len1 + len2)) * (B - A)


def _projection_ratios(x: torch.Tensor, geo: NeighborGeometry) -> Tuple[torch.Tensor, torch.Tensor]:
    """QP.QA/|QA|^2 and QP.QB/|QB|^2 where P is x projected onto line AB"""
    u = geo.B - geo.A
    s = ((x - geo.A) @ u) / (u @ u)
    P = geo.A + s.unsqueeze(-1) * u
    QP = P - geo.Q
    QA = geo.A - geo.Q
    QB = geo.B - geo.Q
    return (QP @ QA) / (QA @ QA), (QP @ QB) / (QB @ QB)


def rigidness(x, geo: NeighborGeometry, alpha1, beta1, alpha2, beta2) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Rigidness of the two competing bones at x

    r1 = exp(alpha1 * QP.QA / |QA|^2 + beta1), r2 likewise with B. x may be
    a single point or a (M, 3) batch.
    """
    x = _tensor(x)
    ratio_a, ratio_b = _projection_ratios(x, geo)
    return torch.exp(alpha1 * ratio_a + beta1), torch.exp(alpha2 * ratio_b + beta2)


def bone_projection_rigidness(x, O, A, B, alpha1=1.0, beta1=0.0, alpha2=1.0,
                              beta2=0.0) -> Tuple[torch.Tensor, torch.Tensor]:
    """Rigidness from the projection of x onto each bone measured from the joint"""
    x, O, A, B = _tensor(x), _tensor(O), _tensor(A), _tensor(B)
    OA, OB = A - O, B - O
    ratio_a = ((x - O) @ OA) / (OA @ OA)
    ratio_b = ((x - O) @ OB) / (OB @ OB)
    return torch.exp(alpha1 * ratio_a + beta1), torch.exp(alpha2 * ratio_b + beta2)


def blend_weights(r1, r2) -> Tuple[torch.Tensor, torch.Tensor]:
    """w1 = r1 / (r1 + r2), w2 = 1 - w1"""
    r1, r2 = _tensor(r1), _tensor(r2)
    if bool((r1 <= 0).any()) or bool((r2 <= 0).any()):
        raise DegenerateGeometryError("rigidness must be strictly positive")
    w1 = torch.clamp(r1 / (r1 + r2), 0.0, 1.0)
    return w1, 1.0 - w1


def scaled_rotation(axis, theta: float, w) -> torch.Tensor:
    """
    Rotation by w * theta about a unit axis (Rodrigues)

    Args:
        axis: Unit 3-vector
        theta: Angle in radians
        w: Scalar or tensor of weights; the result gains its shape

    Returns:
        (..., 3, 3) rotation matrices
    """
    axis = _tensor(axis)
    phi = _tensor(w) * theta
    K = torch.zeros(3, 3, dtype=DTYPE)
    K[0, 1], K[0, 2] = -axis[2], axis[1]
    K[1, 0], K[1, 2] = axis[2], -axis[0]
    K[2, 0], K[2, 1] = -axis[1], axis[0]
    eye = torch.eye(3, dtype=DTYPE)
    sin = torch.sin(phi)[..., None, None]
    cos = torch.cos(phi)[..., None, None]
    return eye + sin * K + (1.0 - cos) * (K @ K)


def rotate_back(v: torch.Tensor, axis: torch.Tensor, angle: torch.Tensor) -> torch.Tensor:
    """R_angle^T v for row vectors v (M, 3) and per-row angles (M,)"""
    cos = torch.cos(angle).unsqueeze(-1)
    sin = torch.sin(angle).unsqueeze(-1)
    k = axis.expand_as(v)
    return v * cos - torch.cross(k, v, dim=-1) * sin + k * (v @ axis).unsqueeze(-1) * (1.0 - cos)


def aps_offset(x_n, neighbors: Sequence[Tuple]) -> torch.Tensor:
    """
    Seaming offset of points in part-n coordinates

    Args:
        x_n: (3,) or (M, 3) points in part n's posed local frame
        neighbors: (axis, theta, center, weight) per neighbor; weight is a
            scalar or one value per point

    Returns:
        Sum over neighbors of R_{w theta}^T (x - t) + t - x
    """
    x_n = _tensor(x_n)
    single = x_n.dim() == 1
    points = x_n.reshape(-1, 3)
    offset = torch.zeros_like(points)
    for axis, theta, center, weight in neighbors:
        center = _tensor(center)
        weight = _tensor(weight)
        angle = (weight * float(theta)).expand(points.shape[0]) if weight.dim() == 0 else weight * float(theta)
        offset = offset + rotate_back(points - center, _tensor(axis), angle) + center - points
    return offset.reshape(3) if single else offset


@dataclass
class NeighborTerm:
    """Everything APS needs about one neighbor of a part in a given pose"""
    bone: int
    joint: int
    axis: torch.Tensor
    angle: float
    center: torch.Tensor
    geometry: NeighborGeometry


@dataclass
class PoseContext:
    """
    Per-pose quantities shared by all points of a frame

    Frames, pose condition vectors, neighbor rotations and geometry are
    computed once; only the points vary between calls.
    """
    pose: Pose
    rotations: torch.Tensor
    translations: torch.Tensor
    conditions: torch.Tensor
    neighbors: List[List[NeighborTerm]]
    joints: torch.Tensor

    @property
    def part_count(self) -> int:
        return self.rotations.shape[0]

    @classmethod
    def build(cls, skeleton: Skeleton, rest_pose: Pose, pose: Pose, q_ratio: QRatio = "length",
              rigidness_geometry: GeometryMode = "posed") -> "PoseContext":
        pose.check(skeleton)
        rest_pose.check(skeleton)
        rotations, translations = bone_frames(skeleton, pose)
        conditions = np.stack([
            pose_condition_from_frames(rotations, translations, n) for n in range(skeleton.part_count)
        ])
        joints_world = posed_joints(skeleton, pose)
        joints_rest = posed_joints(skeleton, rest_pose)

        neighbors: List[List[NeighborTerm]] = []
        for n in range(skeleton.part_count):
            frame_n = (rotations[n], translations[n])
            rest_frame_n = bone_frame(skeleton, rest_pose, n)
            terms = []
            for b, joint in skeleton.neighbors[n]:
                axis, angle, center = relative_delta_rotation(skeleton, rest_pose, pose, n, b)
                far_n = skeleton.far_joint(n, joint)
                far_b = skeleton.far_joint(b, joint)
                O = to_local(joints_world[joint], frame_n)
                A = to_local(joints_world[far_n], frame_n)
                if rigidness_geometry == "posed":
                    B = to_local(joints_world[far_b], frame_n)
                else:
                    B = to_local(joints_rest[far_b], rest_frame_n)
                len_n, len_b = skeleton.bone_lengths[n], skeleton.bone_lengths[b]
                if q_ratio == "inverse":
                    len_n, len_b = len_b, len_n
                Q = split_point(A, B, float(len_n), float(len_b))
                terms.append(NeighborTerm(
                    bone=b,
                    joint=joint,
                    axis=_tensor(axis),
                    angle=float(angle),
                    center=_tensor(center),
                    geometry=NeighborGeometry(_tensor(O), _tensor(A), _tensor(B), Q),
                ))
            neighbors.append(terms)

        return cls(
            pose=pose,
            rotations=_tensor(rotations),
            translations=_tensor(translations),
            conditions=_tensor(conditions),
            neighbors=neighbors,
            joints=_tensor(joints_world),
        )


def to_part_local(x: torch.Tensor, ctx: PoseContext, n: int) -> torch.Tensor:
    """(M, 3) world points into part n's posed local frame"""
    return (x - ctx.translations[n]) @ ctx.rotations[n]


def neighbor_share(x_n: torch.Tensor, term: NeighborTerm, coeffs: RigidnessCoeffs, n: int) -> torch.Tensor:
    """
    Blend weight of the neighbor (its share of the seam rotation) at x_n

    Part n applies w_b, part b applies w_n = 1 - w_b at the same point, which
    is what keeps the two sections aligned.
    """
    alpha_n, beta_n, alpha_b, beta_b = coeffs.pair(n, term.bone)
    ratio_a, ratio_b = _projection_ratios(x_n, term.geometry)
    # log r_b - log r_n; sigmoid of it equals r_b / (r_n + r_b) without overflow
    logit = (alpha_b * ratio_b + beta_b) - (alpha_n * ratio_a + beta_n)
    return torch.sigmoid(logit)


def canonicalize_points(x: torch.Tensor, ctx: PoseContext, coeffs: RigidnessCoeffs, n: int,
                        aps: bool = True) -> torch.Tensor:
    """
    World points -> canonical coordinates of part n

    Args:
        x: (M, 3) world points
        ctx: Pose context
        coeffs: Rigidness coefficients
        n: Part index
        aps: Apply adjacent part seaming; False gives the rigid local transform

    Returns:
        (M, 3) x_n + delta_x_n
    """
    x_n = to_part_local(x, ctx, n)
    if not aps:
        return x_n
    offset = torch.zeros_like(x_n)
    for term in ctx.neighbors[n]:
        if term.angle == 0.0:
            continue
        weight = neighbor_share(x_n, term, coeffs, n)
        offset = offset + aps_offset(x_n, [(term.axis, term.angle, term.center, weight)])
    return x_n + offset


def canonicalize(x, skeleton: Skeleton, rest_pose: Pose, pose: Pose, coeffs: RigidnessCoeffs, n: int,
                 q_ratio: QRatio = "length", rigidness_geometry: GeometryMode = "posed") -> torch.Tensor:
    """Single-call form of canonicalize_points for one point or a batch"""
    ctx = PoseContext.build(skeleton, rest_pose, pose, q_ratio, rigidness_geometry)
    x = _tensor(x)
    single = x.dim() == 1
    result = canonicalize_points(x.reshape(-1, 3), ctx, coeffs, n)
    return result.reshape(3) if single else result
