"""
Training objective
Point sampling per frame and the reconstruction, unit-gradient, bone limit,
section normal and minimal perimeter losses
"""
from dataclasses import dataclass, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from app.core.config import LossWeights
from app.core.exceptions import DatasetError, NonFiniteError
from app.unif.dataio import ScanFrame
from app.unif.deform import DTYPE
from app.unif.neural_sdf import FieldOutput, ImplicitField
from app.unif.skeleton import Pose, Skeleton, bone_frames, posed_joints

SampleCounts = Tuple[int, int, int]


@dataclass
class SampleBatch:
    """Surface points with normals, local perturbations and box-uniform points"""
    surface: np.ndarray
    normals: np.ndarray
    local: np.ndarray
    global_points: np.ndarray

    @property
    def off_surface(self) -> np.ndarray:
        """Expectation points of the unit-gradient and perimeter terms"""
        return np.concatenate([self.local, self.global_points])


def sample_batch(frame: ScanFrame, counts: SampleCounts = (5000, 5000, 5000), sigma_local: float = 0.1,
                 box_scale: float = 1.5, seed: int | Sequence[int] = 0) -> SampleBatch:
    """
    Draw one training batch from a scan frame

    Args:
        frame: Scan frame
        counts: (surface, local, global) point counts
        sigma_local: Std of the Gaussian offsets of local points
        box_scale: Enlargement of the scan bounding box for global points
        seed: RNG seed (int or entropy sequence)

    Returns:
        SampleBatch
    """
    if len(frame.points) == 0:
        raise DatasetError("cannot sample an empty frame")
    n_surface, n_local, n_global = counts
    rng = np.random.default_rng(seed)

    idx = rng.integers(0, len(frame.points), size=n_surface)
    surface, normals = frame.points[idx], frame.normals[idx]

    src = rng.integers(0, len(frame.points), size=n_local)
    local = frame.points[src] + rng.normal(scale=sigma_local, size=(n_local, 3)) if sigma_local > 0 \
        else frame.points[src].copy()

    lo, hi = frame.points.min(axis=0), frame.points.max(axis=0)
    center, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * box_scale
    global_points = center + (rng.random((n_global, 3)) * 2.0 - 1.0) * half

    return SampleBatch(surface, normals, local, global_points)


@dataclass
class LossReport:
    """
    The five loss terms and their weighted total

    Terms are 0-dim tensors so that total can be back-propagated.
    """
    recon: torch.Tensor
    unit: torch.Tensor
    lim: torch.Tensor
    sec: torch.Tensor
    perim: torch.Tensor
    total: torch.Tensor

    TERMS = ("recon", "unit", "lim", "sec", "perim")

    def to_dict(self) -> Dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}

    def check_finite(self) -> "LossReport":
        for name in self.TERMS + ("total",):
            value = getattr(self, name)
            if not bool(torch.isfinite(value)):
                raise NonFiniteError(name, float(value))
        return self


def weighted_total(recon, unit, lim, sec, perim, weights: LossWeights) -> torch.Tensor:
    return recon + weights.unit * unit + weights.lim * lim + weights.sec * sec + weights.perim * perim


# ============================================================================
# Term helpers (on evaluated fields)
# ============================================================================

def _as_tensor(value) -> torch.Tensor:
    return torch.as_tensor(np.asarray(value, dtype=np.float64), dtype=DTYPE)


def recon_terms(out: FieldOutput, normals, normal_weight: float = 0.01) -> torch.Tensor:
    """Per-point |d| + normal_weight * |grad d - n|"""
    normals = _as_tensor(normals)
    return torch.abs(out.d) + normal_weight * torch.linalg.vector_norm(out.grad - normals, dim=-1)


def unit_terms(out: FieldOutput) -> Tuple[torch.Tensor, torch.Tensor]:
    """Per-point union and part-averaged (|grad| - 1)^2"""
    union = (torch.linalg.vector_norm(out.grad, dim=-1) - 1.0) ** 2
    parts = ((torch.linalg.vector_norm(out.part_grad, dim=-1) - 1.0) ** 2).mean(dim=1)
    return union, parts


def _sigmoid_grad_sq(d: torch.Tensor, grad: torch.Tensor, beta: float) -> torch.Tensor:
    # |grad sigma(d)| = beta * sigma (1 - sigma) * |grad d|
    s = torch.sigmoid(beta * d)
    return (beta * s * (1.0 - s)) ** 2 * (grad ** 2).sum(dim=-1)


def perim_terms(out: FieldOutput, beta: float = 10.0) -> Tuple[torch.Tensor, torch.Tensor]:
    """Per-point union and part-averaged |grad sigmoid(beta d)|^2"""
    union = _sigmoid_grad_sq(out.d, out.grad, beta)
    parts = _sigmoid_grad_sq(out.part_d, out.part_grad, beta).mean(dim=1)
    return union, parts


# ============================================================================
# Losses
# ============================================================================

def _context(field: ImplicitField, pose, ctx):
    return ctx if ctx is not None else field.context(pose)


def _eval_surface(field, batch, ctx, create_graph):
    return field.evaluate(batch.surface, ctx, create_graph=create_graph)


def _eval_off_surface(field, batch, ctx, create_graph):
    return field.evaluate(batch.off_surface, ctx, part_grads=True, create_graph=create_graph)


def recon_loss(field: ImplicitField, batch: SampleBatch, pose: Optional[Pose] = None, ctx=None,
               normal_weight: float = 0.01, create_graph: bool = False) -> torch.Tensor:
    """Mean over surface points of |d| + normal_weight * |grad d - n|"""
    out = _eval_surface(field, batch, _context(field, pose, ctx), create_graph)
    return recon_terms(out, batch.normals, normal_weight).mean()


def unit_loss(field: ImplicitField, batch: SampleBatch, pose: Optional[Pose] = None, ctx=None,
              create_graph: bool = False) -> torch.Tensor:
    """Two-level unit-gradient loss over local + global points"""
    out = _eval_off_surface(field, batch, _context(field, pose, ctx), create_graph)
    union, parts = unit_terms(out)
    return union.mean() + parts.mean()


def perim_loss(field: ImplicitField, batch: SampleBatch, pose: Optional[Pose] = None, ctx=None,
               beta: float = 10.0, create_graph: bool = False) -> torch.Tensor:
    """Minimal perimeter loss over local + global points"""
    out = _eval_off_surface(field, batch, _context(field, pose, ctx), create_graph)
    union, parts = perim_terms(out, beta)
    return union.mean() + parts.mean()


def section_normals(skeleton: Skeleton, pose: Pose) -> Dict[Tuple[int, int], np.ndarray]:
    """
    Section normal of part n at each of its adjacent joints (world frame)

    normalize(u_b - u_n) where u_n points from the joint to part n's bone
    centre and u_b to the (mean) neighbour bone centre. Falls back to -u_n
    when the bones fold onto each other.
    """
    _, centers = bone_frames(skeleton, pose)
    joints = posed_joints(skeleton, pose)
    result = {}
    for n in range(skeleton.part_count):
        for joint in skeleton.adjacent_joints(n):
            u_n = centers[n] - joints[joint]
            u_n /= np.linalg.norm(u_n)
            others = [centers[b] - joints[joint] for b, j in skeleton.neighbors[n] if j == joint]
            u_b = np.mean([v / np.linalg.norm(v) for v in others], axis=0)
            normal = u_b - u_n
            length = np.linalg.norm(normal)
            result[(n, joint)] = normal / length if length > 1e-9 else -u_n
    return result


def _joint_queries(skeleton: Skeleton) -> List[Tuple[int, int]]:
    return [(n, joint) for n in range(skeleton.part_count) for joint in skeleton.adjacent_joints(n)]


def joint_terms(field: ImplicitField, skeleton: Skeleton, pose: Pose, ctx=None,
                create_graph: bool = False) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Bone limit and section normal losses from one evaluation per part

    Each part is evaluated (with seaming) at the posed positions of its
    adjacent joints.

    Returns:
        (lim, sec): mean |d_n(joint)| and mean |grad d_n(joint) - n_joint|
    """
    queries = _joint_queries(skeleton)
    if not queries:
        zero = torch.zeros((), dtype=DTYPE)
        return zero, zero
    ctx = _context(field, pose, ctx)
    joints = posed_joints(skeleton, pose)
    normals = section_normals(skeleton, pose)

    values, mismatches = [], []
    with torch.enable_grad():
        for n in range(skeleton.part_count):
            joint_ids = skeleton.adjacent_joints(n)
            if not joint_ids:
                continue
            points = _as_tensor(joints[joint_ids]).requires_grad_(True)
            # Seaming stays on: the offset toward the neighbor sharing this joint vanishes here,
            # but for a middle bone the other neighbor still moves the point
            d = field.part_value(points, ctx, n)
            (grad,) = torch.autograd.grad(d.sum(), points, create_graph=create_graph)
            target = _as_tensor(np.stack([normals[(n, j)] for j in joint_ids]))
            values.append(torch.abs(d))
            mismatches.append(torch.linalg.vector_norm(grad - target, dim=-1))
    return torch.cat(values).mean(), torch.cat(mismatches).mean()


def lim_loss(field: ImplicitField, skeleton: Skeleton, pose: Pose, ctx=None,
             create_graph: bool = False) -> torch.Tensor:
    """Mean |d_n| over every part's adjacent joints"""
    return joint_terms(field, skeleton, pose, ctx, create_graph)[0]


def sec_loss(field: ImplicitField, skeleton: Skeleton, pose: Pose, ctx=None,
             create_graph: bool = False) -> torch.Tensor:
    """Mean |grad d_n - section normal| over every part's adjacent joints"""
    return joint_terms(field, skeleton, pose, ctx, create_graph)[1]


def total_loss(field: ImplicitField, batch: SampleBatch, skeleton: Skeleton, pose: Pose,
               weights: Optional[LossWeights] = None, perim_beta: float = 10.0, ctx=None,
               create_graph: bool = True) -> LossReport:
    """
    All five terms and their weighted sum

    Args:
        field: Model (or analytic stand-in)
        batch: Sampled points of the frame
        skeleton: Skeleton of the frame
        pose: Pose of the frame
        weights: Loss weights (defaults when omitted)
        perim_beta: Sigmoid steepness of the perimeter term
        ctx: Precomputed pose context
        create_graph: Keep graphs so total can be back-propagated

    Returns:
        LossReport; raises NonFiniteError naming the first bad term
    """
    weights = weights or LossWeights()
    ctx = _context(field, pose, ctx)

    surface = _eval_surface(field, batch, ctx, create_graph)
    recon = recon_terms(surface, batch.normals, weights.normal).mean()

    off = _eval_off_surface(field, batch, ctx, create_graph)
    unit_union, unit_parts = unit_terms(off)
    unit = unit_union.mean() + unit_parts.mean()
    perim_union, perim_parts = perim_terms(off, perim_beta)
    perim = perim_union.mean() + perim_parts.mean()

    lim, sec = joint_terms(field, skeleton, pose, ctx, create_graph)

    report = LossReport(recon, unit, lim, sec, perim, weighted_total(recon, unit, lim, sec, perim, weights))
    return report.check_finite()
