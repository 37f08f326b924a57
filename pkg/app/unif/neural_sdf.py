"""
Neural part SDFs
Per-bone MLPs with geometric initialization and pose conditioning, the
union operators and the evaluation wrapper used by losses and extraction
"""
import math
from abc import ABC, abstractmethod
from contextlib import nullcontext
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
import torch
from loguru import logger
from torch import nn
from torch.nn.utils import parametrize
from torch.nn.utils.parametrizations import weight_norm

from app.core.config import TrainConfig
from app.core.exceptions import NonFiniteError, PoseMismatchError
from app.unif.deform import DTYPE, PoseContext, RigidnessCoeffs, canonicalize_points
from app.unif.skeleton import Pose, Skeleton

UnionMode = Literal["min", "smooth", "softmin"]

# Calibration set for the geometric init: shells around the bone centre
_CALIB_RADII = (0.0025, 0.005, 0.01, 0.02, 0.04, 0.08, 0.15, 0.3, 0.5)
_CALIB_DIRECTIONS = 64
_CALIB_GRAD_WEIGHT = 0.05
_CALIB_RIDGE = 1e-8


def _as_tensor(value) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value.to(DTYPE)
    return torch.as_tensor(np.asarray(value, dtype=np.float64), dtype=DTYPE)


def fibonacci_sphere(count: int) -> np.ndarray:
    """Deterministic, nearly uniform unit directions"""
    i = np.arange(count, dtype=np.float64) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / count)
    azimuth = math.pi * (1.0 + math.sqrt(5.0)) * i
    return np.stack([np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)], axis=1)


# ============================================================================
# Union operators
# ============================================================================

def union_min(d) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Hard union: minimum over parts (last axis) and its index

    Ties resolve to the lowest part index; the gradient flows only through
    the selected part.
    """
    d = _as_tensor(d)
    if d.shape[-1] == 0:
        raise ValueError("union of zero parts")
    argmin = torch.argmin(d, dim=-1)
    return torch.gather(d, -1, argmin.unsqueeze(-1)).squeeze(-1), argmin


def union_smooth(d, beta: float = 200.0) -> torch.Tensor:
    """
    Improved smooth union: min + sum(dd * exp(-beta dd)) / sum(exp(-beta dd))

    dd = d - min(d) >= 0, so the exponentials never overflow and the result
    lies in [min(d), min(d) + max(dd)].
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    d = _as_tensor(d)
    low, _ = union_min(d)
    gap = d - low.unsqueeze(-1)
    weights = torch.softmax(-beta * gap, dim=-1)
    return low + (gap * weights).sum(dim=-1)


def union_softmin(d, beta: float = 200.0) -> torch.Tensor:
    """Plain smooth minimum: exp(-beta d) weighted average of all parts"""
    d = _as_tensor(d)
    if d.shape[-1] == 0:
        raise ValueError("union of zero parts")
    return (d * torch.softmax(-beta * d, dim=-1)).sum(dim=-1)


def combine(part_d: torch.Tensor, mode: UnionMode = "min", beta: float = 200.0) -> Tuple[torch.Tensor, torch.Tensor]:
    """Union of (M, N) part values by mode; also returns the argmin part"""
    low, argmin = union_min(part_d)
    if mode == "min":
        return low, argmin
    if mode == "smooth":
        return union_smooth(part_d, beta), argmin
    if mode == "softmin":
        return union_softmin(part_d, beta), argmin
    raise ValueError(f"unknown union mode '{mode}'")


# ============================================================================
# Field interface
# ============================================================================

@dataclass
class FieldOutput:
    """Union value, part values and their spatial gradients at M points"""
    d: torch.Tensor
    part_d: torch.Tensor
    argmin: torch.Tensor
    grad: Optional[torch.Tensor] = None
    part_grad: Optional[torch.Tensor] = None


class ImplicitField(nn.Module, ABC):
    """
    A union of N part SDFs evaluated at world points for a given pose

    Subclasses provide part_values; evaluate adds the union and gradients.
    Analytic fields ignore the pose context.
    """

    union_mode: UnionMode = "smooth"
    union_beta: float = 200.0

    @property
    @abstractmethod
    def part_count(self) -> int:
        ...

    @abstractmethod
    def part_values(self, points: torch.Tensor, ctx=None) -> torch.Tensor:
        """(M, 3) world points -> (M, N) part values"""

    def part_value(self, points: torch.Tensor, ctx, n: int) -> torch.Tensor:
        return self.part_values(points, ctx)[:, n]

    def context(self, pose: Optional[Pose]):
        return None

    def evaluate(self, points, ctx=None, union: Optional[UnionMode] = None, with_grad: bool = True,
                 part_grads: bool = False, create_graph: bool = False) -> FieldOutput:
        """
        Evaluate the field and (optionally) its spatial gradients

        Args:
            points: (M, 3) world points
            ctx: Pose context from self.context(pose)
            union: Union mode, defaults to the field's training union
            with_grad: Compute the gradient of the union value
            part_grads: Also compute per-part gradients (M, N, 3)
            create_graph: Keep the graph so losses on gradients can be
                differentiated w.r.t. parameters

        Returns:
            FieldOutput
        """
        points = _as_tensor(points).reshape(-1, 3)
        if not bool(torch.isfinite(points).all()):
            raise NonFiniteError("points")
        need_grad = with_grad or part_grads
        if need_grad:
            points = points.detach().requires_grad_(True)

        with torch.enable_grad() if need_grad else nullcontext():
            part_d = self.part_values(points, ctx)
            d, argmin = combine(part_d, union or self.union_mode, self.union_beta)
            grad = part_grad = None
            if with_grad:
                (grad,) = torch.autograd.grad(d.sum(), points, create_graph=create_graph, retain_graph=True)
            if part_grads:
                part_grad = torch.stack([
                    torch.autograd.grad(part_d[:, n].sum(), points, create_graph=create_graph,
                                        retain_graph=True)[0]
                    for n in range(part_d.shape[1])
                ], dim=1)

        return FieldOutput(d=d, part_d=part_d, argmin=argmin, grad=grad, part_grad=part_grad)


# ============================================================================
# Part network
# ============================================================================

class PartMLP(nn.Module):
    """
    SDF trunk of one part plus its pose-condition head

    Trunk: four Softplus hidden layers (weight-normalized) with the input
    concatenated back in before the third one; the pose head output is
    added to the first hidden pre-activation.
    """

    def __init__(self, condition_size: int, width: int = 64, beta: float = 100.0, coord_scale: float = 0.1):
        super().__init__()
        self.width = width
        self.coord_scale = coord_scale
        self.act = nn.Softplus(beta=beta)
        self.lin0 = nn.Linear(3, width, dtype=DTYPE)
        self.lin1 = nn.Linear(width, width - 3, dtype=DTYPE)
        self.lin2 = nn.Linear(width, width, dtype=DTYPE)
        self.lin3 = nn.Linear(width, width, dtype=DTYPE)
        self.out = nn.Linear(width, 1, dtype=DTYPE)
        self.pose_head = nn.Sequential(
            nn.Linear(condition_size, width, dtype=DTYPE),
            nn.Softplus(beta=beta),
            nn.Linear(width, width, dtype=DTYPE),
        )
        # Kaiming for the first head layer is nn.Linear's default
        with torch.no_grad():
            nn.init.normal_(self.pose_head[2].weight, 0.0, 1e-5)
            nn.init.zeros_(self.pose_head[2].bias)

        for name in ("lin0", "lin1", "lin2", "lin3", "out"):
            setattr(self, name, weight_norm(getattr(self, name)))

    @property
    def trunk(self) -> Tuple[nn.Linear, ...]:
        return self.lin0, self.lin1, self.lin2, self.lin3

    def hidden(self, x: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        """Last hidden activations for (M, 3) canonical points"""
        x = x / self.coord_scale
        h = self.act(self.lin0(x) + self.pose_head(z))
        h = self.act(self.lin1(h))
        h = torch.cat([h, x], dim=-1) / math.sqrt(2.0)
        h = self.act(self.lin2(h))
        return self.act(self.lin3(h))

    def forward(self, x: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        return self.out(self.hidden(x, z)).squeeze(-1)


def _set_weight(layer: nn.Linear, weight: torch.Tensor) -> None:
    """Assign an effective weight, re-deriving (g, v) for weight-normalized layers"""
    if parametrize.is_parametrized(layer, "weight"):
        originals = layer.parametrizations.weight
        originals.original0.copy_(torch.linalg.vector_norm(weight, dim=1, keepdim=True))
        originals.original1.copy_(weight)
    else:
        layer.weight.copy_(weight)


def init_geometric(part: PartMLP, radius: float = 0.01, condition: Optional[torch.Tensor] = None) -> None:
    """
    Initialize a part as a small sphere around its bone centre

    Hidden layers get the usual geometric init (N(0, sqrt(2)/sqrt(out)),
    zero bias). The output layer is then solved in closed form so that the
    part matches sqrt(|x|^2 + s^2) - sqrt(r^2 + s^2), s = r/4, in value and
    gradient on shells around the origin; this keeps the zero level at
    |x| = r for a width-64 trunk whose mean-weight output is too anisotropic.

    Args:
        part: Freshly constructed part
        radius: Sphere radius in meters
        condition: Pose condition used during the fit (zeros when omitted)
    """
    with torch.no_grad():
        for layer in part.trunk:
            out_dim, in_dim = layer.weight.shape
            _set_weight(layer, torch.randn(out_dim, in_dim, dtype=DTYPE) * (math.sqrt(2.0) / math.sqrt(out_dim)))
            layer.bias.zero_()

    if condition is None:
        condition = torch.zeros(part.pose_head[0].in_features, dtype=DTYPE)

    smoothing = 0.25 * radius
    directions = fibonacci_sphere(_CALIB_DIRECTIONS)
    points = np.concatenate([np.zeros((1, 3))] + [r * directions for r in _CALIB_RADII])
    points = torch.as_tensor(points, dtype=DTYPE).requires_grad_(True)
    soft_norm = torch.sqrt((points.detach() ** 2).sum(dim=1) + smoothing ** 2)
    target = soft_norm - math.sqrt(radius ** 2 + smoothing ** 2)
    target_grad = points.detach() / soft_norm.unsqueeze(1)

    features = part.hidden(points, condition)
    jac = torch.stack([
        torch.autograd.grad(features[:, j].sum(), points, retain_graph=True)[0]
        for j in range(features.shape[1])
    ], dim=1).detach()
    features = features.detach()

    count, width = features.shape
    ones = torch.ones(count, 1, dtype=DTYPE)
    zeros = torch.zeros(count, 1, dtype=DTYPE)
    blocks = [torch.cat([features, ones], dim=1)]
    rhs = [target]
    for axis in range(3):
        blocks.append(_CALIB_GRAD_WEIGHT * torch.cat([jac[:, :, axis], zeros], dim=1))
        rhs.append(_CALIB_GRAD_WEIGHT * target_grad[:, axis])
    A = torch.cat(blocks)
    ridge = math.sqrt(_CALIB_RIDGE * float((A[:, :width] ** 2).sum()) / width)
    A = torch.cat([A, torch.cat([ridge * torch.eye(width, dtype=DTYPE), torch.zeros(width, 1, dtype=DTYPE)], dim=1)])
    y = torch.cat(rhs + [torch.zeros(width, dtype=DTYPE)])

    solution = torch.linalg.lstsq(A, y.unsqueeze(1)).solution.squeeze(1)
    with torch.no_grad():
        _set_weight(part.out, solution[:width].unsqueeze(0))
        part.out.bias.copy_(solution[width:])

    residual = float(torch.abs(features @ solution[:width] + solution[width] - target).max())
    logger.debug(f"Geometric init fitted (radius={radius}, max residual={residual:.3g})")


def eval_part(part: PartMLP, x_bar, z) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Value and spatial gradient of one part at canonical points

    Args:
        part: Part network
        x_bar: (3,) or (M, 3) canonical points
        z: Pose condition vector

    Returns:
        (d, grad) with shapes (M,) and (M, 3), or a scalar and a 3-vector
        for a single point
    """
    x_bar = _as_tensor(x_bar)
    z = _as_tensor(z)
    if not bool(torch.isfinite(x_bar).all()) or not bool(torch.isfinite(z).all()):
        raise NonFiniteError("part input")
    single = x_bar.dim() == 1
    points = x_bar.reshape(-1, 3).detach().requires_grad_(True)
    with torch.enable_grad():
        d = part(points, z)
        (grad,) = torch.autograd.grad(d.sum(), points)
    d, grad = d.detach(), grad.detach()
    return (d[0], grad[0]) if single else (d, grad)


# ============================================================================
# Union model
# ============================================================================

class UnifModel(ImplicitField):
    """
    Union of one PartMLP per bone with learnable rigidness coefficients

    Points are canonicalized per part (rigid local transform plus adjacent
    part seaming) before each part network sees them.
    """

    def __init__(self, skeleton: Skeleton, rest_pose: Optional[Pose] = None,
                 config: Optional[TrainConfig] = None, init: bool = True):
        super().__init__()
        config = config or TrainConfig()
        if config.part_count is not None and config.part_count != skeleton.part_count:
            raise PoseMismatchError(
                f"part_count={config.part_count} but the skeleton has {skeleton.part_count} bones"
            )
        self.skeleton = skeleton
        self.rest_pose = (rest_pose or Pose.identity(skeleton.part_count)).check(skeleton)
        self.config = config
        self.union_mode = config.union_train
        self.union_beta = config.union_beta
        self.aps = config.aps

        condition_size = 12 * skeleton.part_count
        self.parts = nn.ModuleList([
            PartMLP(condition_size, config.hidden_width, config.act_beta, config.coord_scale)
            for _ in range(skeleton.part_count)
        ])
        self.coeffs = RigidnessCoeffs(skeleton.part_count, skeleton.adjacency, config.alpha_init, config.beta_init)

        if init:
            rest_ctx = self.context(self.rest_pose)
            for n, part in enumerate(self.parts):
                init_geometric(part, config.init_radius, rest_ctx.conditions[n])

    @property
    def part_count(self) -> int:
        return len(self.parts)

    def context(self, pose: Optional[Pose]) -> PoseContext:
        if isinstance(pose, PoseContext):
            return pose
        return PoseContext.build(
            self.skeleton,
            self.rest_pose,
            pose if pose is not None else self.rest_pose,
            q_ratio=self.config.q_ratio,
            rigidness_geometry=self.config.rigidness_geometry,
        )

    def part_value(self, points: torch.Tensor, ctx: PoseContext, n: int) -> torch.Tensor:
        x_bar = canonicalize_points(points, ctx, self.coeffs, n, aps=self.aps)
        return self.parts[n](x_bar, ctx.conditions[n])

    def part_values(self, points: torch.Tensor, ctx: PoseContext = None) -> torch.Tensor:
        if ctx is None:
            ctx = self.context(None)
        return torch.stack([self.part_value(points, ctx, n) for n in range(self.part_count)], dim=1)


def build_model(skeleton: Skeleton, config: Optional[TrainConfig] = None,
                rest_pose: Optional[Pose] = None) -> UnifModel:
    """Seeded model construction (torch RNG seeded from config.seed)"""
    config = config or TrainConfig()
    torch.manual_seed(config.seed)
    return UnifModel(skeleton, rest_pose, config)


def eval_union(model: ImplicitField, x, pose: Optional[Pose] = None,
               union: Optional[UnionMode] = None) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Union value, its spatial gradient and the per-part values

    Args:
        model: Field to evaluate
        x: (3,) or (M, 3) world points
        pose: Pose; the rest pose when omitted
        union: Union mode, the model's training union when omitted

    Returns:
        (d, grad, part_d)
    """
    x = _as_tensor(x)
    single = x.dim() == 1
    out = model.evaluate(x.reshape(-1, 3), model.context(pose), union=union)
    d, grad, part_d = out.d.detach(), out.grad.detach(), out.part_d.detach()
    if single:
        return d[0], grad[0], part_d[0]
    return d, grad, part_d
