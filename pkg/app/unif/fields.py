"""
Analytic fields
Closed-form SDFs sharing the ImplicitField interface, used as oracles for
losses, extraction and metrics
"""
from typing import Sequence

import numpy as np
import torch

from app.unif.deform import DTYPE
from app.unif.neural_sdf import ImplicitField


class SphereField(ImplicitField):
    """scale * (|x - center| - radius) as a single part"""

    def __init__(self, radius: float = 1.0, center=(0.0, 0.0, 0.0), scale: float = 1.0):
        super().__init__()
        self.radius = float(radius)
        self.center = torch.as_tensor(np.asarray(center, dtype=np.float64), dtype=DTYPE)
        self.scale = float(scale)

    @property
    def part_count(self) -> int:
        return 1

    def part_values(self, points: torch.Tensor, ctx=None) -> torch.Tensor:
        dist = torch.linalg.vector_norm(points - self.center, dim=-1)
        return (self.scale * (dist - self.radius)).unsqueeze(-1)


class ShellField(ImplicitField):
    """
    Two concentric spherical surfaces | |x| - radius | - half_width

    Zero level at radius - half_width and radius + half_width.
    """

    def __init__(self, radius: float = 1.0, half_width: float = 0.1, center=(0.0, 0.0, 0.0)):
        super().__init__()
        self.radius = float(radius)
        self.half_width = float(half_width)
        self.center = torch.as_tensor(np.asarray(center, dtype=np.float64), dtype=DTYPE)

    @property
    def part_count(self) -> int:
        return 1

    def part_values(self, points: torch.Tensor, ctx=None) -> torch.Tensor:
        dist = torch.linalg.vector_norm(points - self.center, dim=-1)
        return (torch.abs(dist - self.radius) - self.half_width).unsqueeze(-1)


class ComposedField(ImplicitField):
    """Single-part fields stacked as the parts of one union"""

    def __init__(self, fields: Sequence[ImplicitField], union_beta: float = 200.0):
        super().__init__()
        if not fields:
            raise ValueError("ComposedField needs at least one part")
        self.fields = torch.nn.ModuleList(fields)
        self.union_beta = union_beta

    @property
    def part_count(self) -> int:
        return len(self.fields)

    def part_values(self, points: torch.Tensor, ctx=None) -> torch.Tensor:
        return torch.cat([field.part_values(points, ctx) for field in self.fields], dim=1)
