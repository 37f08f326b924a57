"""
Evaluation metrics
Point-to-surface distance, recall, Chamfer distance and F-score between
scan point clouds and extracted meshes
"""
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import trimesh
from loguru import logger
from scipy.spatial import cKDTree

from app.core.exceptions import DegenerateGeometryError
from app.unif.neural_sdf import ImplicitField
from app.unif.skeleton import Pose
from app.unif.surface import Mesh, point_labels

THRESHOLD_M = 1e-3
MM = 1000.0
DEFAULT_SAMPLES = 100000


@dataclass
class MetricReport:
    """Distances in millimeters, rates in percent"""
    p2s_mm: float
    chamfer_mm: float
    recall_pct: float
    precision_pct: float
    f1_pct: float

    def __post_init__(self):
        for name in ("p2s_mm", "chamfer_mm"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("recall_pct", "precision_pct", "f1_pct"):
            if not 0.0 <= getattr(self, name) <= 100.0:
                raise ValueError(f"{name} must lie in [0, 100]")

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def _points(points) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise ValueError("empty point set")
    return points


def _surface(mesh: Mesh) -> trimesh.Trimesh:
    """trimesh view of the non-degenerate triangles"""
    if mesh.is_empty:
        raise DegenerateGeometryError("mesh has no triangles")
    triangles = mesh.triangles[mesh.face_areas() > 0.0]
    if len(triangles) == 0:
        raise DegenerateGeometryError("mesh has only zero-area triangles")
    return Mesh(mesh.vertices, triangles).to_trimesh()


def sample_mesh(mesh: Mesh, count: int = DEFAULT_SAMPLES, seed: int = 0) -> np.ndarray:
    """
    Area-weighted uniform samples on the mesh surface

    Args:
        mesh: Mesh with at least one non-degenerate triangle
        count: Number of samples
        seed: RNG seed

    Returns:
        (count, 3) points
    """
    points, _ = trimesh.sample.sample_surface(_surface(mesh), count, seed=seed)
    return np.asarray(points, dtype=np.float64)


def mesh_distances(points, mesh: Mesh) -> np.ndarray:
    """Exact point-to-mesh distances (closest point on any triangle)"""
    points = _points(points)
    _, distances, _ = trimesh.proximity.closest_point(_surface(mesh), points)
    return np.asarray(distances, dtype=np.float64)


def p2s(scan_points, mesh: Mesh) -> float:
    """Mean scan-to-mesh distance in mm"""
    return float(mesh_distances(scan_points, mesh).mean() * MM)


def recall(scan_points, mesh: Mesh, threshold: float = THRESHOLD_M) -> float:
    """Percentage of scan points closer than threshold (meters) to the mesh"""
    return float((mesh_distances(scan_points, mesh) < threshold).mean() * 100.0)


def f1_score(precision: float, recall_pct: float) -> float:
    if precision + recall_pct <= 0:
        return 0.0
    return 2.0 * precision * recall_pct / (precision + recall_pct)


def chamfer_and_f1(scan_points, mesh: Mesh, threshold: float = THRESHOLD_M, samples: Optional[int] = None,
                   seed: int = 0) -> Tuple[float, float, float, float]:
    """
    Chamfer distance and F-score

    Scan-to-mesh distances are exact point-to-triangle; mesh-to-scan
    distances go from area-weighted mesh samples to the nearest scan point.

    Args:
        scan_points: (M, 3) scan points
        mesh: Extracted mesh
        threshold: Distance threshold in meters for recall and precision
        samples: Number of mesh samples, the scan size when omitted
        seed: Mesh sampling seed

    Returns:
        (chamfer_mm, precision_pct, recall_pct, f1_pct)
    """
    to_mesh, to_scan = _two_way(scan_points, mesh, samples, seed)
    return _summarize(to_mesh, to_scan, threshold)[1:]


def _two_way(scan_points, mesh: Mesh, samples: Optional[int], seed: int) -> Tuple[np.ndarray, np.ndarray]:
    scan_points = _points(scan_points)
    to_mesh = mesh_distances(scan_points, mesh)
    mesh_samples = sample_mesh(mesh, samples or len(scan_points), seed)
    to_scan, _ = cKDTree(scan_points).query(mesh_samples)
    return to_mesh, to_scan


def _summarize(to_mesh: np.ndarray, to_scan: np.ndarray, threshold: float) -> Tuple[float, float, float, float, float]:
    chamfer = 0.5 * (to_mesh.mean() + to_scan.mean()) * MM
    rec = float((to_mesh < threshold).mean() * 100.0)
    prec = float((to_scan < threshold).mean() * 100.0)
    return float(to_mesh.mean() * MM), float(chamfer), prec, rec, f1_score(prec, rec)


def evaluate_mesh(scan_points, mesh: Mesh, threshold: float = THRESHOLD_M, samples: Optional[int] = None,
                  seed: int = 0) -> MetricReport:
    """All four metrics; an empty mesh scores zero rates and infinite distances"""
    _points(scan_points)
    if mesh.is_empty:
        logger.warning("Evaluating an empty mesh")
        return MetricReport(float("inf"), float("inf"), 0.0, 0.0, 0.0)
    p2s_mm, chamfer, prec, rec, f1 = _summarize(*_two_way(scan_points, mesh, samples, seed), threshold)
    return MetricReport(p2s_mm, chamfer, rec, prec, f1)


def part_assignment(model: ImplicitField, points, part: int, pose: Optional[Pose] = None) -> float:
    """Percentage of points whose argmin part is the given part"""
    labels = point_labels(model, _points(points), pose)
    return float((labels == part).mean() * 100.0)
