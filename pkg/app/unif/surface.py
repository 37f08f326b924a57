"""
Surface extraction
Dense grid evaluation of the union (or one part) field, marching cubes,
mesh topology helpers and OBJ / PLY / grid file I/O (trimesh, plyfile)
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Tuple

import mcubes
import numpy as np
import torch
import trimesh
from loguru import logger
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _csgraph_components

from app.core.exceptions import DatasetError, MalformedFileError, NonFiniteError
from app.unif.dataio import read_ply, write_ply
from app.unif.deform import DTYPE
from app.unif.neural_sdf import ImplicitField, UnionMode, combine
from app.unif.skeleton import Pose, posed_joints

MeshFormat = Literal["obj", "ply"]
BBox = Tuple[np.ndarray, np.ndarray]

MIN_RESOLUTION = 8
DEFAULT_MARGIN = 0.15
EVAL_CHUNK = 32768
GRID_MAGIC = "UNIFGRID"


@dataclass(eq=False)
class Grid:
    """Field values at (res+1)^3 nodes spanning bbox, optional argmin part per node"""
    values: np.ndarray
    origin: np.ndarray
    spacing: np.ndarray
    labels: Optional[np.ndarray] = None

    @property
    def resolution(self) -> Tuple[int, int, int]:
        return tuple(s - 1 for s in self.values.shape)

    @property
    def cell_diagonal(self) -> float:
        return float(np.linalg.norm(self.spacing))

    def node_points(self) -> np.ndarray:
        axes = [self.origin[i] + self.spacing[i] * np.arange(self.values.shape[i]) for i in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)


@dataclass(eq=False)
class Mesh:
    """
    Triangle mesh in meters

    Attributes:
        vertices: (V, 3) float64
        triangles: (F, 3) int64 vertex indices
        labels: Optional (V,) argmin part id per vertex
    """
    vertices: np.ndarray
    triangles: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise ValueError(f"triangle index out of range for {len(self.vertices)} vertices")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if len(self.labels) != len(self.vertices):
                raise ValueError(f"{len(self.labels)} labels for {len(self.vertices)} vertices")

    @classmethod
    def empty(cls) -> "Mesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def to_trimesh(self) -> trimesh.Trimesh:
        """Same vertices and faces, no merging or reordering"""
        return trimesh.Trimesh(vertices=self.vertices, faces=self.triangles, process=False)

    def face_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def edges(self) -> np.ndarray:
        """Unique undirected edges, (E, 2) sorted per row"""
        pairs = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]])
        return np.unique(np.sort(pairs, axis=1), axis=0)

    def signed_volume(self) -> float:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


# ============================================================================
# Grid evaluation
# ============================================================================

def default_bbox(model: ImplicitField, pose: Optional[Pose] = None, margin: float = DEFAULT_MARGIN) -> BBox:
    """Posed joint bounds enlarged by margin on every side"""
    skeleton = getattr(model, "skeleton", None)
    if skeleton is None:
        raise ValueError("a bounding box is required for fields without a skeleton")
    pose = pose if pose is not None else model.rest_pose
    joints = posed_joints(skeleton, pose)
    return joints.min(axis=0) - margin, joints.max(axis=0) + margin


def _check_bbox(bbox: BBox) -> BBox:
    lo, hi = (np.asarray(v, dtype=np.float64).reshape(3) for v in bbox)
    if not np.all(hi > lo):
        raise ValueError(f"empty bounding box {lo.tolist()} .. {hi.tolist()}")
    return lo, hi


def eval_grid(model: ImplicitField, pose: Optional[Pose] = None, bbox: Optional[BBox] = None,
              resolution: int = 64, part: Optional[int] = None, union: UnionMode = "min") -> Grid:
    """
    Sample the field on a regular grid

    Args:
        model: Field to evaluate
        pose: Pose (rest pose when omitted)
        bbox: (lo, hi) corners; posed skeleton bounds when omitted
        resolution: Cells per axis; nodes per axis are resolution + 1
        part: Evaluate a single part field instead of the union
        union: Union operator for the union field

    Returns:
        Grid; labels hold the argmin part per node for union grids
    """
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be >= {MIN_RESOLUTION}, got {resolution}")
    if part is not None and not 0 <= part < model.part_count:
        raise IndexError(f"part {part} out of range for {model.part_count} parts")
    lo, hi = _check_bbox(bbox if bbox is not None else default_bbox(model, pose))
    spacing = (hi - lo) / resolution
    grid = Grid(np.zeros((resolution + 1,) * 3), lo, spacing)
    points = grid.node_points()

    ctx = model.context(pose)
    values = np.empty(len(points))
    labels = np.empty(len(points), dtype=np.int64) if part is None else None
    with torch.no_grad():
        for start in range(0, len(points), EVAL_CHUNK):
            chunk = torch.as_tensor(points[start:start + EVAL_CHUNK], dtype=DTYPE)
            if part is None:
                d, argmin = combine(model.part_values(chunk, ctx), union, model.union_beta)
                labels[start:start + len(chunk)] = argmin.numpy()
            else:
                d = model.part_value(chunk, ctx, part)
            values[start:start + len(chunk)] = d.numpy()

    grid.values = values.reshape(grid.values.shape)
    if labels is not None:
        grid.labels = labels.reshape(grid.values.shape)
    logger.debug(f"Evaluated {len(points)} grid nodes (res {resolution}, part {part})")
    return grid


# ============================================================================
# Marching cubes
# ============================================================================

def _weld(vertices: np.ndarray, triangles: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    vertices, inverse = np.unique(vertices, axis=0, return_inverse=True)
    return vertices, inverse.reshape(-1)[triangles]


def clean_mesh(vertices: np.ndarray, triangles: np.ndarray) -> Mesh:
    """Weld equal vertices, drop zero-area triangles and unreferenced vertices"""
    if len(triangles) == 0:
        return Mesh.empty()
    vertices, triangles = _weld(vertices, triangles)
    distinct = (triangles[:, 0] != triangles[:, 1]) & (triangles[:, 1] != triangles[:, 2]) \
        & (triangles[:, 2] != triangles[:, 0])
    triangles = triangles[distinct]
    if len(triangles):
        triangles = triangles[Mesh(vertices, triangles).face_areas() > 0.0]
    if len(triangles) == 0:
        return Mesh.empty()
    used, remap = np.unique(triangles, return_inverse=True)
    return Mesh(vertices[used], remap.reshape(-1, 3))


def marching_cubes(grid: Grid, iso: float = 0.0) -> Mesh:
    """
    Extract the iso level set of a grid

    Vertices are placed by linear interpolation along cell edges and mapped
    to world coordinates. Faces are oriented so that normals point towards
    increasing field values (outwards for an SDF). A grid without a crossing
    gives an empty mesh.
    """
    values = np.asarray(grid.values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("grid")
    if values.min() > iso or values.max() < iso:
        return Mesh.empty()

    vertices, triangles = mcubes.marching_cubes(values, iso)
    vertices = grid.origin + np.asarray(vertices, dtype=np.float64) * grid.spacing
    mesh = clean_mesh(vertices, np.asarray(triangles, dtype=np.int64))
    if not mesh.is_empty and mesh.signed_volume() < 0:
        mesh.triangles = mesh.triangles[:, ::-1].copy()
    return mesh


def point_labels(model: ImplicitField, points: np.ndarray, pose: Optional[Pose] = None) -> np.ndarray:
    """Argmin part id at each point"""
    if len(points) == 0:
        return np.zeros(0, dtype=np.int64)
    ctx = model.context(pose)
    labels = []
    with torch.no_grad():
        for start in range(0, len(points), EVAL_CHUNK):
            chunk = torch.as_tensor(points[start:start + EVAL_CHUNK], dtype=DTYPE)
            labels.append(torch.argmin(model.part_values(chunk, ctx), dim=-1).numpy())
    return np.concatenate(labels)


def extract_union(model: ImplicitField, pose: Optional[Pose] = None, bbox: Optional[BBox] = None,
                  resolution: int = 64, union: UnionMode = "min", labels: bool = True) -> Mesh:
    """Union surface with per-vertex argmin part labels"""
    mesh = marching_cubes(eval_grid(model, pose, bbox, resolution, union=union))
    if labels:
        mesh.labels = point_labels(model, mesh.vertices, pose)
    logger.info(f"Extracted union mesh: {len(mesh.vertices)} vertices, {len(mesh.triangles)} triangles")
    return mesh


def extract_part(model: ImplicitField, pose: Optional[Pose], n: int, bbox: Optional[BBox] = None,
                 resolution: int = 64) -> Mesh:
    """Zero level set of the single part field d_n (seaming applied)"""
    mesh = marching_cubes(eval_grid(model, pose, bbox, resolution, part=n))
    mesh.labels = np.full(len(mesh.vertices), n, dtype=np.int64)
    return mesh


# ============================================================================
# Topology
# ============================================================================

def connected_components(mesh: Mesh) -> int:
    """Number of edge-connected vertex components"""
    if mesh.is_empty:
        return 0
    edges = mesh.edges()
    count = len(mesh.vertices)
    adjacency = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(count, count))
    n_components, _ = _csgraph_components(adjacency, directed=False)
    return int(n_components)


def euler_characteristic(mesh: Mesh) -> int:
    """V - E + F"""
    if mesh.is_empty:
        return 0
    return len(mesh.vertices) - len(mesh.edges()) + len(mesh.triangles)


# ============================================================================
# File I/O
# ============================================================================

OBJ_DIGITS = 12


def _format_of(path: Path, fmt: Optional[str]) -> str:
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt not in ("obj", "ply"):
        raise ValueError(f"unsupported mesh format '{fmt}' (expected obj or ply)")
    return fmt


def export_mesh(mesh: Mesh, path: str | Path, fmt: Optional[MeshFormat] = None) -> None:
    """
    Write an ASCII OBJ or a binary little-endian PLY

    OBJ coordinates carry 12 decimals. Part labels become the PLY vertex
    property part_id.
    """
    path = Path(path)
    fmt = _format_of(path, fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "obj":
        if mesh.is_empty:
            path.write_text("# empty mesh\n", encoding="ascii")
            return
        mesh.to_trimesh().export(str(path), file_type="obj", include_normals=False, include_color=False,
                                 include_texture=False, digits=OBJ_DIGITS)
        return

    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if mesh.labels is not None:
        fields.append(("part_id", "<i4"))
    vertex = np.empty(len(mesh.vertices), dtype=fields)
    for i, name in enumerate("xyz"):
        vertex[name] = mesh.vertices[:, i]
    if mesh.labels is not None:
        vertex["part_id"] = mesh.labels
    write_ply(path, vertex, mesh.triangles)


def read_obj(path: str | Path) -> Mesh:
    """Read an OBJ file; files without face records give an empty mesh"""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"Mesh file not found: {path}")
    # trimesh returns an empty Scene rather than a mesh for face-less files
    if not any(line.startswith("f ") for line in path.read_text(encoding="utf-8", errors="replace").splitlines()):
        return Mesh.empty()
    try:
        loaded = trimesh.load(str(path), file_type="obj", process=False, maintain_order=True)
    except Exception as e:
        raise MalformedFileError(path, f"unreadable OBJ: {e}") from e
    if isinstance(loaded, trimesh.Scene):
        meshes = [g for g in loaded.geometry.values() if isinstance(g, trimesh.Trimesh)]
        if not meshes:
            return Mesh.empty()
        loaded = trimesh.util.concatenate(meshes)
    vertices = np.asarray(loaded.vertices, dtype=np.float64)
    if not np.all(np.isfinite(vertices)):
        raise MalformedFileError(path, "non-finite vertex coordinates")
    try:
        return Mesh(vertices, np.asarray(loaded.faces, dtype=np.int64))
    except ValueError as e:
        raise MalformedFileError(path, str(e)) from e


def read_mesh(path: str | Path) -> Mesh:
    """Read an OBJ or PLY mesh written by export_mesh"""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"Mesh file not found: {path}")
    if _format_of(path, None) == "obj":
        return read_obj(path)
    data = read_ply(path)
    try:
        vertices = np.stack([data["x"], data["y"], data["z"]], axis=1).astype(np.float64)
        return Mesh(vertices, data.get("faces", np.zeros((0, 3), dtype=np.int64)), data.get("part_id"))
    except (KeyError, ValueError) as e:
        raise MalformedFileError(path, f"invalid mesh: {e}") from e


def save_grid(path: str | Path, grid: Grid) -> None:
    """One text header line, then the values as flat float32 little-endian (C order)"""
    shape = " ".join(str(s) for s in grid.values.shape)
    origin = " ".join(f"{v:.17g}" for v in grid.origin)
    spacing = " ".join(f"{v:.17g}" for v in grid.spacing)
    with open(path, "wb") as f:
        f.write(f"{GRID_MAGIC} {shape} {origin} {spacing}\n".encode("ascii"))
        f.write(np.ascontiguousarray(grid.values, dtype="<f4").tobytes())


def load_grid(path: str | Path) -> Grid:
    path = Path(path)
    raw = path.read_bytes()
    end = raw.find(b"\n")
    fields = raw[:end].decode("ascii", errors="replace").split() if end >= 0 else []
    if len(fields) != 10 or fields[0] != GRID_MAGIC:
        raise MalformedFileError(path, "bad grid header", "line 1")
    try:
        shape = tuple(int(v) for v in fields[1:4])
        origin = np.array([float(v) for v in fields[4:7]])
        spacing = np.array([float(v) for v in fields[7:10]])
    except ValueError as e:
        raise MalformedFileError(path, f"bad grid header: {e}", "line 1") from e
    blob = raw[end + 1:]
    if len(blob) != 4 * int(np.prod(shape)):
        raise MalformedFileError(path, f"expected {4 * int(np.prod(shape))} value bytes, found {len(blob)}",
                                 f"offset {end + 1}")
    values = np.frombuffer(blob, dtype="<f4").reshape(shape).astype(np.float64)
    return Grid(values, origin, spacing)
