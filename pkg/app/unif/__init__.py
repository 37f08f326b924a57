"""
Part-union implicit surfaces: skeleton geometry, seaming deformation,
part networks, training, extraction and evaluation
"""
from .dataio import Dataset, ScanFrame, generate_sequence, load_dataset, save_dataset
from .evalmetrics import MetricReport, chamfer_and_f1, evaluate_mesh, p2s, recall, sample_mesh
from .model_io import load_model, save_model
from .neural_sdf import UnifModel, build_model, eval_union
from .objective import LossReport, total_loss
from .skeleton import Pose, Skeleton, bone_frame, pose_condition
from .surface import Mesh, eval_grid, export_mesh, extract_part, extract_union, marching_cubes
from .trainer import Trainer, train

__all__ = [
    'Dataset', 'ScanFrame', 'generate_sequence', 'load_dataset', 'save_dataset',
    'MetricReport', 'chamfer_and_f1', 'evaluate_mesh', 'p2s', 'recall', 'sample_mesh',
    'load_model', 'save_model',
    'UnifModel', 'build_model', 'eval_union',
    'LossReport', 'total_loss',
    'Pose', 'Skeleton', 'bone_frame', 'pose_condition',
    'Mesh', 'eval_grid', 'export_mesh', 'extract_part', 'extract_union', 'marching_cubes',
    'Trainer', 'train',
]
