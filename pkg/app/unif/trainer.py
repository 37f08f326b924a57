"""
Trainer
Adam over all network parameters and rigidness coefficients, step learning
rate schedule, frame batching, CSV loss log, checkpoints and resume
"""
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import torch
from loguru import logger
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from app.core.config import TrainConfig, settings
from app.core.exceptions import DatasetError, NonFiniteError, TrainingDivergedError
from app.core.logging import get_run_logger, loss_fields
from app.unif.dataio import ScanFrame
from app.unif.deform import DTYPE
from app.unif.model_io import load_checkpoint, save_checkpoint, save_model
from app.unif.neural_sdf import UnifModel, build_model
from app.unif.objective import LossReport, sample_batch, total_loss
from app.unif.skeleton import Pose, Skeleton

LOG_COLUMNS = ["epoch", "recon", "unit", "lim", "sec", "perim", "total", "lr"]
LOG_FILE = "train_log.csv"
CHECKPOINT_FILE = "checkpoint.unif"
MODEL_FILE = "model.unif"


@dataclass
class AdamState:
    """First/second moments over the flat parameter vector and the step counter"""
    m: torch.Tensor
    v: torch.Tensor
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=torch.zeros(size, dtype=DTYPE), v=torch.zeros(size, dtype=DTYPE))


def adam_step(state: AdamState, params: torch.Tensor, grads: torch.Tensor, lr: float) -> torch.Tensor:
    """
    One bias-corrected Adam update

    Args:
        state: Moments and step counter, updated in place
        params: Flat parameter vector
        grads: Flat gradient vector
        lr: Learning rate

    Returns:
        Updated parameter vector
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {tuple(params.shape)}, grads {tuple(grads.shape)}, "
                         f"state {tuple(state.m.shape)}")
    if not bool(torch.isfinite(grads).all()):
        raise NonFiniteError("gradient")

    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return params - lr * m_hat / (torch.sqrt(v_hat) + state.eps)


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Base rate scaled by lr_decay once per milestone reached"""
    passed = sum(1 for milestone in config.lr_milestones if epoch >= milestone)
    return config.lr * config.lr_decay ** passed


class Trainer:
    """
    Fits a UnifModel to a sequence of posed scan frames

    Every epoch visits the frames in a seeded random order, frames_per_batch
    at a time; the gradients of a batch are averaged before one Adam step.
    """

    def __init__(self, config: TrainConfig, frames: Sequence[ScanFrame], skeleton: Skeleton,
                 output_dir: Optional[str | Path] = None, rest_pose: Optional[Pose] = None,
                 run_id: Optional[str] = None):
        if not frames:
            raise DatasetError("training needs at least one frame")
        for frame in frames:
            if frame.pose is None:
                raise DatasetError(f"frame {frame.frame_id} has no pose")
            frame.pose.check(skeleton)
        self.config = config
        self.frames = list(frames)
        self.skeleton = skeleton
        self.rest_pose = rest_pose
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.run_logger = get_run_logger(run_id, frames=len(self.frames), parts=skeleton.part_count)
        self.history: List[Dict[str, float]] = []
        self.model: Optional[UnifModel] = None
        self.state: Optional[AdamState] = None
        self._contexts = None

    @property
    def log_path(self) -> Optional[Path]:
        return self.output_dir / LOG_FILE if self.output_dir else None

    @property
    def checkpoint_path(self) -> Optional[Path]:
        return self.output_dir / CHECKPOINT_FILE if self.output_dir else None

    def _setup(self, resume: bool) -> int:
        torch.set_num_threads(settings.num_threads)
        start = 0
        if resume and self.checkpoint_path is not None and self.checkpoint_path.exists():
            self.model, self.state, last_epoch = load_checkpoint(self.checkpoint_path)
            start = last_epoch + 1
            self._truncate_log(last_epoch)
            logger.info(f"Resuming from {self.checkpoint_path} at epoch {start}")
        else:
            self.model = build_model(self.skeleton, self.config, self.rest_pose)
            self.state = AdamState.zeros(sum(p.numel() for p in self.model.parameters()))
            if self.log_path is not None and self.log_path.exists():
                self.log_path.unlink()
        # Pose contexts depend only on the poses, not on parameters
        self._contexts = [self.model.context(frame.pose) for frame in self.frames]
        return start

    def _truncate_log(self, last_epoch: int) -> None:
        if self.log_path is None or not self.log_path.exists():
            return
        log = pd.read_csv(self.log_path)
        log = log[log["epoch"] <= last_epoch]
        log.to_csv(self.log_path, index=False)
        self.history = log.to_dict("records")

    def _frame_loss(self, index: int, epoch: int) -> LossReport:
        cfg = self.config
        frame = self.frames[index]
        batch = sample_batch(
            frame,
            (cfg.surface_points, cfg.local_points, cfg.global_points),
            cfg.sigma_local,
            cfg.box_scale,
            seed=[cfg.seed, epoch, frame.frame_id],
        )
        return total_loss(self.model, batch, self.skeleton, frame.pose, cfg.weights, cfg.perim_beta,
                          ctx=self._contexts[index])

    def _apply_step(self, lr: float) -> None:
        self.model.coeffs.mask_gradients()
        params = list(self.model.parameters())
        grads = torch.cat([
            (p.grad if p.grad is not None else torch.zeros_like(p)).reshape(-1) for p in params
        ])
        with torch.no_grad():
            updated = adam_step(self.state, parameters_to_vector(params), grads, lr)
            vector_to_parameters(updated, params)

    def run_epoch(self, epoch: int) -> Dict[str, float]:
        """One pass over all frames; returns the frame-averaged report"""
        cfg = self.config
        lr = lr_at(cfg, epoch)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(self.frames))
        sums = dict.fromkeys(LossReport.TERMS + ("total",), 0.0)

        for start in range(0, len(order), cfg.frames_per_batch):
            batch_ids = order[start:start + cfg.frames_per_batch]
            self.model.zero_grad(set_to_none=True)
            for index in batch_ids:
                report = self._frame_loss(int(index), epoch)
                (report.total / len(batch_ids)).backward()
                for key, value in report.to_dict().items():
                    sums[key] += value
            self._apply_step(lr)

        row = {"epoch": epoch, **{k: v / len(self.frames) for k, v in sums.items()}, "lr": lr}
        return {key: row[key] for key in LOG_COLUMNS}

    def _record(self, row: Dict[str, float]) -> None:
        self.history.append(row)
        if self.log_path is not None:
            pd.DataFrame([row], columns=LOG_COLUMNS).to_csv(
                self.log_path, mode="a", header=not self.log_path.exists(), index=False
            )

    def fit(self, resume: bool = False) -> UnifModel:
        """
        Train for config.epochs epochs

        Args:
            resume: Continue from output_dir/checkpoint.unif when it exists

        Returns:
            Trained model (also written to output_dir/model.unif)
        """
        cfg = self.config
        if self.output_dir is not None:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        start = self._setup(resume)
        self.run_logger.info(f"Training {self.skeleton.part_count} parts on {len(self.frames)} frames, "
                             f"epochs {start}..{cfg.epochs - 1}")
        started = time.time()

        for epoch in range(start, cfg.epochs):
            row = self.run_epoch(epoch)
            self._record(row)

            if epoch % cfg.log_every == 0 or epoch == cfg.epochs - 1:
                self.run_logger.info(
                    f"Epoch {epoch}: total={row['total']:.6g} recon={row['recon']:.6g} lr={row['lr']:.3g}",
                    **loss_fields({k: row[k] for k in LOG_COLUMNS if k != "epoch"}),
                    epoch=epoch,
                )
            if row["total"] > cfg.divergence_threshold:
                self.run_logger.error(f"Diverged at epoch {epoch}")
                raise TrainingDivergedError(epoch, row["total"], cfg.divergence_threshold,
                                            {k: row[k] for k in LossReport.TERMS})
            if self.checkpoint_path is not None and (epoch + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(self.checkpoint_path, self.model, self.state, epoch)

        if self.output_dir is not None:
            save_model(self.output_dir / MODEL_FILE, self.model)
        self.run_logger.info(f"Training finished in {time.time() - started:.1f}s")
        return self.model

    @property
    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=LOG_COLUMNS)


def train(config: TrainConfig, frames: Sequence[ScanFrame], skeleton: Skeleton,
          output_dir: Optional[str | Path] = None, resume: bool = False) -> UnifModel:
    """Convenience wrapper around Trainer.fit"""
    return Trainer(config, frames, skeleton, output_dir).fit(resume=resume)
