"""Semantic-guided transient suppression for 2D Gaussian splatting.

A differentiable splatting trainer whose per-primitive semantic scores,
opacity regularization and periodic pruning remove transient content from
multi-view reconstructions while preserving static geometry.
"""

__version__ = "0.1.0"

from .errors import SplatCleanError, TrainingError, ValidationError
from .scene import GaussianPrimitive, SceneModel, SemanticStats
from .rasterizer import CameraPose, RasterConfig, backward, render
from .scoring import (
    PromptSet,
    ScoreFileScorer,
    SyntheticOracleScorer,
    ViewScore,
    cosine_similarity,
    distractor_score,
    load_score_file,
    write_score_file,
)
from .accumulate import accumulate
from .losses import LossBreakdown, clip_regularizer, photometric_loss, total_loss
from .pruning import CalibrationResult, calibrate_threshold, prune_mask
from .dataset import DatasetManifest, GeneratorSpec, generate_synthetic, load_dataset
from .metrics import psnr, removal_metrics, ssim
from .training import TrainConfig, TrainReport, load_config, save_config, schedule_gate, train

__all__ = [
    "CameraPose",
    "CalibrationResult",
    "DatasetManifest",
    "GaussianPrimitive",
    "GeneratorSpec",
    "LossBreakdown",
    "PromptSet",
    "RasterConfig",
    "SceneModel",
    "ScoreFileScorer",
    "SemanticStats",
    "SplatCleanError",
    "SyntheticOracleScorer",
    "TrainConfig",
    "TrainReport",
    "TrainingError",
    "ValidationError",
    "ViewScore",
    "accumulate",
    "backward",
    "calibrate_threshold",
    "clip_regularizer",
    "cosine_similarity",
    "distractor_score",
    "generate_synthetic",
    "load_config",
    "load_dataset",
    "load_score_file",
    "photometric_loss",
    "prune_mask",
    "psnr",
    "removal_metrics",
    "render",
    "save_config",
    "schedule_gate",
    "ssim",
    "total_loss",
    "train",
    "write_score_file",
]
