"""Corner-case scoring for front-camera driving video.

The pipeline predicts each frame from its predecessors, keeps the squared
prediction error where the semantic segmentation says a relevant class
sits, weights it by image row as a distance proxy, and min-max normalizes
the resulting per-frame score; frames above a threshold form corner-case
events.
"""

from .detector import (
    DetectorConfig,
    Event,
    ScoreSeries,
    error_map,
    mask_relevant_errors,
    normalize_series,
    patch_scores,
    run_detector,
    stream_detector,
    threshold_events,
    weighted_error_score,
)
from .imaging import BlurConfig, FrameDir, gaussian_blur, load_frame, resize_bilinear, save_frame, to_grayscale
from .metrics import confusion_matrix, iou, mse, psnr, ssim
from .prediction import evaluate_predictor, predict_next
from .segmentation import ClassTable, MaskDir, load_mask, relevance_mask, save_mask
from .synth import ScenarioSpec, SpriteSpec, VelocityChange, generate_scenario, load_scenario

__version__ = "0.1.0"

__all__ = [
    "BlurConfig",
    "ClassTable",
    "DetectorConfig",
    "Event",
    "FrameDir",
    "MaskDir",
    "ScenarioSpec",
    "ScoreSeries",
    "SpriteSpec",
    "VelocityChange",
    "confusion_matrix",
    "error_map",
    "evaluate_predictor",
    "gaussian_blur",
    "generate_scenario",
    "iou",
    "load_frame",
    "load_mask",
    "load_scenario",
    "mask_relevant_errors",
    "mse",
    "normalize_series",
    "patch_scores",
    "predict_next",
    "psnr",
    "relevance_mask",
    "resize_bilinear",
    "run_detector",
    "save_frame",
    "save_mask",
    "ssim",
    "stream_detector",
    "threshold_events",
    "to_grayscale",
    "weighted_error_score",
]
