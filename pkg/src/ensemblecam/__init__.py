"""Ensemble-CAM explanations for a small face-PAD CNN, with a retention benchmark."""

from .cam import (
    Cam,
    RetentionMask,
    apply_threshold,
    average_cams,
    ensemble_cam,
    grad_cam,
    grad_cam_pp,
    hires_cam,
    normalize_unit,
    top_fraction_mask,
    upsample_bilinear,
)
from .faithfulness import EvalReport, confidence_drop, evaluate_dataset, prediction_change
from .model import (
    ForwardTrace,
    SmallCnn,
    TrainConfig,
    class_gradients,
    forward,
    init_small_cnn,
    load_weights,
    pad_metrics,
    save_weights,
    train,
)
from .synthdata import Manifest, SynthSpec, generate, load_image, write_image

__all__ = [name for name in dir() if not name.startswith("_")]
