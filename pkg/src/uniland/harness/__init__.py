from .augment import AugmentConfig, augment, rotate_image_and_coords
from .config import TrainConfig
from .data import LandmarkDataset, Sample, images_to_tensor, load_image
from .diagnose import ExpertUsageReport, diagnose_experts
from .evaluate import EvalReport, evaluate_dataset, select_for_scheme
from .synth import (
    FaceParams,
    SynthConfig,
    TEMPLATE_OFFSETS,
    UNIFIED_MIRROR,
    render_face,
    sample_face_params,
    synth_dataset,
    template_positions,
    toy_registry,
)
from .train import TrainResult, run_training

__all__ = [
    "AugmentConfig",
    "EvalReport",
    "ExpertUsageReport",
    "FaceParams",
    "LandmarkDataset",
    "Sample",
    "SynthConfig",
    "TEMPLATE_OFFSETS",
    "TrainConfig",
    "TrainResult",
    "UNIFIED_MIRROR",
    "augment",
    "diagnose_experts",
    "evaluate_dataset",
    "images_to_tensor",
    "load_image",
    "render_face",
    "rotate_image_and_coords",
    "run_training",
    "sample_face_params",
    "select_for_scheme",
    "synth_dataset",
    "template_positions",
    "toy_registry",
]
