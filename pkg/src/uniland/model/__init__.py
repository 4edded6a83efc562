from .apae import (
    AdaptivePrototypeExtractor,
    ExpertRouter,
    GatingDecision,
    PrototypeEncoder,
    PrototypeExpert,
    extract_prototype,
    topk_stable,
)
from .backbone import ConvBackbone
from .checkpoint import build_from_checkpoint, load_checkpoint, save_checkpoint
from .config import BACKBONE_PROFILES, BackboneSpec, ModelConfig
from .network import ModelOutput, UnifiedLandmarkModel
from .ppad import (
    DecoderLayer,
    FusionBlock,
    PredictionHeads,
    ProgressiveDecoder,
    Prompt,
    PromptGenerator,
)

__all__ = [
    "AdaptivePrototypeExtractor",
    "BACKBONE_PROFILES",
    "BackboneSpec",
    "ConvBackbone",
    "DecoderLayer",
    "ExpertRouter",
    "FusionBlock",
    "GatingDecision",
    "ModelConfig",
    "ModelOutput",
    "PredictionHeads",
    "ProgressiveDecoder",
    "Prompt",
    "PromptGenerator",
    "PrototypeEncoder",
    "PrototypeExpert",
    "UnifiedLandmarkModel",
    "build_from_checkpoint",
    "extract_prototype",
    "load_checkpoint",
    "save_checkpoint",
    "topk_stable",
]
