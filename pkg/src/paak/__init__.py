"""Keyframe-weighted placement of human animations into 3D scenes."""

from .animation import Animation, FeatureMap, PlacementPose, estimate_features, transform
from .keyframes import KeyframeWeights, WeightingConfig, compute_keyframes
from .metrics import PlausibilityReport, plausibility
from .placement import LossConfig, PlaceConfig, PlacementResult, energy, place
from .scene import SceneModel, SemanticVocabulary, build_scene, load_scene, synth_scene

__version__ = "0.1.0"

__all__ = [
    "Animation",
    "FeatureMap",
    "KeyframeWeights",
    "LossConfig",
    "PlaceConfig",
    "PlacementPose",
    "PlacementResult",
    "PlausibilityReport",
    "SceneModel",
    "SemanticVocabulary",
    "WeightingConfig",
    "build_scene",
    "compute_keyframes",
    "energy",
    "estimate_features",
    "load_scene",
    "place",
    "plausibility",
    "synth_scene",
    "transform",
]
