"""Multi-geometry spatial filtering front-ends for microphone arrays.

Superdirective beamformer banks, trainable spatial filtering networks
(elastic and weight-tied variants) with hand-written gradients, a stage-wise
trainer and a free-field array simulator.
"""

from .beamform import BeamformerBank, SuperdirectiveBeamformer, design_bank, load_bank, save_bank
from .dsp import DftFeatureExtractor, GlobalNormalizer, LfbeExtractor, StftConfig, istft, stft
from .geometry import ArrayGeometry, Direction, PhysicalConstants, circular_array, linear_pair
from .mcmodel import AcousticModel, ModelConfig, build_model, load_checkpoint, save_checkpoint
from .trainer import SpatialAcousticClassifier, TrainConfig, evaluate

__version__ = "0.1.0"

__all__ = [
    "AcousticModel",
    "ArrayGeometry",
    "BeamformerBank",
    "DftFeatureExtractor",
    "Direction",
    "GlobalNormalizer",
    "LfbeExtractor",
    "ModelConfig",
    "PhysicalConstants",
    "SpatialAcousticClassifier",
    "StftConfig",
    "SuperdirectiveBeamformer",
    "TrainConfig",
    "build_model",
    "circular_array",
    "design_bank",
    "evaluate",
    "istft",
    "linear_pair",
    "load_bank",
    "load_checkpoint",
    "save_bank",
    "save_checkpoint",
    "stft",
]
