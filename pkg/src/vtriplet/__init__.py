"""Triplet-trained convolutional embeddings for visual place recognition.

The package trains a small convolutional network so that Euclidean distance
between image descriptors encodes place dissimilarity, mines training
triplets from pose-labeled image sequences, and evaluates descriptor
pipelines with normalized confusion matrices and diagonal-inlier curves.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    FormatError,
    ManifestError,
    MiningError,
    MissingArtifactError,
    MixedHashError,
    ShapeError,
    UsageError,
    VTripletError,
)
from .loss import batch_objective, triplet_cost, triplet_cost_grad
from .network import (
    ConvSpec,
    FullyConnectedSpec,
    LayerParams,
    LrnSpec,
    MaxPoolSpec,
    NetworkSpec,
    ParameterSet,
    ReluSpec,
    init_params,
    network_backward,
    network_forward,
    paper_spec,
    tiny_spec,
)
from .params_io import import_text_params, load_params, save_params
from .trainer import TrainConfig, TrainLogRecord, TripletCostConfig, sgd_step, train

__all__ = [
    "ConfigError",
    "FormatError",
    "ManifestError",
    "MiningError",
    "MissingArtifactError",
    "MixedHashError",
    "ShapeError",
    "UsageError",
    "VTripletError",
    "batch_objective",
    "triplet_cost",
    "triplet_cost_grad",
    "ConvSpec",
    "FullyConnectedSpec",
    "LayerParams",
    "LrnSpec",
    "MaxPoolSpec",
    "NetworkSpec",
    "ParameterSet",
    "ReluSpec",
    "init_params",
    "network_backward",
    "network_forward",
    "paper_spec",
    "tiny_spec",
    "import_text_params",
    "load_params",
    "save_params",
    "TrainConfig",
    "TrainLogRecord",
    "TripletCostConfig",
    "sgd_step",
    "train",
]
