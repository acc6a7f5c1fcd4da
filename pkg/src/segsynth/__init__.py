"""Segmentation-conditioned adversarial image synthesis with attribute control."""

from .core import (
    AttributeLabel,
    ImageTensor,
    JointSample,
    LandmarkSet,
    LatentVector,
    SegmentationMap,
    ValidationError,
    denormalize_image,
    normalize_image,
    one_hot_encode,
)
from .losses import LossReport, LossWeights
from .networks import ArchConfig, GeneratorOrder
from .training import SegmentorMode, TrainConfig, Trainer, train

__version__ = "0.1.0"

__all__ = [
    "ArchConfig",
    "AttributeLabel",
    "GeneratorOrder",
    "ImageTensor",
    "JointSample",
    "LandmarkSet",
    "LatentVector",
    "LossReport",
    "LossWeights",
    "SegmentationMap",
    "SegmentorMode",
    "TrainConfig",
    "Trainer",
    "ValidationError",
    "denormalize_image",
    "normalize_image",
    "one_hot_encode",
    "train",
    "__version__",
]
