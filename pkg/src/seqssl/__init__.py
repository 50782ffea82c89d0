"""Semi-supervised temporal representation learning on synthetic sequences.

Training combines EMA teacher-student pseudo-labeling, reliability-scored
adaptive contrastive learning, and multi-scale temporal alignment, on top of
a small built-in reverse-mode autodiff engine.
"""

from . import acl, autodiff, backbone, gmm, mtl, protobank, synthgen, trainer
from .synthgen import DatasetConfig
from .trainer import TrainConfig

__all__ = ["acl", "autodiff", "backbone", "gmm", "mtl", "protobank",
           "synthgen", "trainer", "DatasetConfig", "TrainConfig"]
