"""Multi-scale convolutional network engine for pixel-wise scene labeling.

A self-contained numpy implementation of multi-scale CNNs with hand-written
backward passes, a two-stage scene/bridge-component classification pipeline,
deterministic training, binary checkpoints, and a CLI front end.
"""

from .checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from .errors import (CheckpointError, ConfigError, DataError, MscnError,
                     ShapeError, SpecError)
from .nn import ArchitectureSpec, LayerSpec, count_parameters
from .pipeline import (TrainConfig, infer_component, infer_scene,
                       stack_scene_channels, train_component, train_scene)
from .zoo import build

__version__ = "0.1.0"

__all__ = [
    "ArchitectureSpec", "LayerSpec", "ModelCheckpoint", "TrainConfig",
    "build", "count_parameters", "infer_component", "infer_scene",
    "load_checkpoint", "save_checkpoint", "stack_scene_channels",
    "train_component", "train_scene",
    "MscnError", "ShapeError", "SpecError", "ConfigError", "DataError",
    "CheckpointError",
]
