"""Desk-scale one-stage detector with task-aligned predictions.

Everything runs on numpy through a small reverse-mode tensor core; no
framework dependency. Submodules:

- ``tensor``: differentiable array ops and gradient checking
- ``geometry``: boxes, IoU/GIoU, anchor-point distances, NMS
- ``head``: the shared-stack detection head and its alignment maps
- ``assignment``: metric-driven label assignment
- ``losses``: classification and localization training objectives
- ``scenes``: deterministic synthetic scene generation and dataset files
- ``model``: backbone plus head wiring and parameter init
- ``train``: SGD loop, checkpoints, loss curves
- ``metrics``: alignment diagnostics, box census, average precision
- ``cli``: command-line entry point
"""

from .tensor import Tensor, grad_check
from .geometry import Box, Detection, iou, giou, nms
from .model import ModelConfig, build_model
from .scenes import DatasetConfig, generate_scene
from .metrics import AlignmentReport, evaluate_dataset

__all__ = [
    "Tensor",
    "grad_check",
    "Box",
    "Detection",
    "iou",
    "giou",
    "nms",
    "ModelConfig",
    "build_model",
    "DatasetConfig",
    "generate_scene",
    "AlignmentReport",
    "evaluate_dataset",
]
