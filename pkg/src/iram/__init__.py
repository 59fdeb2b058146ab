"""Iterative recursive attention for sequence classification.

The package is self-contained: a float64 autodiff core (``tensor``),
layers (``layers``), the iterative attention mechanism and its overlap
penalty (``attention``), sequence encoders (``encoders``), the assembled
classifier (``model``), the training recipe (``optim``, ``training``),
data loading (``data``), and trace export (``export``, ``cli``).
"""

from .attention import (
    AttentionParams,
    AttentionTrace,
    IramConfig,
    attention_penalty,
    bilinear_scores,
    iterate,
    mean_offdiagonal_overlap,
    summarize,
)
from .model import ForwardResult, IramModel, ModelConfig, load_checkpoint, save_checkpoint
from .optim import AmsGrad, clip_global_norm
from .tensor import Tensor, backward, no_grad

__all__ = [
    "AttentionParams",
    "AttentionTrace",
    "IramConfig",
    "attention_penalty",
    "bilinear_scores",
    "iterate",
    "mean_offdiagonal_overlap",
    "summarize",
    "ForwardResult",
    "IramModel",
    "ModelConfig",
    "load_checkpoint",
    "save_checkpoint",
    "AmsGrad",
    "clip_global_norm",
    "Tensor",
    "backward",
    "no_grad",
]

__version__ = "0.1.0"
