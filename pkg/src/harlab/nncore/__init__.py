"""Minimal dense/convolutional network engine with explicit backprop,
Adadelta optimization, dropout, and deterministic seeded training."""

from harlab.nncore.adadelta import AdadeltaState, TrainConfig, adadelta_step
from harlab.nncore.layers import (
    LayerSpec,
    TensorShape,
    canonical_layers,
    output_shape,
    shape_chain,
)
from harlab.nncore.model import (
    CnnModel,
    ForwardPass,
    build_canonical_model,
    build_model,
    cross_entropy,
    forward,
    loss_and_grad,
    zero_grads_like,
)
from harlab.nncore.training import EvalResult, TrainingCurve, evaluate, predict_probs, train

__all__ = [
    "AdadeltaState",
    "TrainConfig",
    "adadelta_step",
    "LayerSpec",
    "TensorShape",
    "canonical_layers",
    "output_shape",
    "shape_chain",
    "CnnModel",
    "ForwardPass",
    "build_canonical_model",
    "build_model",
    "cross_entropy",
    "forward",
    "loss_and_grad",
    "zero_grads_like",
    "EvalResult",
    "TrainingCurve",
    "evaluate",
    "predict_probs",
    "train",
]
