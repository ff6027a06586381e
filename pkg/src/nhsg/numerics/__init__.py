"""Differentiable-computation core: tensors, ops, optimizers, checkpoints."""

from .optim import OptimizerState, adamw_step, global_grad_norm
from .store import (CHECKPOINT_MAGIC, ParameterStore, load_params, save_params,
                    validate_structure)
from .tensor import (OPS, OpInfo, Tensor, add, backward, clamp_min, concat,
                     conv1d, cosine_similarity, cross_entropy, embedding_lookup,
                     gradient_check, layer_norm, leaky_relu, linear, log,
                     l1_loss, mean, mse_loss, mul, pad_end, reflect_pad_1d,
                     reshape, scaled_dot_attention, slice_axis, snake_beta,
                     softmax, sqrt, sum_, tanh, transpose, transposed_conv1d,
                     weight_norm)

__all__ = [
    "OPS", "OpInfo", "Tensor", "backward", "gradient_check",
    "add", "mul", "concat", "reshape", "transpose", "pad_end", "slice_axis",
    "reflect_pad_1d", "weight_norm",
    "leaky_relu", "tanh", "sqrt", "log", "clamp_min", "softmax", "snake_beta",
    "linear", "embedding_lookup", "layer_norm", "scaled_dot_attention",
    "conv1d", "transposed_conv1d", "mean", "sum_", "l1_loss", "mse_loss",
    "cross_entropy", "cosine_similarity",
    "ParameterStore", "validate_structure", "save_params", "load_params",
    "CHECKPOINT_MAGIC", "OptimizerState", "adamw_step", "global_grad_norm",
]
