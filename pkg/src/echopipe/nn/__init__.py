from .functional import bce, mse
from .gradcheck import GradCheckReport, gradcheck, jitter_biases
from .layers import (LayerSpec, activation, conv2d, conv3d, count_parameters, dense, flatten,
                     layer_param_count, maxpool2d, maxpool3d, output_shape, shape_trace,
                     transpose_conv2d)
from .model import Model, ParamBlock
from .optim import RMSProp, rmsprop_step
from .serialize import load_weights, save_weights

__all__ = [
    "LayerSpec", "Model", "ParamBlock", "RMSProp", "GradCheckReport",
    "activation", "bce", "conv2d", "conv3d", "count_parameters", "dense", "flatten",
    "gradcheck", "jitter_biases", "layer_param_count", "load_weights", "maxpool2d", "maxpool3d", "mse",
    "output_shape", "rmsprop_step", "save_weights", "shape_trace", "transpose_conv2d",
]
