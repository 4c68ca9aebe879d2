"""Sequential models: a LayerSpec chain plus its materialised parameters."""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .. import tensor
from ..errors import ShapeError
from . import functional as F
from .layers import LayerSpec, count_parameters, fans, param_shapes, shape_trace


@dataclass
class ParamBlock:
    layer: int
    weight: np.ndarray
    bias: np.ndarray

    @property
    def size(self) -> int:
        return self.weight.size + self.bias.size


class Model:
    """Feed-forward chain of layers over batched, channels-last input.

    ``forward(x, train=True)`` caches what ``backward`` needs; gradients come
    back as one ``(dweight, dbias)`` pair per parameter block, in layer order.
    """

    def __init__(self, layers, input_shape, seed=0, bits=32, name="model"):
        self.layers = [l if isinstance(l, LayerSpec) else LayerSpec.from_dict(l) for l in layers]
        self.input_shape = tuple(int(d) for d in input_shape)
        self.shapes = shape_trace(self.layers, self.input_shape)
        self.dtype = tensor.dtype_for(bits)
        self.seed = seed
        self.name = name
        self.params: list[ParamBlock] = []
        self._cache = None
        self.init_params(seed)

    @property
    def bits(self) -> int:
        return tensor.width_of(self.dtype)

    @property
    def output_shape(self) -> tuple:
        return self.shapes[-1]

    def init_params(self, seed):
        """Glorot-uniform weights (limit sqrt(6 / (fan_in + fan_out))), zero biases."""
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.params = []
        for i, (spec, in_shape) in enumerate(zip(self.layers, self.shapes)):
            shapes = param_shapes(spec, in_shape)
            if shapes is None:
                continue
            fan_in, fan_out = fans(spec, in_shape)
            limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
            w = tensor.random_uniform(shapes[0], rng, limit, bits=self.bits)
            b = tensor.zeros(shapes[1], bits=self.bits)
            self.params.append(ParamBlock(i, w, b))
        self._cache = None

    def count_parameters(self) -> int:
        return sum(p.size for p in self.params)

    def expected_parameters(self) -> int:
        return count_parameters(self.layers, self.input_shape)

    def astype(self, bits) -> "Model":
        m = copy.deepcopy(self)
        m.dtype = tensor.dtype_for(bits)
        for p in m.params:
            p.weight = p.weight.astype(m.dtype)
            p.bias = p.bias.astype(m.dtype)
        m._cache = None
        return m

    def copy(self) -> "Model":
        m = copy.copy(self)
        m.params = [ParamBlock(p.layer, p.weight.copy(), p.bias.copy()) for p in self.params]
        m._cache = None
        return m

    def _blocks_by_layer(self):
        return {p.layer: p for p in self.params}

    def forward(self, x, train=False):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"{self.name} expects per-sample shape {self.input_shape}, got {x.shape[1:]}")
        blocks = self._blocks_by_layer()
        caches = []
        for i, spec in enumerate(self.layers):
            kind = spec.kind
            if kind in ("conv2d", "conv3d"):
                p = blocks[i]
                z, c = F.conv_forward(x, p.weight, p.bias, spec.padding)
            elif kind == "transpose_conv2d":
                p = blocks[i]
                z, c = F.transpose_conv_forward(x, p.weight, p.bias, spec.stride)
            elif kind == "dense":
                p = blocks[i]
                z, c = F.dense_forward(x, p.weight, p.bias)
            elif kind in ("maxpool2d", "maxpool3d"):
                z, c = F.maxpool_forward(x, spec.kernel, spec.pool_mode)
            elif kind == "flatten":
                z, c = x.reshape(x.shape[0], -1), x.shape
            else:
                z, c = x, None
            x = F.activation_forward(z, spec.activation)
            if train:
                caches.append((c, x))
        self._cache = caches if train else None
        return x

    def backward(self, dout):
        """Reverse-mode pass over the cached forward; returns (grads, dinput)."""
        if self._cache is None:
            raise RuntimeError("backward() needs a preceding forward(..., train=True)")
        grads = {}
        d = np.asarray(dout, dtype=self.dtype)
        for i in range(len(self.layers) - 1, -1, -1):
            spec = self.layers[i]
            c, out = self._cache[i]
            d = F.activation_backward(d, out, spec.activation)
            kind = spec.kind
            if kind in ("conv2d", "conv3d"):
                d, dw, db = F.conv_backward(d, c)
                grads[i] = (dw, db)
            elif kind == "transpose_conv2d":
                d, dw, db = F.transpose_conv_backward(d, c)
                grads[i] = (dw, db)
            elif kind == "dense":
                d, dw, db = F.dense_backward(d, c)
                grads[i] = (dw, db)
            elif kind in ("maxpool2d", "maxpool3d"):
                d = F.maxpool_backward(d, c)
            elif kind == "flatten":
                d = d.reshape(c)
        self._cache = None
        return [grads[p.layer] for p in self.params], d

    def predict(self, x, batch_size=32):
        """Inference in chunks; per-sample results are independent of batching."""
        x = np.asarray(x)
        outs = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(outs, axis=0) if outs else np.zeros((0, *self.output_shape), self.dtype)

    def summary(self) -> str:
        lines = [f"{self.name}: input {self.input_shape}"]
        by_layer = self._blocks_by_layer()
        for i, (spec, shape) in enumerate(zip(self.layers, self.shapes[1:])):
            n = by_layer[i].size if i in by_layer else 0
            detail = f" k={spec.kernel}" if spec.kernel else ""
            lines.append(f"  {i:2d} {spec.kind:<17}{detail:<16} -> {str(shape):<20} params={n}")
        lines.append(f"  trainable parameters: {self.count_parameters()}")
        return "\n".join(lines)
