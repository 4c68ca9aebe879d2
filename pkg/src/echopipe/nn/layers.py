"""Declarative layer specs, shape inference and parameter-count arithmetic."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from ..errors import ShapeError

KINDS = ("conv2d", "conv3d", "transpose_conv2d", "maxpool2d", "maxpool3d",
         "dense", "flatten", "activation")
PARAM_KINDS = ("conv2d", "conv3d", "transpose_conv2d", "dense")
_SPATIAL_RANK = {"conv2d": 2, "conv3d": 3, "transpose_conv2d": 2, "maxpool2d": 2, "maxpool3d": 3}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int | None = None     # output channels, or units for dense
    kernel: tuple = ()             # per spatial axis; pool extents for maxpool
    stride: tuple = ()
    padding: str = "none"          # "none" (valid) or "preserve" (same extent)
    activation: str = "none"
    pool_mode: str = "floor"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        object.__setattr__(self, "stride", tuple(int(s) for s in self.stride))
        if any(k < 1 for k in self.kernel) or any(s < 1 for s in self.stride):
            raise ShapeError(f"kernel/stride extents must be >= 1 in {self}")
        rank = _SPATIAL_RANK.get(self.kind)
        if rank is not None and len(self.kernel) != rank:
            raise ShapeError(f"{self.kind} needs a {rank}-axis kernel, got {self.kernel}")
        if self.kind in PARAM_KINDS and not (self.filters and self.filters > 0):
            raise ShapeError(f"{self.kind} needs a positive filter/unit count")
        if self.padding not in ("none", "preserve"):
            raise ValueError(f"unknown padding {self.padding!r}")
        if self.activation not in ("relu", "sigmoid", "none"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.pool_mode not in ("floor", "ceil"):
            raise ValueError(f"unknown pooling mode {self.pool_mode!r}")

    @property
    def has_params(self) -> bool:
        return self.kind in PARAM_KINDS

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel"] = list(self.kernel)
        d["stride"] = list(self.stride)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**{**d, "kernel": tuple(d.get("kernel", ())), "stride": tuple(d.get("stride", ()))})


def conv2d(filters, kernel=(3, 3), padding="none", activation="relu"):
    return LayerSpec("conv2d", filters, kernel, (1, 1), padding, activation)


def conv3d(filters, kernel=(3, 3, 3), padding="none", activation="relu"):
    return LayerSpec("conv3d", filters, kernel, (1, 1, 1), padding, activation)


def transpose_conv2d(filters, kernel=(3, 3), stride=(2, 2), activation="relu"):
    return LayerSpec("transpose_conv2d", filters, kernel, stride, "none", activation)


def maxpool2d(pool=(2, 2), mode="floor"):
    return LayerSpec("maxpool2d", kernel=pool, stride=pool, pool_mode=mode)


def maxpool3d(pool=(2, 2, 1), mode="floor"):
    return LayerSpec("maxpool3d", kernel=pool, stride=pool, pool_mode=mode)


def dense(units, activation="relu"):
    return LayerSpec("dense", units, activation=activation)


def flatten():
    return LayerSpec("flatten")


def activation(kind):
    return LayerSpec("activation", activation=kind)


def output_shape(spec: LayerSpec, in_shape: tuple) -> tuple:
    """Per-sample output shape (no batch axis) of ``spec`` applied to ``in_shape``."""
    in_shape = tuple(in_shape)
    kind = spec.kind
    rank = _SPATIAL_RANK.get(kind)
    if rank is not None and len(in_shape) != rank + 1:
        raise ShapeError(f"{kind} expects rank-{rank + 1} input (spatial + channel), got {in_shape}")
    if kind in ("conv2d", "conv3d"):
        sp = in_shape[:-1]
        if spec.padding == "preserve":
            return (*sp, spec.filters)
        if any(k > s for k, s in zip(spec.kernel, sp)):
            raise ShapeError(f"kernel {spec.kernel} larger than input {sp}")
        return (*(s - k + 1 for s, k in zip(sp, spec.kernel)), spec.filters)
    if kind == "transpose_conv2d":
        return (*(s * st for s, st in zip(in_shape[:-1], spec.stride)), spec.filters)
    if kind in ("maxpool2d", "maxpool3d"):
        sp = in_shape[:-1]
        if spec.pool_mode == "floor":
            if any(p > s for p, s in zip(spec.kernel, sp)):
                raise ShapeError(f"pool {spec.kernel} larger than input {sp} in floor mode")
            return (*(s // p for s, p in zip(sp, spec.kernel)), in_shape[-1])
        return (*(-(-s // p) for s, p in zip(sp, spec.kernel)), in_shape[-1])
    if kind == "flatten":
        return (math.prod(in_shape),)
    if kind == "dense":
        if len(in_shape) != 1:
            raise ShapeError(f"dense requires flat input, got {in_shape}")
        return (spec.filters,)
    return in_shape


def param_shapes(spec: LayerSpec, in_shape: tuple):
    """(weight shape, bias shape) for a parameterised layer, else None."""
    if spec.kind in ("conv2d", "conv3d", "transpose_conv2d"):
        return (*spec.kernel, in_shape[-1], spec.filters), (spec.filters,)
    if spec.kind == "dense":
        return (in_shape[0], spec.filters), (spec.filters,)
    return None


def fans(spec: LayerSpec, in_shape: tuple) -> tuple[int, int]:
    if spec.kind == "dense":
        return in_shape[0], spec.filters
    receptive = math.prod(spec.kernel)
    return receptive * in_shape[-1], receptive * spec.filters


def shape_trace(layers, input_shape) -> list[tuple]:
    """Output shape after every layer, starting with the input shape."""
    shapes = [tuple(input_shape)]
    for spec in layers:
        shapes.append(output_shape(spec, shapes[-1]))
    return shapes


def layer_param_count(spec: LayerSpec, in_shape: tuple) -> int:
    """filters * (prod(kernel) * in_channels) + filters for convs; units * in + units for dense."""
    if spec.kind in ("conv2d", "conv3d", "transpose_conv2d"):
        return spec.filters * (math.prod(spec.kernel) * in_shape[-1]) + spec.filters
    if spec.kind == "dense":
        return spec.filters * in_shape[0] + spec.filters
    return 0


def count_parameters(layers, input_shape) -> int:
    if input_shape is None or len(layers) == 0:
        raise ShapeError("count_parameters needs a layer chain and an input shape")
    shapes = shape_trace(layers, input_shape)
    return sum(layer_param_count(spec, shape) for spec, shape in zip(layers, shapes))
