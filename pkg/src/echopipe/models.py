"""Concrete architectures: the 2D window segmenter and the 3D clip detectors."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .nn import layers as L
from .nn.model import Model

SEGMENTER_INPUT = (150, 150, 1)
SEGMENTER_ENCODER = (32, 64, 128)
SEGMENTER_DECODER = (64, 32, 16)

DETECTOR_INPUT_HW = (236, 183)
DETECTOR_FILTERS = (32, 32, 16, 8)
DETECTOR_DENSE = (32, 16)
# conv3d kernels per temporal window size; spatial 3x3, depth chosen so
# the depth axis never underflows through four valid convolutions
DETECTOR_KERNELS = {
    5: ((3, 3, 3), (3, 3, 2), (3, 3, 2), (3, 3, 1)),
    7: ((3, 3, 3), (3, 3, 3), (3, 3, 2), (3, 3, 2)),
    9: ((3, 3, 3), (3, 3, 3), (3, 3, 3), (3, 3, 3)),
}


def segmenter_layers(encoder=SEGMENTER_ENCODER, decoder=SEGMENTER_DECODER,
                     enc_kernel=3, dec_kernel=3):
    """Encoder: 3 x (same-size conv + ReLU, 2x2 ceil pool). Decoder: 3 x stride-2
    transpose conv + ReLU. Head: unpadded 3x3 conv to one sigmoid channel.

    Spatial trace for 150 input: 150 -> 75 -> 38 -> 19 -> 38 -> 76 -> 152 -> 150.
    """
    chain = []
    for f in encoder:
        chain.append(L.conv2d(f, (enc_kernel, enc_kernel), padding="preserve", activation="relu"))
        chain.append(L.maxpool2d((2, 2), mode="ceil"))
    for f in decoder:
        chain.append(L.transpose_conv2d(f, (dec_kernel, dec_kernel), (2, 2), activation="relu"))
    chain.append(L.conv2d(1, (3, 3), padding="none", activation="sigmoid"))
    return chain


def build_segmenter(seed=0, bits=32, **kw) -> Model:
    return Model(segmenter_layers(**kw), SEGMENTER_INPUT, seed=seed, bits=bits, name="segmenter")


def detector_layers(w: int, dense_units=DETECTOR_DENSE, filters=DETECTOR_FILTERS, kernels=None):
    if kernels is None:
        if w not in DETECTOR_KERNELS:
            raise UsageError(f"unsupported temporal window {w}; expected one of 5, 7, 9")
        kernels = DETECTOR_KERNELS[w]
    chain = []
    for f, k in zip(filters, kernels):
        chain.append(L.conv3d(f, k, padding="none", activation="relu"))
        chain.append(L.maxpool3d((2, 2, 1), mode="floor"))
    chain.append(L.flatten())
    for u in dense_units:
        chain.append(L.dense(u, activation="relu"))
    chain.append(L.dense(1, activation="sigmoid"))
    return chain


def build_detector(w: int, seed=0, bits=32, input_hw=DETECTOR_INPUT_HW) -> Model:
    """3D detector for ``w``-frame clips of ``input_hw`` grayscale frames.

    With the default 236x183 input the flatten length is 864 for every ``w``
    and the trainable counts are 57,977 / 68,345 / 74,105.
    """
    h, wd = input_hw
    return Model(detector_layers(w), (h, wd, w, 1), seed=seed, bits=bits, name=f"detector{w}")


def toy_detector_layers(w: int, filters=(4, 3), dense_units=4):
    """Two conv/pool blocks of the w-frame detector; small enough for a 20x20 input."""
    k = DETECTOR_KERNELS[w]
    chain = []
    for f, kk in zip(filters, k):
        chain += [L.conv3d(f, kk, activation="relu"), L.maxpool3d((2, 2, 1))]
    return chain + [L.flatten(), L.dense(dense_units, activation="relu"), L.dense(1, activation="sigmoid")]


def min_detector_input(w: int) -> tuple[int, int]:
    """Smallest square frame that survives the w-frame detector's four conv/pool stages."""
    for s in range(8, 512):
        try:
            L.shape_trace(detector_layers(w), (s, s, w, 1))
        except ValueError:
            continue
        return s, s
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class SegmenterConfig:
    encoder: tuple
    decoder: tuple
    enc_kernel: int
    dec_kernel: int

    def count(self) -> int:
        return L.count_parameters(segmenter_layers(self.encoder, self.decoder,
                                                   self.enc_kernel, self.dec_kernel),
                                  SEGMENTER_INPUT)


FILTER_CHOICES = tuple(range(8, 257, 8))
KERNEL_CHOICES = (3, 5)


def arch_search(target: int, filters=FILTER_CHOICES, kernels=KERNEL_CHOICES) -> list[SegmenterConfig]:
    """All segmenter-family configurations whose trainable count equals ``target``.

    Searches six filter counts (three encoder, three decoder) and one kernel size
    each for the encoder convs and the decoder transposes; the head stays 3x3
    so the output is still 150x150. The last decoder width is solved for
    exactly, since the count is linear in it.
    """
    f = np.asarray(filters, dtype=np.int64)
    fset = set(int(v) for v in filters)
    found = []
    for ke, kd in itertools.product(kernels, kernels):
        e2, e3, d1, d2 = np.meshgrid(f, f, f, f, indexing="ij", sparse=False)
        for e1 in filters:
            rest = ((ke * ke * 1 * e1 + e1) + (ke * ke * e1 * e2 + e2) + (ke * ke * e2 * e3 + e3)
                    + (kd * kd * e3 * d1 + d1) + (kd * kd * d1 * d2 + d2) + 1)
            # d3 appears in the last transpose (kd^2 * d2 * d3 + d3) and the head (9 * d3)
            per_d3 = kd * kd * d2 + 1 + 9
            num = target - rest
            ok = (num > 0) & (num % per_d3 == 0)
            for i in np.flatnonzero(ok):
                d3 = int(num.flat[i] // per_d3.flat[i])
                if d3 in fset:
                    found.append(SegmenterConfig(
                        (int(e1), int(e2.flat[i]), int(e3.flat[i])),
                        (int(d1.flat[i]), int(d2.flat[i]), d3), ke, kd))
    found.sort(key=lambda c: (c.enc_kernel, c.dec_kernel, c.encoder, c.decoder))
    return found
