"""
Checking backpropagation with central differences
=================================================
"""
import numpy as np

from echopipe import models
from echopipe.nn import gradcheck, jitter_biases
from echopipe.nn import layers as L
from echopipe.nn.model import Model

rng = np.random.default_rng(0)

# A tiny conv net in 64-bit. Small random biases keep units off the exact
# ReLU kink that zero biases would otherwise create.
net = jitter_biases(Model([L.conv2d(2, (3, 3), activation="relu"), L.flatten(),
                           L.dense(1, "sigmoid")], (8, 8, 1), seed=1, bits=64))
x = rng.uniform(size=(2, 8, 8, 1))
report = gradcheck(net, x, np.array([[1.0], [0.0]]), loss="bce")
print(report)

# Scale every analytic gradient by 1.1 and the check notices.
print(gradcheck(net, x, np.array([[1.0], [0.0]]), loss="bce", corrupt=0.1))

# The full w=5 detector topology at its smallest valid input.
side = models.min_detector_input(5)[0]
det = jitter_biases(models.build_detector(5, bits=64, input_hw=(side, side)))
clip = rng.uniform(size=(1, side, side, 5, 1))
print(f"detector at {side}x{side}:", gradcheck(det, clip, np.array([[1.0]]), "bce").max_error)
