"""
Layers, shapes and parameter counts
===================================

Build the three 3D detectors, trace their shapes and count their weights.
"""
import numpy as np

from echopipe import models
from echopipe.nn import functional as F

# A detector is a plain list of layer specs plus an input shape. Shapes use
# channels-last order: (rows, cols, frames, channels).
det = models.build_detector(5)
print(det.summary())

# Valid convolutions and floor pooling shrink 236x183 down to a 12x9x1x8 block,
# which flattens to 864 features for every temporal window.
for w in (5, 7, 9):
    m = models.build_detector(w)
    print(f"w={w}: {m.count_parameters():,} trainable parameters, flatten {m.shapes[9]}")

# The 2D segmenter: three conv/pool stages down, three stride-2 transposes up.
seg = models.build_segmenter()
print("segmenter", seg.count_parameters(), "parameters,", [s[:2] for s in seg.shapes])

# The primitives are plain functions on numpy arrays.
x = np.arange(16, dtype=np.float64).reshape(1, 4, 4, 1)
pooled, _ = F.maxpool_forward(x, (2, 2))
print("2x2 max pool of 0..15:\n", pooled[0, :, :, 0])
