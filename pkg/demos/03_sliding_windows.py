"""
Sliding windows, reconstruction and the crop box
================================================
"""
import numpy as np

from echopipe.windowing import (SpatialGrid, min_bbox, mode_mask, reconstruct, resize_bilinear,
                                spatial_windows, temporal_windows)

# A 422x636 frame needs 5 window rows and 8 window columns. The last anchor on
# each axis sits flush against the edge.
grid = SpatialGrid(422, 636)
print("row anchors", grid.rows, "col anchors", grid.cols, "->", len(grid.anchors), "windows")

# Cutting a binary mask and stitching it back is lossless.
rng = np.random.default_rng(3)
mask = (rng.uniform(size=(300, 410)) > 0.6).astype(np.uint8)
wins, anchors = spatial_windows(mask)
print("round trip exact:", np.array_equal(reconstruct(wins, anchors, 300, 410), mask))

# Per-pixel majority over frames, then the tightest box around it.
frames = np.zeros((4, 40, 60), np.uint8)
frames[:, 10:20, 15:40] = 1
frames[0, 30:35, 5:8] = 1          # a one-frame blip is voted out
box = min_bbox(mode_mask(frames))
print("box", box)

# Crops are resized to the detector's input and cut into overlapping clips.
video = rng.uniform(size=(25, box.height, box.width)).astype(np.float32)
clips = temporal_windows(resize_bilinear(video, 64, 48), 5)
print("25 frames, w=5 ->", clips.shape)
