"""
One video through the whole pipeline
====================================

Untrained weights give meaningless classes; the point is the data flow and
the verdict format.
"""
import numpy as np

from echopipe import models
from echopipe.datagen import PhantomConfig, generate_phantom
from echopipe.pipeline import PipelineConfig, run_pipeline

video, _ = generate_phantom(PhantomConfig(frame_h=240, frame_w=220, center=(120.0, 110.0), seed=4))

seg = models.build_segmenter(seed=0)
det = models.build_detector(5, seed=0, input_hw=(64, 48))
verdict = run_pipeline(video, seg, det, PipelineConfig(resize=(64, 48)))

print(verdict.to_json())
print(f"{len(verdict.probabilities)} clip probabilities for {len(video)} frames")

# Any callable can stand in for a network, e.g. a threshold "segmenter".
v2 = run_pipeline(video, lambda w: (w > 0.5).astype(np.float64), lambda c: np.full(len(c), 0.7),
                  PipelineConfig(resize=(32, 32)))
print("threshold segmenter box:", v2.bbox, "->", v2.final)
