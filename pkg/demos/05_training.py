"""
Training both networks at toy scale
===================================

About two minutes on one CPU core. With this little data the segmenter
barely moves; raise the epochs and frames for real use. The CLI commands
``train-seg`` and ``train-det`` wrap the same functions.
"""
import tempfile
from pathlib import Path

from echopipe.datagen import build_dataset
from echopipe.eval import evaluate_segmenter, summarize, train_detector_cv, train_segmenter
from echopipe.pipeline import PipelineConfig

root = Path(tempfile.mkdtemp())
data = build_dataset(root, n_videos=12, seed=2, frame_range=(160, 200), frames=12)

# RMSProp on per-pixel MSE over 150x150 windows; the best validation epoch is kept.
res = train_segmenter(data, epochs=4, batch=16, micro_batch=8, frames_per_video=2)
print("segmenter loss per epoch", [round(v, 4) for v in res.train_loss])
print("held-out accuracy (1 - MSE)", round(evaluate_segmenter(res.model, data, "test", 1), 4))

# Five folds over the non-test videos, crops from the ground-truth boxes,
# frames resized to 48x48 to keep it quick.
folds = train_detector_cv(data, w=5, epochs_per_fold=10, config=PipelineConfig(resize=(48, 48)))
for name, agg in summarize(folds).items():
    print(f"{name:>9}: max {agg['max']:.2f} mean {agg['mean']:.2f} min {agg['min']:.2f}")
