"""Two-stage echocardiography pipeline: LV segmentation then MI detection, in numpy."""
from .errors import (DataError, EchoPipeError, EmptyMaskError, FormatError, NumericError,
                     ShapeError, UsageError)
from .models import build_detector, build_segmenter
from .pipeline import PipelineConfig, VideoVerdict, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "DataError", "EchoPipeError", "EmptyMaskError", "FormatError", "NumericError",
    "PipelineConfig", "ShapeError", "UsageError", "VideoVerdict", "build_detector",
    "build_segmenter", "run_pipeline",
]
