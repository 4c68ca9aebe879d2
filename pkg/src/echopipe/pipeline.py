"""End-to-end inference: raw video -> LV crop -> temporal clips -> video-level class.

    frames -> 150x150 windows -> segmenter -> round -> inverse window
           -> per-video mode mask -> minimum bounding box -> crop
           -> resize -> temporal windows -> detector -> per-window class
           -> mode vote (ties -> MI)
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMaskError, ShapeError, UsageError
from .nn.model import Model
from .windowing import (STRIDE, WINDOW, BBox, SpatialGrid, crop_video, min_bbox, mode_mask,
                        reconstruct, resize_bilinear, round_mask, spatial_windows, temporal_windows)

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    win: int = WINDOW
    stride: int = STRIDE
    w: int = 5
    resize: tuple = (236, 183)
    threshold: float = 0.5
    tie_class: str = "MI"
    batch_size: int = 32
    threads: int = 1

    def __post_init__(self):
        self.resize = tuple(int(v) for v in self.resize)
        if not 0 < self.stride < self.win:
            raise UsageError(f"stride must satisfy 0 < stride < win, got {self.stride}/{self.win}")
        if not 0 < self.threshold < 1:
            raise UsageError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.tie_class not in ("MI", "N"):
            raise UsageError("tie_class must be MI or N")


@dataclass
class SegmentResult:
    video: np.ndarray          # cropped, frame-major
    bbox: BBox
    fallback: bool             # True when the mode mask was empty and the full frame was kept
    mask: np.ndarray           # per-video mode mask
    timings: dict = field(default_factory=dict)


@dataclass
class VideoVerdict:
    probabilities: list
    classes: list
    final: str
    bbox: BBox | None = None
    fallback: bool = False
    timings: dict = field(default_factory=dict)
    total_time: float = 0.0

    @property
    def mi_windows(self) -> int:
        return sum(c == "MI" for c in self.classes)

    def to_dict(self) -> dict:
        return {
            "class": self.final,
            "probabilities": [float(p) for p in self.probabilities],
            "classes": list(self.classes),
            "mi_windows": self.mi_windows,
            "windows": len(self.classes),
            "bbox": None if self.bbox is None else dict(zip(("top", "left", "height", "width"),
                                                             self.bbox.as_list())),
            "bbox_fallback": self.fallback,
            "timings": {k: float(v) for k, v in self.timings.items()},
            "total_time": float(self.total_time),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def window_predictor(segmenter, batch_size=32):
    """Adapt a Model (or any callable on ``(n, 150, 150)`` windows) to return probabilities."""
    if isinstance(segmenter, Model):
        def predict(windows):
            return segmenter.predict(windows[..., None], batch_size)[..., 0]
        return predict
    return segmenter


def video_vote(classes, tie_class="MI") -> str:
    """Statistical mode of per-window classes; an exact tie returns ``tie_class``."""
    if len(classes) == 0:
        raise ShapeError("cannot vote over zero windows")
    mi = sum(c == "MI" for c in classes)
    n = len(classes) - mi
    if mi == n:
        return tie_class
    return "MI" if mi > n else "N"


def segment_masks(video, segmenter, config: PipelineConfig | None = None) -> np.ndarray:
    """Binary mask per frame via windows -> segmenter -> round -> inverse window."""
    config = config or PipelineConfig()
    video = np.asarray(video)
    f, h, w = video.shape
    grid = SpatialGrid(h, w, config.win, config.stride)
    if h < config.win or w < config.win:
        raise ShapeError(f"frames {h}x{w} smaller than the {config.win}px window")
    predict = window_predictor(segmenter, config.batch_size)
    masks = np.empty((f, h, w), dtype=np.uint8)

    def one(i):
        wins, anchors = spatial_windows(video[i], grid)
        prob = np.clip(np.asarray(predict(wins), dtype=np.float64), 0, 1)
        masks[i] = reconstruct(round_mask(prob), anchors, h, w)

    if config.threads > 1:
        # frames are independent and each writes its own slot, so order does not matter
        with ThreadPoolExecutor(config.threads) as pool:
            list(pool.map(one, range(f)))
    else:
        for i in range(f):
            one(i)
    return masks


def segment_video(video, segmenter, config: PipelineConfig | None = None) -> SegmentResult:
    config = config or PipelineConfig()
    video = np.asarray(video)
    t0 = time.perf_counter()
    masks = segment_masks(video, segmenter, config)
    t1 = time.perf_counter()
    mask = mode_mask(masks)
    fallback = False
    try:
        box = min_bbox(mask)
    except EmptyMaskError:
        log.warning("empty mode mask; falling back to the full frame")
        box = BBox.full(*video.shape[1:])
        fallback = True
    cropped = crop_video(video, box)
    t2 = time.perf_counter()
    return SegmentResult(cropped, box, fallback, mask,
                         {"segment_windows": t1 - t0, "mode_bbox_crop": t2 - t1})


def detector_clips(video, w: int, resize) -> np.ndarray:
    """Resize a cropped video and cut it into ``(n, h, w, w_t, 1)`` detector inputs."""
    resized = resize_bilinear(np.asarray(video, dtype=np.float32), *resize)
    return temporal_windows(resized, w)[..., None]


def detect_video(cropped, detector, config: PipelineConfig | None = None) -> VideoVerdict:
    config = config or PipelineConfig()
    if isinstance(detector, Model):
        want = detector.input_shape
        if want[:2] != config.resize or want[2] != config.w:
            raise UsageError(f"detector expects {want[:3]}, config gives resize {config.resize} w={config.w}")
        predict = lambda clips: detector.predict(clips, config.batch_size)[:, 0]  # noqa: E731
    else:
        predict = detector
    t0 = time.perf_counter()
    resized = resize_bilinear(np.asarray(cropped, dtype=np.float32), *config.resize)
    t1 = time.perf_counter()
    clips = temporal_windows(resized, config.w)[..., None]
    t2 = time.perf_counter()
    probs = np.asarray(predict(clips), dtype=np.float64).reshape(-1)
    t3 = time.perf_counter()
    classes = ["MI" if p >= config.threshold else "N" for p in probs]
    final = video_vote(classes, config.tie_class)
    t4 = time.perf_counter()
    return VideoVerdict(probs.tolist(), classes, final,
                        timings={"resize": t1 - t0, "temporal_windows": t2 - t1,
                                 "detector": t3 - t2, "vote": t4 - t3})


def run_pipeline(video, segmenter, detector, config: PipelineConfig | None = None) -> VideoVerdict:
    config = config or PipelineConfig()
    start = time.perf_counter()
    seg = segment_video(video, segmenter, config)
    verdict = detect_video(seg.video, detector, config)
    verdict.bbox = seg.bbox
    verdict.fallback = seg.fallback
    verdict.timings = {**seg.timings, **verdict.timings}
    verdict.total_time = time.perf_counter() - start
    return verdict
