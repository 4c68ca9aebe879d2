"""Spatial and temporal sliding windows, inverse-window fusion, masks and crops.

Frames are 2D ``(rows, cols)`` arrays and videos are frame-major
``(frames, rows, cols)`` arrays with values in [0, 1].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptyMaskError, ShapeError

log = logging.getLogger(__name__)

WINDOW = 150
STRIDE = 75


@dataclass(frozen=True)
class BBox:
    top: int
    left: int
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ShapeError(f"bounding box needs positive extents, got {self}")
        if self.top < 0 or self.left < 0:
            raise ShapeError(f"bounding box origin must be non-negative, got {self}")

    @property
    def bottom(self) -> int:
        return self.top + self.height

    @property
    def right(self) -> int:
        return self.left + self.width

    def fits(self, frame_h: int, frame_w: int) -> bool:
        return self.bottom <= frame_h and self.right <= frame_w

    def as_list(self) -> list[int]:
        return [self.top, self.left, self.height, self.width]

    @classmethod
    def full(cls, frame_h, frame_w) -> "BBox":
        return cls(0, 0, frame_h, frame_w)


def axis_anchors(dim: int, win: int = WINDOW, stride: int = STRIDE) -> list[int]:
    """0, stride, 2*stride, ... plus a final anchor at ``dim - win`` when the steps miss it."""
    if win > dim:
        raise ShapeError(f"window {win} larger than extent {dim}")
    if stride < 1:
        raise ShapeError("stride must be >= 1")
    anchors = list(range(0, dim - win + 1, stride))
    if anchors[-1] != dim - win:
        anchors.append(dim - win)
    return anchors


@dataclass(frozen=True)
class SpatialGrid:
    frame_h: int
    frame_w: int
    win: int = WINDOW
    stride: int = STRIDE

    @property
    def rows(self) -> list[int]:
        return axis_anchors(self.frame_h, self.win, self.stride)

    @property
    def cols(self) -> list[int]:
        return axis_anchors(self.frame_w, self.win, self.stride)

    @property
    def anchors(self) -> list[tuple[int, int]]:
        return [(r, c) for r in self.rows for c in self.cols]

    def coverage(self) -> np.ndarray:
        cov = np.zeros((self.frame_h, self.frame_w), dtype=np.int32)
        for r, c in self.anchors:
            cov[r:r + self.win, c:c + self.win] += 1
        return cov


def spatial_windows(frame, grid: SpatialGrid | None = None, win=WINDOW, stride=STRIDE):
    """Cut a frame (or a frame-major stack) into ``win x win`` windows.

    Returns ``(windows, anchors)`` with anchors in row-major order. For a stack
    of shape ``(F, H, W)`` the windows come out frame by frame.
    """
    frame = np.asarray(frame)
    h, w = frame.shape[-2:]
    if grid is None:
        grid = SpatialGrid(h, w, win, stride)
    if h < grid.win or w < grid.win:
        raise ShapeError(f"frame {h}x{w} smaller than window {grid.win}")
    anchors = grid.anchors
    if frame.ndim == 2:
        wins = np.stack([frame[r:r + grid.win, c:c + grid.win] for r, c in anchors])
    else:
        wins = np.stack([frame[..., r:r + grid.win, c:c + grid.win] for r, c in anchors], axis=1)
        wins = wins.reshape(-1, grid.win, grid.win)
    return wins, anchors


def round_mask(prob) -> np.ndarray:
    """Half-up rounding of probabilities: >= 0.5 becomes 1."""
    prob = np.asarray(prob)
    if prob.size and (prob.min() < 0 or prob.max() > 1):
        raise DataError("round_mask expects values in [0, 1]")
    return (prob >= 0.5).astype(np.uint8)


def reconstruct(windows, anchors, frame_h: int, frame_w: int) -> np.ndarray:
    """Inverse sliding window: sum votes, divide by per-pixel coverage, threshold at 0.5."""
    windows = np.asarray(windows)
    if len(windows) != len(anchors):
        raise ShapeError(f"{len(windows)} windows for {len(anchors)} anchors")
    votes = np.zeros((frame_h, frame_w), dtype=np.float64)
    cover = np.zeros((frame_h, frame_w), dtype=np.float64)
    for win, (r, c) in zip(windows, anchors):
        wh, ww = win.shape
        if r < 0 or c < 0 or r + wh > frame_h or c + ww > frame_w:
            raise ShapeError(f"anchor {(r, c)} puts a {wh}x{ww} window outside {frame_h}x{frame_w}")
        votes[r:r + wh, c:c + ww] += win
        cover[r:r + wh, c:c + ww] += 1
    if np.any(cover == 0):
        raise ShapeError("windows do not cover the whole frame")
    return (votes / cover >= 0.5).astype(np.uint8)


def mode_mask(stack) -> np.ndarray:
    """Per-pixel majority over frame masks; ties (even frame counts) go to 1."""
    stack = np.asarray(stack)
    if stack.ndim != 3 or len(stack) == 0:
        raise ShapeError(f"mode_mask needs a (frames, rows, cols) stack, got {stack.shape}")
    ones = stack.astype(np.int64).sum(axis=0)
    return (2 * ones >= len(stack)).astype(np.uint8)


def min_bbox(mask) -> BBox:
    mask = np.asarray(mask)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    return BBox(int(rows[0]), int(cols[0]), int(rows[-1] - rows[0] + 1), int(cols[-1] - cols[0] + 1))


def crop_video(video, box: BBox) -> np.ndarray:
    video = np.asarray(video)
    if not box.fits(*video.shape[-2:]):
        raise ShapeError(f"{box} outside {video.shape[-2:]} frame")
    return video[..., box.top:box.bottom, box.left:box.right]


def _axis_weights(src: int, dst: int):
    # half-pixel centres: sample position (i + 0.5) * src / dst - 0.5, clamped
    pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0, src - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def resize_bilinear(video, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear resize of a frame or a frame-major stack; a convex blend, so [0,1] stays [0,1]."""
    if target_h < 1 or target_w < 1:
        raise ShapeError("resize targets must be >= 1")
    video = np.asarray(video)
    h, w = video.shape[-2:]
    if (h, w) == (target_h, target_w):
        return video.copy()
    r0, r1, fr = _axis_weights(h, target_h)
    c0, c1, fc = _axis_weights(w, target_w)
    dt = video.dtype if np.issubdtype(video.dtype, np.floating) else np.float32
    v = video.astype(dt, copy=False)
    fr = fr.astype(dt)[:, None]
    fc = fc.astype(dt)
    rows = v[..., r0, :] * (1 - fr) + v[..., r1, :] * fr
    return rows[..., c0] * (1 - fc) + rows[..., c1] * fc


def temporal_windows(video, win_t: int) -> np.ndarray:
    """Stride-1 temporal windows: ``(count, rows, cols, win_t)`` with count = frames - win_t + 1."""
    video = np.asarray(video)
    frames = video.shape[0]
    if win_t < 1 or frames < win_t:
        raise ShapeError(f"need at least {win_t} frames, video has {frames}")
    idx = np.arange(frames - win_t + 1)[:, None] + np.arange(win_t)[None, :]
    # (count, win_t, rows, cols) -> (count, rows, cols, win_t)
    return np.moveaxis(video[idx], 1, -1)


def temporal_window_count(frames: int, win_t: int) -> int:
    if frames < win_t:
        raise ShapeError(f"need at least {win_t} frames, video has {frames}")
    return frames - win_t + 1
