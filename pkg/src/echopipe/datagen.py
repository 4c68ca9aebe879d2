"""Synthetic A4C-like phantom videos, ECHO video files and dataset manifests.

A phantom is a dark elliptical chamber inside a bright wall, set in textured
tissue. The chamber radius follows a cosine cardiac cycle. In MI phantoms an
angular sector of the wall (the hypokinetic sector) moves with reduced
amplitude. The ground-truth mask is the rectangle bounding the chamber and
wall at maximal dilation, the same for every frame of a video.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, ShapeError
from .fileio import atomic_write_bytes, atomic_write_text
from .windowing import BBox

ECHO_MAGIC = b"ECHOv001"
MANIFEST_VERSION = 1
LABELS = ("N", "MI")


@dataclass
class PhantomConfig:
    frame_h: int = 256
    frame_w: int = 256
    frames: int = 25
    cycle_frames: float = 20.0
    phase: float = 0.0               # radians; phase 0 is end-diastole (max dilation)
    center: tuple = (128.0, 128.0)   # (row, col)
    axes: tuple = (55.0, 38.0)       # chamber semi-axes (rows, cols) at max dilation
    wall: float = 0.2                # wall thickness as a fraction of the semi-axes
    amplitude: float = 0.3           # fractional radius reduction at end-systole
    label: str = "N"
    sector: tuple = (0.0, 150.0)     # hypokinetic sector, degrees (MI only)
    reduction: float = 0.1           # amplitude factor inside the sector (MI only)
    noise: float = 0.04              # per-frame additive speckle std
    edge: float = 0.03               # edge softness; larger values blur the wall
    interior_speckle: float = 0.0    # extra noise inside the cavity
    seed: int = 0

    def __post_init__(self):
        self.center = tuple(float(v) for v in self.center)
        self.axes = tuple(float(v) for v in self.axes)
        self.sector = tuple(float(v) for v in self.sector)
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.label == "MI" and not self.reduction < 1:
            raise ValueError("MI phantoms need a reduction factor < 1")
        if not 0 <= self.amplitude < 1:
            raise ValueError("amplitude must be in [0, 1)")
        if self.frames < 1 or self.frame_h < 1 or self.frame_w < 1:
            raise ValueError("frames and frame dims must be positive")
        box = self.bbox_unclipped()
        if box[0] < 0 or box[1] < 0 or box[2] > self.frame_h or box[3] > self.frame_w:
            raise ShapeError(f"chamber {box} exceeds the {self.frame_h}x{self.frame_w} frame")

    def bbox_unclipped(self):
        ry = self.axes[0] * (1 + self.wall)
        rx = self.axes[1] * (1 + self.wall)
        cy, cx = self.center
        # pixel centres strictly inside the outer boundary at maximal dilation
        return (math.floor(cy - ry) + 1, math.floor(cx - rx) + 1, math.ceil(cy + ry), math.ceil(cx + rx))

    @property
    def bbox(self) -> BBox:
        t, l, b, r = self.bbox_unclipped()
        return BBox(t, l, b - t, r - l)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("center", "axes", "sector"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d) -> "PhantomConfig":
        return cls(**d)


def contraction(config: PhantomConfig, t) -> np.ndarray:
    """0 at end-diastole, 1 at end-systole."""
    return 0.5 * (1 - np.cos(2 * np.pi * np.asarray(t, dtype=np.float64) / config.cycle_frames
                             + config.phase))


def in_sector(config: PhantomConfig, theta) -> np.ndarray:
    lo, hi = (math.radians(a) for a in config.sector)
    rel = np.mod(np.asarray(theta) - lo, 2 * np.pi)
    return rel <= np.mod(hi - lo, 2 * np.pi)


def sector_weight(config: PhantomConfig, theta, taper=20.0) -> np.ndarray:
    """1 inside the hypokinetic sector, 0 outside, cosine ramp over ``taper`` degrees
    just outside each sector edge."""
    lo, hi = (math.radians(a) for a in config.sector)
    width = np.mod(hi - lo, 2 * np.pi)
    rel = np.mod(np.asarray(theta, dtype=np.float64) - lo, 2 * np.pi)
    # angular distance outside the sector (0 inside)
    outside = np.where(rel <= width, 0.0, np.minimum(rel - width, 2 * np.pi - rel))
    tap = math.radians(taper)
    return np.where(outside >= tap, 0.0, 0.5 * (1 + np.cos(np.pi * np.minimum(outside / tap, 1))))


def wall_radius(config: PhantomConfig, t, theta) -> np.ndarray:
    """Normalised inner wall radius at frame ``t`` and polar angle ``theta`` (radians)."""
    gain = np.ones_like(np.asarray(theta, dtype=np.float64))
    if config.label == "MI":
        gain = 1 - (1 - config.reduction) * sector_weight(config, theta)
    return 1 - config.amplitude * contraction(config, t) * gain


def _polar(config: PhantomConfig):
    y, x = np.mgrid[0:config.frame_h, 0:config.frame_w].astype(np.float64)
    ny = (y - config.center[0]) / config.axes[0]
    nx = (x - config.center[1]) / config.axes[1]
    return np.hypot(ny, nx), np.arctan2(ny, nx)


def chamber_support(config: PhantomConfig, t) -> np.ndarray:
    """Hard geometry: pixels inside the outer wall boundary at frame ``t``."""
    rho, theta = _polar(config)
    return rho < wall_radius(config, t, theta) + config.wall


def _soft(v, edge):
    return 0.5 * (1 + np.tanh(v / (2 * edge)))


def generate_phantom(config: PhantomConfig):
    """Render ``(video, mask)``: float32 frames in [0, 1] and the uint8 rectangle mask."""
    rng = np.random.default_rng(config.seed)
    rho, theta = _polar(config)
    texture = 0.22 + 0.06 * rng.standard_normal((config.frame_h, config.frame_w))
    video = np.empty((config.frames, config.frame_h, config.frame_w), dtype=np.float32)
    for t in range(config.frames):
        s = wall_radius(config, t, theta)
        cavity = _soft(s - rho, config.edge)
        wall = _soft(rho - s, config.edge) * _soft(s + config.wall - rho, config.edge)
        tissue = np.clip(1 - cavity - wall, 0, 1)
        frame = 0.05 * cavity + 0.85 * wall + texture * tissue
        if config.noise:
            frame = frame + config.noise * rng.standard_normal(frame.shape)
        if config.interior_speckle:
            frame = frame + cavity * config.interior_speckle * np.abs(rng.standard_normal(frame.shape))
        video[t] = np.clip(frame, 0, 1)
    return video, rect_mask(config.frame_h, config.frame_w, config.bbox)


def rect_mask(frame_h, frame_w, box: BBox) -> np.ndarray:
    mask = np.zeros((frame_h, frame_w), dtype=np.uint8)
    mask[box.top:box.bottom, box.left:box.right] = 1
    return mask


def random_config(rng: np.random.Generator, label: str, frame_range=(256, 320), frames=25,
                  amplitude=(0.28, 0.36), reduction=0.1, sector_width=150.0, noise=0.04,
                  seed=None) -> PhantomConfig:
    """Draw a phantom configuration. The draws do not depend on ``label``, so
    matched generators give N/MI twins with identical geometry."""
    lo, hi = frame_range
    fh, fw = (int(v) for v in rng.integers(lo, hi + 1, size=2))
    ay = float(rng.uniform(45, 58))
    ax = float(ay * rng.uniform(0.62, 0.78))
    wall = 0.2
    ry, rx = ay * (1 + wall) + 3, ax * (1 + wall) + 3
    cy = float(rng.uniform(ry, fh - ry))
    cx = float(rng.uniform(rx, fw - rx))
    sector_start = float(rng.uniform(0, 360))
    return PhantomConfig(
        frame_h=fh, frame_w=fw, frames=int(frames),
        cycle_frames=float(rng.uniform(16, 24)), phase=float(rng.uniform(0, 2 * np.pi)),
        center=(cy, cx), axes=(ay, ax), wall=wall,
        amplitude=float(rng.uniform(*amplitude)), label=label,
        sector=(sector_start, (sector_start + sector_width) % 360), reduction=reduction,
        noise=noise, edge=float(rng.uniform(0.02, 0.05)),
        seed=int(rng.integers(2**31)) if seed is None else seed,
    )


# ECHO files ---------------------------------------------------------------

def echo_bytes(video) -> bytes:
    video = np.asarray(video)
    if video.ndim != 3:
        raise ShapeError(f"ECHO videos are (frames, rows, cols), got {video.shape}")
    if video.size and (video.min() < 0 or video.max() > 1):
        raise DataError("ECHO frame values must lie in [0, 1]")
    head = ECHO_MAGIC + struct.pack("<III", *video.shape)
    return head + np.ascontiguousarray(video, dtype="<f4").tobytes()


def parse_echo(data: bytes) -> np.ndarray:
    if len(data) < 20 or data[:8] != ECHO_MAGIC:
        raise FormatError("not an ECHO file (bad magic)")
    f, h, w = struct.unpack("<III", data[8:20])
    if len(data) != 20 + 4 * f * h * w:
        raise FormatError(f"ECHO payload size mismatch for {f}x{h}x{w}")
    return np.frombuffer(data, dtype="<f4", offset=20).reshape(f, h, w).astype(np.float32)


def write_echo(path, video) -> Path:
    return atomic_write_bytes(path, echo_bytes(video))


def read_echo(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"video file not found: {path}")
    return parse_echo(path.read_bytes())


# Dataset manifests -----------------------------------------------------------

@dataclass
class VideoEntry:
    id: str
    path: str
    label: str
    mask: list            # [top, left, height, width]
    frames: int
    height: int
    width: int
    split: str = "train"  # train | val | test
    fold: int | None = None
    config: dict = field(default_factory=dict)

    @property
    def bbox(self) -> BBox:
        return BBox(*self.mask)


@dataclass
class Manifest:
    videos: list
    seed: int = 0
    class_ratio: float = 0.5
    folds: int = 5
    root: Path | None = None
    version: int = MANIFEST_VERSION

    def to_json(self) -> str:
        doc = {"version": self.version, "seed": self.seed, "class_ratio": self.class_ratio,
               "folds": self.folds, "videos": [asdict(v) for v in self.videos]}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str, root=None) -> "Manifest":
        try:
            doc = json.loads(text)
            videos = [VideoEntry(**v) for v in doc["videos"]]
            return cls(videos, doc["seed"], doc["class_ratio"], doc["folds"],
                       Path(root) if root else None, doc.get("version", MANIFEST_VERSION))
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"malformed manifest: {exc}") from exc

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        if not path.exists():
            raise DataError(f"manifest not found: {path}")
        return cls.from_json(path.read_text(encoding="utf-8"), root=path.parent)

    def save(self, path) -> Path:
        return atomic_write_text(path, self.to_json())

    def select(self, split=None, folds=None, exclude_folds=None) -> list:
        out = []
        for v in self.videos:
            if split is not None and v.split not in (split if isinstance(split, (tuple, list)) else (split,)):
                continue
            if folds is not None and v.fold not in folds:
                continue
            if exclude_folds is not None and v.fold in exclude_folds:
                continue
            out.append(v)
        return out

    def load_video(self, entry: VideoEntry) -> np.ndarray:
        return read_echo(Path(self.root or ".") / entry.path)

    def load_mask(self, entry: VideoEntry) -> np.ndarray:
        return rect_mask(entry.height, entry.width, entry.bbox)


def _largest_remainder(total: int, weights: list[int]) -> list[int]:
    s = sum(weights)
    raw = [total * w / s for w in weights]
    base = [int(math.floor(r)) for r in raw]
    order = sorted(range(len(weights)), key=lambda i: (-(raw[i] - base[i]), -weights[i], i))
    for i in order[: total - sum(base)]:
        base[i] += 1
    return base


def assign_splits(labels: list[str], seed: int, test_frac=0.2, val_frac=0.2, folds=5):
    """Stratified video-level split: test, then validation out of the rest, then
    CV folds over every non-test video. Returns ``(splits, fold_of)`` lists."""
    rng = np.random.default_rng(seed)
    n = len(labels)
    by_class = {c: [i for i, l in enumerate(labels) if l == c] for c in LABELS}
    for c in LABELS:
        rng.shuffle(by_class[c])
    counts = [len(by_class[c]) for c in LABELS]
    n_test = round(test_frac * n)
    test_per = _largest_remainder(n_test, counts)
    n_val = round(val_frac * (n - n_test))
    val_per = _largest_remainder(n_val, [c - t for c, t in zip(counts, test_per)])
    splits = [""] * n
    fold_of: list[int | None] = [None] * n
    k = 0
    for c, nt, nv in zip(LABELS, test_per, val_per):
        idx = by_class[c]
        for j, i in enumerate(idx):
            splits[i] = "test" if j < nt else ("val" if j < nt + nv else "train")
        # folds run over the whole 80% pool; continue the counter across classes
        for i in sorted(i for i in idx if splits[i] != "test"):
            fold_of[i] = k % folds
            k += 1
    return splits, fold_of


def build_dataset(out_dir, n_videos=40, class_ratio=0.5, seed=0, frame_range=(256, 320),
                  frames=25, folds=5, **phantom_kw) -> Manifest:
    """Generate ``n_videos`` phantoms under ``out_dir`` plus ``manifest.json``."""
    if n_videos < 10:
        raise DataError("build_dataset needs at least 10 videos")
    if not 0 < class_ratio < 1:
        raise DataError("class_ratio must be strictly between 0 and 1")
    n_mi = round(n_videos * class_ratio)
    if min(n_mi, n_videos - n_mi) < 2:
        raise DataError(f"class ratio {class_ratio} leaves a class with fewer than 2 videos")
    rng = np.random.default_rng(seed)
    labels = ["MI"] * n_mi + ["N"] * (n_videos - n_mi)
    rng.shuffle(labels)
    splits, fold_of = assign_splits(labels, seed, folds=folds)

    out_dir = Path(out_dir)
    entries = []
    for i, label in enumerate(labels):
        cfg = random_config(rng, label, frame_range=frame_range, frames=frames, **phantom_kw)
        video, _ = generate_phantom(cfg)
        rel = f"videos/vid_{i:04d}.echo"
        write_echo(out_dir / rel, video)
        entries.append(VideoEntry(f"vid_{i:04d}", rel, label, cfg.bbox.as_list(), cfg.frames,
                                  cfg.frame_h, cfg.frame_w, splits[i], fold_of[i], cfg.to_dict()))
    manifest = Manifest(entries, seed, class_ratio, folds, out_dir)
    manifest.save(out_dir / "manifest.json")
    return manifest


def regenerate(manifest: Manifest, out_dir) -> None:
    """Re-render every video of a manifest from its stored phantom configuration."""
    out_dir = Path(out_dir)
    for v in manifest.videos:
        video, _ = generate_phantom(PhantomConfig.from_dict(v.config))
        write_echo(out_dir / v.path, video)
    Manifest(manifest.videos, manifest.seed, manifest.class_ratio, manifest.folds).save(
        out_dir / "manifest.json")
