"""Metrics, training loops, 5-fold cross-validation and report emission."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import models
from .datagen import Manifest
from .errors import DataError, NumericError, ShapeError
from .fileio import atomic_write_text
from .nn import functional as F
from .nn.model import Model
from .nn.optim import RMSProp
from .pipeline import PipelineConfig, detector_clips, segment_video, video_vote
from .windowing import crop_video, spatial_windows

log = logging.getLogger(__name__)

METRICS = ("accuracy", "f1", "precision", "recall")
AGGREGATES = ("max", "mean", "min")
REPORT_SCHEMA = "echopipe.report/1"


def seg_accuracy(w, w_hat) -> float:
    """Segmentation accuracy, 1 - MSE between a mask and its prediction."""
    w = np.asarray(w, dtype=np.float64)
    w_hat = np.asarray(w_hat, dtype=np.float64)
    return 1.0 - F.mse(w, w_hat)[0]


@dataclass
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    undefined: list = field(default_factory=list)  # names of metrics reported as 0 for a 0/0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "Metrics":
        return cls(**d)


def classification_metrics(truth, predicted, positive="MI") -> Metrics:
    if len(truth) != len(predicted):
        raise ShapeError(f"{len(truth)} labels vs {len(predicted)} predictions")
    if len(truth) == 0:
        raise ShapeError("classification_metrics needs at least one sample")
    tp = sum(t == positive and p == positive for t, p in zip(truth, predicted))
    fp = sum(t != positive and p == positive for t, p in zip(truth, predicted))
    fn = sum(t == positive and p != positive for t, p in zip(truth, predicted))
    tn = len(truth) - tp - fp - fn
    return metrics_from_counts(tp, fp, fn, tn)


def metrics_from_counts(tp, fp, fn, tn=0) -> Metrics:
    undefined = []

    def ratio(num, den, name):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    p = ratio(tp, tp + fp, "precision")
    r = ratio(tp, tp + fn, "recall")
    f1 = ratio(2 * p * r, p + r, "f1")
    acc = ratio(tp + tn, tp + fp + fn + tn, "accuracy")
    return Metrics(tp, fp, fn, tn, p, r, f1, acc, undefined)


# Segmenter training -----------------------------------------------------------

def frame_indices(frames: int, per_video: int | None) -> np.ndarray:
    if per_video is None or per_video >= frames:
        return np.arange(frames)
    return np.unique(np.linspace(0, frames - 1, per_video).round().astype(int))


def segmentation_windows(manifest: Manifest, entries, frames_per_video=None):
    """Stack the 150x150 image and mask windows of the chosen frames of ``entries``."""
    xs, ys = [], []
    for e in entries:
        video = manifest.load_video(e)
        mask = manifest.load_mask(e)
        idx = frame_indices(len(video), frames_per_video)
        wins, anchors = spatial_windows(video[idx])
        mwins, _ = spatial_windows(mask)
        xs.append(wins)
        ys.append(np.tile(mwins, (len(idx), 1, 1)))
    if not xs:
        raise DataError("no videos selected for segmentation windows")
    return np.concatenate(xs)[..., None].astype(np.float32), np.concatenate(ys)[..., None].astype(np.float32)


def mean_window_accuracy(model: Model, x, y, batch_size=32) -> float:
    """Mean over windows of 1 - MSE(mask window, predicted window)."""
    accs = []
    for i in range(0, len(x), batch_size):
        pred = model.forward(x[i:i + batch_size])
        err = np.mean((pred.astype(np.float64) - y[i:i + batch_size]) ** 2, axis=(1, 2, 3))
        accs.extend(1 - err)
    return float(np.mean(accs))


def _epoch(model, opt, x, y, loss_fn, batch, micro_batch, rng, max_samples=None):
    order = rng.permutation(len(x))
    if max_samples is not None:
        order = order[:max_samples]
    total, seen = 0.0, 0
    for start in range(0, len(order), batch):
        idx = np.sort(order[start:start + batch])
        grads_sum = None
        for m in range(0, len(idx), micro_batch):
            sub = idx[m:m + micro_batch]
            out = model.forward(x[sub], train=True)
            loss, dout = loss_fn(y[sub], out)
            if not math.isfinite(loss):
                raise NumericError("training diverged (non-finite loss)")
            # micro-batch grads are means over the micro-batch; reweight to the batch mean
            wgt = len(sub) / len(idx)
            grads, _ = model.backward(dout * dout.dtype.type(wgt))
            if grads_sum is None:
                grads_sum = grads
            else:
                grads_sum = [(a[0] + b[0], a[1] + b[1]) for a, b in zip(grads_sum, grads)]
            total += loss * len(sub)
            seen += len(sub)
        opt.step(model.params, grads_sum)
    return total / max(seen, 1)


@dataclass
class SegTrainResult:
    model: Model                # weights at the best validation accuracy
    last: Model                 # weights after the final epoch
    initial_loss: float
    train_loss: list
    val_accuracy: list
    best_epoch: int


def train_segmenter(manifest: Manifest, epochs=100, batch=256, lr=1e-3, seed=0,
                    frames_per_video=None, micro_batch=16, windows_per_epoch=None,
                    model: Model | None = None, callback=None) -> SegTrainResult:
    """RMSProp on MSE over 150x150 windows of the train split; checkpoint on val accuracy."""
    train_x, train_y = segmentation_windows(manifest, manifest.select("train"), frames_per_video)
    val_entries = manifest.select("val")
    if val_entries:
        val_x, val_y = segmentation_windows(manifest, val_entries, frames_per_video)
    else:
        val_x, val_y = train_x, train_y
    model = model or models.build_segmenter(seed=seed)
    opt = RMSProp(lr)
    rng = np.random.default_rng(seed)

    initial = _dataset_loss(model, train_x, train_y)
    losses, accs = [], []
    best, best_acc, best_epoch = model.copy(), -1.0, -1
    for ep in range(epochs):
        loss = _epoch(model, opt, train_x, train_y, F.mse, batch, micro_batch, rng, windows_per_epoch)
        acc = mean_window_accuracy(model, val_x, val_y)
        losses.append(loss)
        accs.append(acc)
        log.info("seg epoch %d loss %.5f val-acc %.4f", ep + 1, loss, acc)
        if callback:
            callback(ep, loss, acc)
        if acc > best_acc:
            best, best_acc, best_epoch = model.copy(), acc, ep
    return SegTrainResult(best, model, initial, losses, accs, best_epoch)


def _dataset_loss(model, x, y, batch_size=32) -> float:
    total = 0.0
    for i in range(0, len(x), batch_size):
        total += F.mse(y[i:i + batch_size], model.forward(x[i:i + batch_size]))[0] * len(x[i:i + batch_size])
    return total / len(x)


def evaluate_segmenter(model: Model, manifest: Manifest, split="test", frames_per_video=None) -> float:
    x, y = segmentation_windows(manifest, manifest.select(split), frames_per_video)
    return mean_window_accuracy(model, x, y)


# Detector training and cross-validation -------------------------------------------

def crop_clips(manifest: Manifest, entries, config: PipelineConfig, segmenter=None) -> dict:
    """Cropped and resized frame stacks per video id.

    With a segmenter the crop box comes from the segmentation pipeline; without
    one the manifest's ground-truth rectangle is used.
    """
    out = {}
    for e in entries:
        video = manifest.load_video(e)
        if segmenter is None:
            cropped = crop_video(video, e.bbox)
        else:
            cropped = segment_video(video, segmenter, config).video
        out[e.id] = detector_clips(cropped, config.w, config.resize)
    return out


def train_detector(x, y, w, epochs=100, batch=8, lr=1e-3, seed=0, input_hw=models.DETECTOR_INPUT_HW,
                   callback=None):
    model = models.build_detector(w, seed=seed, input_hw=input_hw)
    opt = RMSProp(lr)
    rng = np.random.default_rng(seed)
    y = np.asarray(y, dtype=np.float32).reshape(-1, 1)
    losses = []
    for ep in range(epochs):
        loss = _epoch(model, opt, x, y, F.bce, batch, batch, rng)
        losses.append(loss)
        log.info("det epoch %d loss %.5f", ep + 1, loss)
        if callback:
            callback(ep, loss)
    return model, losses


def predict_videos(model: Model, clips: dict, config: PipelineConfig) -> dict:
    """Video-level class per id via thresholded window probabilities and a mode vote."""
    out = {}
    for vid, c in clips.items():
        probs = model.predict(c, config.batch_size)[:, 0]
        classes = ["MI" if p >= config.threshold else "N" for p in probs]
        out[vid] = video_vote(classes, config.tie_class)
    return out


@dataclass
class FoldResult:
    fold: int
    metrics: Metrics
    losses: list
    predictions: dict                 # video id -> predicted class on the held-out fold
    test_metrics: Metrics | None = None

    def to_dict(self) -> dict:
        return {"fold": self.fold, "metrics": self.metrics.to_dict(), "losses": list(self.losses),
                "predictions": dict(self.predictions),
                "test_metrics": None if self.test_metrics is None else self.test_metrics.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "FoldResult":
        tm = d.get("test_metrics")
        return cls(d["fold"], Metrics.from_dict(d["metrics"]), d["losses"], d["predictions"],
                   None if tm is None else Metrics.from_dict(tm))


def train_detector_cv(manifest: Manifest, w=5, epochs_per_fold=100, batch=8, lr=1e-3, seed=0,
                      segmenter=None, config: PipelineConfig | None = None, evaluate_test=True,
                      folds=None, callback=None) -> list[FoldResult]:
    """5-fold CV over the non-test videos; each fold trains a fresh detector.

    Held-out metrics are per video (mode vote over that video's windows). The
    test split is never trained on; when ``evaluate_test`` is set every fold
    model is also scored on it.
    """
    config = config or PipelineConfig(w=w)
    if config.w != w:
        config = PipelineConfig(**{**asdict(config), "w": w})
    pool = manifest.select(("train", "val"))
    test = manifest.select("test") if evaluate_test else []
    clips = crop_clips(manifest, pool + test, config, segmenter)
    label = {e.id: e.label for e in pool + test}
    results = []
    for k in (folds if folds is not None else range(manifest.folds)):
        train_ids = [e.id for e in pool if e.fold != k]
        held_ids = [e.id for e in pool if e.fold == k]
        if len({label[i] for i in train_ids}) < 2:
            raise DataError(f"fold {k}: training videos contain a single class")
        if not held_ids:
            raise DataError(f"fold {k} has no held-out videos")
        x = np.concatenate([clips[i] for i in train_ids])
        y = np.concatenate([np.full(len(clips[i]), label[i] == "MI", dtype=np.float32) for i in train_ids])
        model, losses = train_detector(x, y, w, epochs_per_fold, batch, lr, seed=seed + k,
                                       input_hw=config.resize)
        preds = predict_videos(model, {i: clips[i] for i in held_ids}, config)
        metrics = classification_metrics([label[i] for i in held_ids], [preds[i] for i in held_ids])
        test_metrics = None
        if test:
            tp = predict_videos(model, {e.id: clips[e.id] for e in test}, config)
            test_metrics = classification_metrics([e.label for e in test], [tp[e.id] for e in test])
        log.info("fold %d: held-out acc %.3f f1 %.3f", k, metrics.accuracy, metrics.f1)
        result = FoldResult(k, metrics, losses, preds, test_metrics)
        results.append(result)
        if callback:
            callback(result, model)
    return results


def summarize(folds: list[FoldResult], use_test=False) -> dict:
    """Max / mean / min of every metric across folds."""
    if not folds:
        raise DataError("no fold results to summarise")
    out = {}
    for name in METRICS:
        vals = [getattr(f.test_metrics if use_test else f.metrics, name) for f in folds]
        out[name] = {"max": float(max(vals)), "mean": float(np.mean(vals)), "min": float(min(vals))}
    return out


def report_dict(results: dict) -> dict:
    if not results:
        raise DataError("empty results: nothing to report")
    doc = {"schema": REPORT_SCHEMA, "windows": {}}
    for w in sorted(results, key=int):
        folds = results[w]
        doc["windows"][str(w)] = {"folds": [f.to_dict() for f in folds], "summary": summarize(folds)}
    return doc


def format_table(doc: dict) -> str:
    """Aligned text table: one Max/Mean/Min block per metric, one column per window size."""
    ws = list(doc["windows"])
    head = f"{'Metric':<11}{'':<6}" + "".join(f"{'w=' + w:>10}" for w in ws)
    lines = [head, "-" * len(head)]
    for name in METRICS:
        label = {"f1": "F1 score"}.get(name, name.capitalize())
        for j, agg in enumerate(AGGREGATES):
            cells = "".join(f"{100 * doc['windows'][w]['summary'][name][agg]:>9.1f}%" for w in ws)
            lines.append(f"{label if j == 0 else '':<11}{agg.capitalize():<6}{cells}")
        lines.append("-" * len(head))
    return "\n".join(lines) + "\n"


def emit_report(results: dict, out_dir) -> tuple[Path, Path]:
    """Write ``report.json`` and ``report.txt``; ``results`` maps window size -> folds."""
    doc = report_dict(results)
    out_dir = Path(out_dir)
    jpath = atomic_write_text(out_dir / "report.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")
    tpath = atomic_write_text(out_dir / "report.txt", format_table(doc))
    return jpath, tpath


def load_report(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != REPORT_SCHEMA:
        raise DataError(f"unknown report schema {doc.get('schema')!r}")
    return {w: [FoldResult.from_dict(f) for f in v["folds"]] for w, v in doc["windows"].items()}
