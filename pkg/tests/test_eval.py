import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from echopipe import models
from echopipe.errors import DataError, ShapeError
from echopipe.eval import (FoldResult, classification_metrics, emit_report, evaluate_segmenter,
                           format_table, load_report, metrics_from_counts, report_dict, seg_accuracy,
                           summarize, train_detector, train_detector_cv, train_segmenter)
from echopipe.nn.serialize import to_bytes
from echopipe.pipeline import PipelineConfig


def test_seg_accuracy_examples():
    m = np.array([[1, 0], [0, 1]])
    assert seg_accuracy(m, m) == 1.0
    assert seg_accuracy(m, 1 - m) == 0.0
    assert seg_accuracy(m, np.array([[1, 1], [0, 0]])) == 0.5
    with pytest.raises(ShapeError):
        seg_accuracy(m, np.ones((3, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_seg_accuracy_is_pixel_accuracy(seed):
    rng = np.random.default_rng(seed)
    a, b = (rng.uniform(size=(2, 9, 7)) > 0.5)
    acc = seg_accuracy(a, b)
    assert 0 <= acc <= 1
    assert acc == pytest.approx(np.mean(a == b))


def test_metrics_example_counts():
    m = metrics_from_counts(18, 0, 1)
    assert m.precision == 1.0
    assert m.recall == pytest.approx(18 / 19)
    assert m.f1 == pytest.approx(0.973, abs=5e-3)
    assert m.f1 == pytest.approx(2 * 18 / (2 * 18 + 1))


def test_metrics_all_correct_and_undefined():
    m = classification_metrics(["MI", "N", "MI"], ["MI", "N", "MI"])
    assert m.precision == m.recall == m.f1 == m.accuracy == 1.0
    u = classification_metrics(["MI", "N"], ["N", "N"])
    assert u.precision == 0.0 and "precision" in u.undefined
    assert u.recall == 0.0 and u.accuracy == 0.5
    with pytest.raises(ShapeError):
        classification_metrics([], [])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["MI", "N"]), st.sampled_from(["MI", "N"])), min_size=1))
def test_f1_between_precision_and_recall(pairs):
    m = classification_metrics(*zip(*pairs))
    assert m.tp + m.fp + m.fn + m.tn == len(pairs)
    if not m.undefined:
        assert min(m.precision, m.recall) - 1e-12 <= m.f1 <= max(m.precision, m.recall) + 1e-12


def _fake_folds(n=5):
    rng = np.random.default_rng(0)
    out = []
    for k in range(n):
        t = list(rng.choice(["MI", "N"], 6))
        p = list(rng.choice(["MI", "N"], 6))
        out.append(FoldResult(k, classification_metrics(t, p), [0.5, 0.4], {f"v{i}": c for i, c in enumerate(p)}))
    return out


def test_report_structure_and_order_law(tmp_path):
    folds = _fake_folds()
    doc = report_dict({5: folds, 7: _fake_folds()})
    w5 = doc["windows"]["5"]
    assert len(w5["folds"]) == 5
    assert len(w5["summary"]) == 4 and all(len(v) == 3 for v in w5["summary"].values())
    for agg in w5["summary"].values():
        assert agg["min"] <= agg["mean"] <= agg["max"]
    table = format_table(doc)
    assert table.count("%") == 4 * 3 * 2
    jpath, tpath = emit_report({5: folds}, tmp_path)
    back = load_report(jpath)
    assert [f.metrics for f in back["5"]] == [f.metrics for f in folds]
    assert tpath.read_text() == format_table(json.loads(jpath.read_text()))


def test_empty_report_guard(tmp_path):
    with pytest.raises(DataError):
        emit_report({}, tmp_path / "r")
    assert not (tmp_path / "r").exists()
    with pytest.raises(DataError):
        summarize([])


def test_folds_partition_pool(small_dataset):
    pool = small_dataset.select(("train", "val"))
    folds = {}
    for v in pool:
        folds.setdefault(v.fold, []).append(v.id)
    assert sorted(folds) == list(range(5))
    ids = [i for f in folds.values() for i in f]
    assert sorted(ids) == sorted(v.id for v in pool)


def test_identical_samples_identical_losses():
    m = models.build_detector(5, seed=0, input_hw=(48, 48))
    x = np.repeat(np.random.default_rng(0).uniform(size=(1, 48, 48, 5, 1)), 4, axis=0).astype(np.float32)
    out = m.forward(x)
    assert np.all(out == out[0])


@pytest.mark.slow
def test_segmenter_first_epoch_beats_initial_loss(small_dataset):
    wins = 0
    for seed in range(10):
        r = train_segmenter(small_dataset, epochs=1, batch=8, micro_batch=8, seed=seed, frames_per_video=1)
        wins += r.train_loss[0] < r.initial_loss
    assert wins >= 9


def test_segmenter_checkpoint_is_best_epoch(small_dataset):
    r = train_segmenter(small_dataset, epochs=2, batch=8, micro_batch=8, seed=0, frames_per_video=1,
                        windows_per_epoch=16)
    assert r.best_epoch == int(np.argmax(r.val_accuracy))
    acc = evaluate_segmenter(r.model, small_dataset, "val", frames_per_video=1)
    assert acc == pytest.approx(r.val_accuracy[r.best_epoch], abs=1e-6)


def test_training_is_deterministic(small_dataset):
    kw = dict(epochs=2, batch=8, micro_batch=8, seed=3, frames_per_video=1, windows_per_epoch=16)
    a = train_segmenter(small_dataset, **kw)
    b = train_segmenter(small_dataset, **kw)
    assert to_bytes(a.last) == to_bytes(b.last)


def test_detector_cv_runs_every_fold(small_dataset):
    cfg = PipelineConfig(resize=(48, 48))
    results = train_detector_cv(small_dataset, 5, epochs_per_fold=1, batch=8, config=cfg)
    assert [r.fold for r in results] == list(range(5))
    held = sorted(i for r in results for i in r.predictions)
    assert held == sorted(v.id for v in small_dataset.select(("train", "val")))
    assert all(r.test_metrics is not None for r in results)


def test_detector_training_reduces_loss():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(16, 48, 48, 5, 1)).astype(np.float32)
    y = np.arange(16) % 2
    x[y == 1] *= 0.3
    _, losses = train_detector(x, y, 5, epochs=6, batch=4, input_hw=(48, 48))
    assert losses[-1] < losses[0]


def test_single_class_fold_rejected(small_dataset):
    import copy
    m = copy.deepcopy(small_dataset)
    for v in m.videos:
        if v.fold is not None and v.fold != 0:
            v.label = "N"
    with pytest.raises(DataError):
        train_detector_cv(m, 5, epochs_per_fold=1, config=PipelineConfig(resize=(48, 48)), folds=[0])
