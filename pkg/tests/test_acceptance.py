"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s``; the lines also appear
in a normal run because they bypass output capture.
"""
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from echopipe import cli, models
from echopipe.datagen import Manifest, build_dataset, echo_bytes, parse_echo
from echopipe.eval import evaluate_segmenter, metrics_from_counts, seg_accuracy, train_detector
from echopipe.nn import functional as F
from echopipe.nn import gradcheck, jitter_biases
from echopipe.nn import layers as L
from echopipe.nn.model import Model
from echopipe.nn.serialize import from_bytes, load_weights, to_bytes
from echopipe.windowing import SpatialGrid, reconstruct, spatial_windows, temporal_window_count
from oracles import anchors_enumerated, conv_naive


@pytest.fixture
def verdict(capsys):
    def emit(n, title, ok, detail=""):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {title}{' | ' + detail if detail else ''}")
        assert ok, f"criterion {n}: {title} {detail}"
    return emit


def test_1_parameter_counts(verdict):
    want = {5: 57977, 7: 68345, 9: 74105}
    got, worst = {}, 0.0
    for w in want:
        t = time.perf_counter()
        r = subprocess.run([sys.executable, "-m", "echopipe", "param-count", "--detector", str(w)],
                           capture_output=True, text=True)
        worst = max(worst, time.perf_counter() - t)
        got[w] = int(r.stdout.strip())
    verdict(1, "param-count detector 5/7/9", got == want and worst < 1.0, f"{got}, slowest {worst:.2f}s")


def test_2_shape_trace(verdict):
    derived = [(236, 183, 5, 1), (234, 181, 3, 32), (117, 90, 3, 32), (115, 88, 2, 32), (57, 44, 2, 32),
               (55, 42, 1, 16), (27, 21, 1, 16), (25, 19, 1, 8), (12, 9, 1, 8), (864,), (32,), (16,), (1,)]
    shapes = models.build_detector(5).shapes
    verdict(2, "detector w=5 shape trace ends in 864", shapes == derived, f"flatten {shapes[9]}")


GRAD_CASES = {
    "conv2d": ([L.conv2d(3, (3, 3), activation="relu")], (7, 6, 2)),
    "conv3d": ([L.conv3d(3, (3, 3, 2), activation="relu")], (6, 5, 4, 2)),
    "transpose_conv2d": ([L.transpose_conv2d(2, (3, 3), activation="relu")], (4, 3, 2)),
    "maxpool2d": ([L.conv2d(2, (1, 1)), L.maxpool2d((2, 2), "ceil")], (5, 7, 1)),
    "maxpool3d": ([L.conv3d(2, (1, 1, 1)), L.maxpool3d((2, 2, 1))], (4, 5, 3, 1)),
    "dense+flatten": ([L.flatten(), L.dense(4, "relu"), L.dense(1, "sigmoid")], (3, 2)),
}


def test_3_gradient_checks(verdict):
    t = time.perf_counter()
    worst, skipped, probes = 0.0, 0, 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        # BCE only where the head is a sigmoid; elsewhere outputs leave (0, 1) and MSE applies
        nets = [(Model(layers, shape, seed=seed, bits=64),
                 "bce" if layers[-1].activation == "sigmoid" else "mse") for layers, shape in GRAD_CASES.values()]
        nets.append((Model(models.toy_detector_layers(5), (20, 20, 5, 1), seed=seed, bits=64), "bce"))
        side = models.min_detector_input(5)[0]
        nets.append((models.build_detector(5, seed=seed, bits=64, input_hw=(side, side)), "bce"))
        for m, loss in nets:
            jitter_biases(m, seed)
            x = rng.uniform(0, 1, (1, *m.input_shape))
            target = (rng.uniform(size=(1, *m.output_shape)) > 0.5).astype(float)
            rep = gradcheck(m, x, target, loss, seed=seed, tolerance=1e-4, h=1e-5)
            worst = max(worst, rep.max_error)
            skipped += rep.skipped
            probes += rep.samples
    elapsed = time.perf_counter() - t
    verdict(3, "gradient checks, every layer type + toy (20,20,5,1) and full detector, 10 seeds",
            worst <= 1e-4 and elapsed < 120,
            f"max rel err {worst:.2e}, {probes} probes, {skipped} kink crossings resampled, {elapsed:.0f}s")


def test_4_windowing_laws(verdict):
    rng = np.random.default_rng(0)
    identity = True
    for _ in range(200):
        h, w = (int(v) for v in rng.integers(150, 500, size=2))
        mask = (rng.uniform(size=(h, w)) < 0.5).astype(np.uint8)
        wins, anchors = spatial_windows(mask)
        identity &= bool(np.array_equal(reconstruct(wins, anchors, h, w), mask))
    grid = SpatialGrid(422, 636)
    enum = len(anchors_enumerated(422, 150, 75)) * len(anchors_enumerated(636, 150, 75))
    count_ok = len(grid.anchors) == 40 == enum
    frames = [int(f) for f in rng.integers(9, 80, size=165)]
    c = {w: sum(temporal_window_count(f, w) for f in frames) for w in (5, 7, 9)}
    temporal_ok = (c[5] == sum(f - 4 for f in frames) and c[5] - c[7] == 330 and c[7] - c[9] == 330
                   and 2841 - 2511 == 2 * 165)
    verdict(4, "windowing laws (identity x200, 40 windows, temporal delta law)",
            identity and count_ok and temporal_ok,
            f"identity={identity} windows={len(grid.anchors)} delta={c[5] - c[7]}")


def test_5_convolution_equivalence(verdict):
    rng = np.random.default_rng(5)
    t = time.perf_counter()
    worst = 0.0
    for i in range(50):
        if i % 2:
            x = rng.standard_normal((1, 7, 6, 4, 2)).astype(np.float32)
            w = rng.standard_normal((3, 2, 2, 2, 3)).astype(np.float32)
        else:
            x = rng.standard_normal((2, 9, 8, 3)).astype(np.float32)
            w = rng.standard_normal((3, 3, 3, 4)).astype(np.float32)
        b = rng.standard_normal(w.shape[-1]).astype(np.float32)
        pad = ("none", "preserve")[(i // 2) % 2]
        fast = F.conv_forward(x, w, b, pad)[0]
        slow = conv_naive(x.astype(np.float64), w.astype(np.float64), b.astype(np.float64), pad)
        worst = max(worst, float(np.max(np.abs(fast - slow))))
    elapsed = time.perf_counter() - t
    verdict(5, "im2col conv vs naive loops, 50 cases", worst <= 1e-5 and elapsed < 60,
            f"max abs diff {worst:.2e}, {elapsed:.1f}s")


def test_6_metrics(verdict):
    m = metrics_from_counts(18, 0, 1)
    mse_ok = (F.mse(np.ones((3, 3)), np.ones((3, 3)))[0] == 0
              and F.mse(np.ones((2, 2)), np.zeros((2, 2)))[0] == 1
              and F.mse(np.array([[1.0, 0], [0, 1]]), np.array([[1.0, 1], [0, 0]]))[0] == 0.5)
    acc_ok = seg_accuracy(np.eye(2), np.eye(2)) == 1 and seg_accuracy(np.eye(2), 1 - np.eye(2)) == 0
    ok = (mse_ok and acc_ok and m.precision == 1.0 and abs(m.recall - 0.947) < 5e-3
          and abs(m.f1 - 0.972) <= 5e-3)
    verdict(6, "metric suite (MSE, 1-MSE, P/R/F1)", ok,
            f"TP18/FP0/FN1 -> P={m.precision:.3f} R={m.recall:.3f} F1={m.f1:.4f}")


SEG_EPOCHS = 10
DET_EPOCHS = 10
DET_RESIZE = (64, 48)


@pytest.mark.slow
def test_7_desk_scale_end_to_end(verdict, tmp_path, capsys):
    t = time.perf_counter()
    data = tmp_path / "data"
    build_dataset(data, n_videos=40, seed=1)
    assert cli.main(["train-seg", "--data", str(data), "--out", str(tmp_path / "seg.mdlw"),
                     "--epochs", str(SEG_EPOCHS), "--batch", "32", "--micro-batch", "16",
                     "--frames-per-video", "2", "--seed", "0"]) == 0
    seg = load_weights(tmp_path / "seg.mdlw")
    seg_acc = evaluate_segmenter(seg, Manifest.load(data), "test")
    t_seg = time.perf_counter() - t
    assert cli.main(["train-det", "--data", str(data), "--out", str(tmp_path / "det"),
                     "--seg", str(tmp_path / "seg.mdlw"), "--w", "5", "--epochs", str(DET_EPOCHS),
                     "--batch", "8", "--resize", *map(str, DET_RESIZE), "--seed", "0"]) == 0
    capsys.readouterr()
    report = json.loads((tmp_path / "det" / "report.json").read_text())
    folds = report["windows"]["5"]["folds"]
    accs = [f["metrics"]["accuracy"] for f in folds]
    mean_acc = float(np.mean(accs))
    elapsed = time.perf_counter() - t
    verdict(7, "desk-scale end to end on 40 phantoms",
            seg_acc >= 0.95 and len(folds) == 5 and mean_acc >= 0.85 and elapsed <= 1800,
            f"held-out seg acc {seg_acc:.4f} ({SEG_EPOCHS} epochs, {t_seg:.0f}s); "
            f"det fold accs {[round(a, 3) for a in accs]} mean {mean_acc:.3f} "
            f"({DET_EPOCHS} epochs/fold); total {elapsed:.0f}s")


def test_8_determinism(verdict, small_dataset, tmp_path, capsys):
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / f"{run}.mdlw"
        assert cli.main(["train-seg", "--data", str(small_dataset.root), "--out", str(out), "--epochs", "2",
                         "--batch", "8", "--micro-batch", "8", "--frames-per-video", "1",
                         "--windows-per-epoch", "16", "--seed", "11", "--threads", "1"]) == 0
        blobs.append(out.read_bytes())
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(8, 48, 48, 5, 1)).astype(np.float32)
    y = np.arange(8) % 2
    det = [to_bytes(train_detector(x, y, 5, epochs=2, batch=4, seed=4, input_hw=(48, 48))[0]) for _ in "ab"]
    capsys.readouterr()
    verdict(8, "byte-identical weights across two seeded 2-epoch runs",
            blobs[0] == blobs[1] and det[0] == det[1], f"segmenter {len(blobs[0])} B, detector {len(det[0])} B")


def test_9_format_round_trips(verdict):
    rng = np.random.default_rng(9)
    echo_ok = mdlw_ok = True
    for i in range(20):
        shape = tuple(int(v) for v in rng.integers(1, 40, size=3))
        raw = echo_bytes(rng.uniform(size=shape).astype(np.float32))
        echo_ok &= echo_bytes(parse_echo(raw)) == raw
        chain = [L.conv3d(int(rng.integers(1, 5)), (3, 3, 2), activation="relu"), L.maxpool3d((2, 2, 1)),
                 L.flatten(), L.dense(int(rng.integers(1, 6)), "sigmoid")]
        m = Model(chain, (8, 8, 3, 1), seed=i, bits=int(rng.choice([32, 64])))
        blob = to_bytes(m, {"i": i})
        back, extra = from_bytes(blob)
        mdlw_ok &= to_bytes(back, extra) == blob
    verdict(9, "ECHO and MDLW write-read-write byte identity, 20 instances each", echo_ok and mdlw_ok,
            f"echo={echo_ok} mdlw={mdlw_ok}")
