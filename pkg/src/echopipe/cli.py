"""``echopipe`` command line.

Every subcommand shares ``--seed``, ``--threads`` and ``--bits``. Failures print
a single ``echopipe: error: <kind>: <message>`` line on stderr and exit with
2 (usage), 3 (data) or 4 (numeric).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import models
from .datagen import Manifest, build_dataset, read_echo, write_echo
from .errors import DataError, EchoPipeError, NumericError, UsageError
from .fileio import atomic_write_bytes, atomic_write_text
from .nn import gradcheck as run_gradcheck
from .nn import jitter_biases
from .nn import layers as L
from .nn.model import Model
from .nn.serialize import load_weights, save_weights
from .pipeline import PipelineConfig, detect_video, run_pipeline, segment_video

log = logging.getLogger("echopipe")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message.replace("\n", " "))


def _common(p):
    g = p.add_argument_group("common")
    g.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    g.add_argument("--threads", type=int, default=1,
                   help="worker threads for inference; training stays deterministic only at 1 "
                        "(default: %(default)s)")
    g.add_argument("--bits", type=int, choices=(32, 64), default=32,
                   help="floating-point width (default: %(default)s)")


def _pipeline_flags(p, w_default=5):
    p.add_argument("--w", type=int, choices=(5, 7, 9), default=w_default,
                   help="temporal window in frames (default: %(default)s)")
    p.add_argument("--win", type=int, default=150, help="spatial window (default: %(default)s)")
    p.add_argument("--stride", type=int, default=75, help="spatial stride (default: %(default)s)")
    p.add_argument("--threshold", type=float, default=0.5,
                   help="MI probability threshold (default: %(default)s)")
    p.add_argument("--tie-class", choices=("MI", "N"), default="MI",
                   help="verdict on a tied vote (default: %(default)s)")
    p.add_argument("--batch-size", type=int, default=32,
                   help="inference batch size (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="echopipe", description="LV segmentation and MI detection on echo videos.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("generate-data", help="write a synthetic phantom dataset", formatter_class=fmt)
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--videos", type=int, default=40, help="number of videos")
    p.add_argument("--class-ratio", type=float, default=0.5, help="fraction of MI videos")
    p.add_argument("--frames", type=int, default=25, help="frames per video")
    p.add_argument("--frame-min", type=int, default=256, help="smallest frame side")
    p.add_argument("--frame-max", type=int, default=320, help="largest frame side")
    p.add_argument("--folds", type=int, default=5, help="cross-validation folds")
    p.add_argument("--noise", type=float, default=0.04, help="speckle standard deviation")
    p.add_argument("--reduction", type=float, default=0.1,
                   help="wall-motion factor inside the MI sector")
    _common(p)

    p = sub.add_parser("train-seg", help="train the 2D segmenter", formatter_class=fmt)
    p.add_argument("--data", required=True, type=Path, help="dataset directory or manifest")
    p.add_argument("--out", required=True, type=Path, help="output MDLW file")
    p.add_argument("--epochs", type=int, default=100, help="training epochs")
    p.add_argument("--batch", type=int, default=256, help="windows per optimizer step")
    p.add_argument("--micro-batch", type=int, default=16, help="windows per forward pass")
    p.add_argument("--lr", type=float, default=1e-3, help="RMSProp learning rate")
    p.add_argument("--frames-per-video", type=int, default=None,
                   help="evenly spaced frames sampled per video (all when omitted)")
    p.add_argument("--windows-per-epoch", type=int, default=None,
                   help="cap on windows visited per epoch")
    _common(p)

    p = sub.add_parser("train-det", help="5-fold cross-validated detector training",
                       formatter_class=fmt)
    p.add_argument("--data", required=True, type=Path, help="dataset directory or manifest")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--seg", type=Path, default=None,
                   help="segmenter weights for cropping (ground-truth boxes when omitted)")
    p.add_argument("--epochs", type=int, default=100, help="epochs per fold")
    p.add_argument("--batch", type=int, default=8, help="clips per optimizer step")
    p.add_argument("--lr", type=float, default=1e-3, help="RMSProp learning rate")
    p.add_argument("--resize", type=int, nargs=2, default=list(models.DETECTOR_INPUT_HW),
                   metavar=("H", "W"), help="detector frame size")
    p.add_argument("--folds", type=int, nargs="*", default=None, help="subset of folds to run")
    _pipeline_flags(p)
    _common(p)

    p = sub.add_parser("segment", help="crop one video to its LV bounding box", formatter_class=fmt)
    p.add_argument("--in", dest="inp", required=True, type=Path, help="input ECHO video")
    p.add_argument("--seg", required=True, type=Path, help="segmenter MDLW")
    p.add_argument("--out", type=Path, default=None, help="cropped ECHO output")
    p.add_argument("--overlay", type=Path, default=None,
                   help="directory for per-frame PGM images with the box drawn in")
    _pipeline_flags(p)
    _common(p)

    p = sub.add_parser("detect", help="classify an already cropped video", formatter_class=fmt)
    p.add_argument("--in", dest="inp", required=True, type=Path, help="cropped ECHO video")
    p.add_argument("--det", required=True, type=Path, help="detector MDLW")
    p.add_argument("--out", type=Path, default=None, help="write the JSON verdict here too")
    _pipeline_flags(p)
    _common(p)

    p = sub.add_parser("pipeline", help="segment then detect one raw video", formatter_class=fmt)
    p.add_argument("--in", dest="inp", required=True, type=Path, help="raw ECHO video")
    p.add_argument("--seg", required=True, type=Path, help="segmenter MDLW")
    p.add_argument("--det", required=True, type=Path, help="detector MDLW")
    p.add_argument("--out", type=Path, default=None, help="write the JSON verdict here too")
    _pipeline_flags(p)
    _common(p)

    p = sub.add_parser("eval", help="assemble fold results into report.json / report.txt",
                       formatter_class=fmt)
    p.add_argument("--runs", required=True, type=Path, nargs="+",
                   help="train-det output directories or folds_w*.json files")
    p.add_argument("--out", required=True, type=Path, help="report directory")
    p.add_argument("--seg", type=Path, default=None, help="also score this segmenter")
    p.add_argument("--data", type=Path, default=None, help="dataset for --seg scoring")
    p.add_argument("--split", default="test", choices=("train", "val", "test"),
                   help="split for --seg scoring")
    _common(p)

    p = sub.add_parser("param-count", help="print trainable parameter counts", formatter_class=fmt)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--detector", type=int, choices=(5, 7, 9), help="temporal window")
    g.add_argument("--segmenter", action="store_true", help="segmenter family")
    p.add_argument("--encoder", type=int, nargs=3, default=list(models.SEGMENTER_ENCODER),
                   help="segmenter encoder filters")
    p.add_argument("--decoder", type=int, nargs=3, default=list(models.SEGMENTER_DECODER),
                   help="segmenter decoder filters")
    p.add_argument("--resize", type=int, nargs=2, default=list(models.DETECTOR_INPUT_HW),
                   metavar=("H", "W"), help="detector frame size")
    p.add_argument("--trace", action="store_true", help="also print the per-layer shape trace")
    _common(p)

    p = sub.add_parser("gradcheck", help="finite-difference check of backpropagation",
                       formatter_class=fmt)
    p.add_argument("--model", choices=("detector", "toy-detector", "segmenter-toy"),
                   default="detector", help="network to check")
    p.add_argument("--w", type=int, choices=(5, 7, 9), default=5, help="temporal window")
    p.add_argument("--size", type=int, default=None,
                   help="square input side (smallest valid size when omitted)")
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds to check")
    p.add_argument("--tolerance", type=float, default=1e-4, help="max relative error")
    p.add_argument("--samples", type=int, default=20, help="probes per parameter block")
    _common(p)

    p = sub.add_parser("arch-search", help="segmenter configurations with a given parameter count",
                       formatter_class=fmt)
    p.add_argument("--target", type=int, default=192617, help="trainable parameter count to match")
    p.add_argument("--limit", type=int, default=20, help="configurations to print (0 = all)")
    _common(p)
    return parser


# helpers ---------------------------------------------------------------------

def _pipeline_config(args, resize=None) -> PipelineConfig:
    kw = dict(win=args.win, stride=args.stride, w=args.w, threshold=args.threshold,
              tie_class=args.tie_class, batch_size=args.batch_size, threads=args.threads)
    if resize is not None:
        kw["resize"] = tuple(resize)
    return PipelineConfig(**kw)


def _load_model(path, bits) -> Model:
    model = load_weights(path)
    return model if model.bits == bits else model.astype(bits)


def _emit(obj, out=None):
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if out is not None:
        atomic_write_text(out, text)
    sys.stdout.write(text)


def pgm_bytes(frame, box=None) -> bytes:
    """8-bit binary PGM of a [0, 1] frame, with ``box`` outlined in white."""
    img = (np.clip(np.asarray(frame, dtype=np.float64), 0, 1) * 255 + 0.5).astype(np.uint8)
    if box is not None:
        img = img.copy()
        t, lft, b, r = box.top, box.left, box.bottom - 1, box.right - 1
        img[t, lft:r + 1] = img[b, lft:r + 1] = 255
        img[t:b + 1, lft] = img[t:b + 1, r] = 255
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


# subcommands -------------------------------------------------------------------

def cmd_generate_data(args):
    m = build_dataset(args.out, n_videos=args.videos, class_ratio=args.class_ratio, seed=args.seed,
                      frame_range=(args.frame_min, args.frame_max), frames=args.frames,
                      folds=args.folds, noise=args.noise, reduction=args.reduction)
    counts = {s: len(m.select(s)) for s in ("train", "val", "test")}
    _emit({"manifest": str(Path(args.out) / "manifest.json"), "videos": len(m.videos), **counts})


def cmd_train_seg(args):
    from .eval import train_segmenter

    manifest = Manifest.load(args.data)
    model = models.build_segmenter(seed=args.seed, bits=args.bits)
    res = train_segmenter(manifest, args.epochs, args.batch, args.lr, args.seed,
                          args.frames_per_video, args.micro_batch, args.windows_per_epoch, model)
    extra = {"train_loss": res.train_loss, "val_accuracy": res.val_accuracy,
             "best_epoch": res.best_epoch, "initial_loss": res.initial_loss}
    save_weights(args.out, res.model, extra)
    _emit({"weights": str(args.out), **extra})


def cmd_train_det(args):
    from .eval import emit_report, train_detector_cv

    manifest = Manifest.load(args.data)
    config = _pipeline_config(args, args.resize)
    seg = _load_model(args.seg, args.bits) if args.seg else None
    out = Path(args.out)
    best = {}

    def keep(result, model):
        save_weights(out / f"det_w{args.w}_fold{result.fold}.mdlw", model,
                     {"fold": result.fold, "accuracy": result.metrics.accuracy})
        if not best or result.metrics.accuracy > best["acc"]:
            best.update(acc=result.metrics.accuracy, model=model, fold=result.fold)

    folds = train_detector_cv(manifest, args.w, args.epochs, args.batch, args.lr, args.seed,
                              seg, config, folds=args.folds, callback=keep)
    save_weights(out / f"det_w{args.w}.mdlw", best["model"], {"fold": best["fold"]})
    atomic_write_text(out / f"folds_w{args.w}.json",
                      json.dumps([f.to_dict() for f in folds], indent=1, sort_keys=True) + "\n")
    jpath, tpath = emit_report({args.w: folds}, out)
    _emit({"report": str(jpath), "table": str(tpath), "best_fold": best["fold"],
           "mean_accuracy": float(np.mean([f.metrics.accuracy for f in folds]))})


def cmd_segment(args):
    video = read_echo(args.inp)
    seg = _load_model(args.seg, args.bits)
    res = segment_video(video, seg, _pipeline_config(args))
    if args.out:
        write_echo(args.out, res.video)
    if args.overlay:
        for i, frame in enumerate(video):
            atomic_write_bytes(Path(args.overlay) / f"frame_{i:04d}.pgm", pgm_bytes(frame, res.bbox))
    _emit({"bbox": dict(zip(("top", "left", "height", "width"), res.bbox.as_list())),
           "bbox_fallback": res.fallback, "cropped_shape": list(res.video.shape),
           "timings": res.timings})


def cmd_detect(args):
    det = _load_model(args.det, args.bits)
    verdict = detect_video(read_echo(args.inp), det, _pipeline_config(args, det.input_shape[:2]))
    _emit(verdict.to_dict(), args.out)


def cmd_pipeline(args):
    video = read_echo(args.inp)
    seg = _load_model(args.seg, args.bits)
    det = _load_model(args.det, args.bits)
    verdict = run_pipeline(video, seg, det, _pipeline_config(args, det.input_shape[:2]))
    _emit(verdict.to_dict(), args.out)


def cmd_eval(args):
    from .eval import FoldResult, emit_report, evaluate_segmenter

    results = {}
    for run in args.runs:
        files = sorted(Path(run).glob("folds_w*.json")) if Path(run).is_dir() else [Path(run)]
        if not files:
            raise DataError(f"no folds_w*.json under {run}")
        for f in files:
            if not f.exists():
                raise DataError(f"missing fold results: {f}")
            w = f.stem.rsplit("_w", 1)[-1]
            try:
                results[w] = [FoldResult.from_dict(d) for d in json.loads(f.read_text("utf-8"))]
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"malformed fold results {f}: {exc}") from exc
    jpath, tpath = emit_report(results, args.out)
    out = {"report": str(jpath), "table": str(tpath)}
    if args.seg:
        if args.data is None:
            raise UsageError("--seg needs --data")
        out["seg_accuracy"] = evaluate_segmenter(_load_model(args.seg, args.bits),
                                                 Manifest.load(args.data), args.split)
    sys.stdout.write(tpath.read_text("utf-8"))
    _emit(out)


def cmd_param_count(args):
    if args.detector:
        chain, shape = models.detector_layers(args.detector), (*args.resize, args.detector, 1)
    else:
        chain = models.segmenter_layers(tuple(args.encoder), tuple(args.decoder))
        shape = models.SEGMENTER_INPUT
    print(L.count_parameters(chain, shape))
    if args.trace:
        for spec, s in zip(chain, L.shape_trace(chain, shape)[1:]):
            print(f"{spec.kind:<16}{s}")


def _gradcheck_model(args, seed):
    if args.model == "detector":
        side = args.size or models.min_detector_input(args.w)[0]
        m = models.build_detector(args.w, seed=seed, bits=64, input_hw=(side, side))
    elif args.model == "toy-detector":
        side = args.size or 20
        m = Model(models.toy_detector_layers(args.w), (side, side, args.w, 1), seed=seed, bits=64)
    else:
        side = args.size or 12
        m = Model(models.segmenter_layers((2, 3, 4), (3, 2, 2)), (side, side, 1), seed=seed, bits=64)
    return m


def cmd_gradcheck(args):
    worst = 0.0
    for s in range(args.seed, args.seed + args.seeds):
        m = jitter_biases(_gradcheck_model(args, s), s)
        rng = np.random.default_rng(s)
        x = rng.uniform(0, 1, (1, *m.input_shape))
        target = (rng.uniform(size=(1, *m.output_shape)) > 0.5).astype(np.float64)
        loss = "bce" if args.model != "segmenter-toy" else "mse"
        rep = run_gradcheck(m, x, target, loss, seed=s, tolerance=args.tolerance,
                            samples_per_block=args.samples)
        print(f"seed {s}: {rep}")
        worst = max(worst, rep.max_error)
    if worst > args.tolerance:
        raise NumericError(f"gradient check failed: max relative error {worst:.3e} > {args.tolerance:g}")


def cmd_arch_search(args):
    found = models.arch_search(args.target)
    print(f"{len(found)} configurations with {args.target} parameters")
    for c in found[: args.limit or None]:
        print(f"encoder={list(c.encoder)} decoder={list(c.decoder)} "
              f"enc_kernel={c.enc_kernel} dec_kernel={c.dec_kernel}")


COMMANDS = {
    "generate-data": cmd_generate_data, "train-seg": cmd_train_seg, "train-det": cmd_train_det,
    "segment": cmd_segment, "detect": cmd_detect, "pipeline": cmd_pipeline, "eval": cmd_eval,
    "param-count": cmd_param_count, "gradcheck": cmd_gradcheck, "arch-search": cmd_arch_search,
}


def _configure_logging():
    level = os.environ.get("ECHOPIPE_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise UsageError(f"ECHOPIPE_LOG: unknown level {level!r}")
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _error(kind, exc) -> str:
    return f"echopipe: error: {kind}: {str(exc).splitlines()[0] if str(exc) else type(exc).__name__}"


def main(argv=None) -> int:
    try:
        _configure_logging()
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        resolved = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
        log.info("resolved config %s", json.dumps(resolved, sort_keys=True, default=str))
        COMMANDS[args.command](args)
        return 0
    except SystemExit as exc:                  # --help
        return int(exc.code or 0)
    except EchoPipeError as exc:
        kind = {2: "usage", 3: "data", 4: "numeric"}.get(exc.exit_code, "error")
        print(_error(kind, exc), file=sys.stderr)
        return exc.exit_code if exc.exit_code in (2, 3, 4) else 1
    except (ValueError, TypeError) as exc:
        print(_error("usage", exc), file=sys.stderr)
        return 2
    except (ArithmeticError, FloatingPointError) as exc:
        print(_error("numeric", exc), file=sys.stderr)
        return 4
    except OSError as exc:
        print(_error("data", exc), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
