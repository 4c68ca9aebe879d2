"""Central finite-difference verification of Model.backward."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError
from . import functional as F


@dataclass
class GradCheckReport:
    errors: dict = field(default_factory=dict)   # block name -> max relative error
    tolerance: float = 1e-4
    samples: int = 0
    skipped: int = 0                              # probes discarded for crossing a kink

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    def __str__(self):
        rows = [f"{'PASS' if self.passed else 'FAIL'} max rel err {self.max_error:.3e} "
                f"(tol {self.tolerance:g}, {self.samples} probes, {self.skipped} kink crossings skipped)"]
        rows += [f"  {k:<14} {v:.3e}" for k, v in self.errors.items()]
        return "\n".join(rows)


def relative_error(a, n, floor=1e-6):
    """|a - n| / max(|a|, |n|, floor); the floor keeps exact zeros from dividing by zero."""
    return abs(a - n) / max(abs(a), abs(n), floor)


def jitter_biases(model, seed=0, scale=0.1):
    """Give every bias a small random value, in place.

    Zero biases put units fed by all-zero patches exactly on the ReLU kink,
    where a central difference sees slope 1/2 and backprop sees 0.
    """
    rng = np.random.default_rng(seed)
    for p in model.params:
        p.bias[...] = rng.uniform(-scale, scale, p.bias.shape)
    return model


def _loss(model, x, target, loss):
    out = model.forward(x, train=True)
    value, dout = (F.mse if loss == "mse" else F.bce)(target, out)
    if not np.isfinite(value):
        raise NumericError("non-finite loss during gradient check")
    return value, dout


def _pattern(model) -> list:
    """Which ReLUs are active and which element wins each pool window, from the last train forward."""
    out = []
    for spec, (cache, act) in zip(model.layers, model._cache):
        if spec.activation == "relu":
            out.append(act > 0)
        if spec.kind.startswith("maxpool"):
            xs, pooled, _, pool = cache
            winner = np.full(pooled.shape, -1, dtype=np.int32)
            for j, offs in enumerate(np.ndindex(*pool)):
                hit = (xs[F._pool_slices(offs, pool, pooled.shape[1:1 + len(pool)])] == pooled) & (winner < 0)
                winner[hit] = j
            out.append(winner)
    return out


def _same(a, b) -> bool:
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def gradcheck(model, x, target, loss="mse", seed=0, tolerance=1e-4, h=1e-5,
              samples_per_block=20, check_input=False, corrupt=0.0):
    """Compare analytic gradients against central differences on sampled entries.

    ``corrupt`` scales the analytic gradients by ``1 + corrupt`` before the
    comparison; it exists so the checker itself can be shown to fail.
    """
    if model.bits != 64:
        raise ValueError("gradcheck needs a 64-bit model (use model.astype(64))")
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    rng = np.random.default_rng(seed)

    _, dout = _loss(model, x, target, loss)
    base = _pattern(model)
    grads, dx = model.backward(dout)

    def numeric(arr, idx):
        """Central difference, or None when either side flips a ReLU or a pool winner."""
        old = arr[idx]
        arr[idx] = old + h
        up = _loss(model, x, target, loss)[0]
        smooth = _same(base, _pattern(model))
        arr[idx] = old - h
        down = _loss(model, x, target, loss)[0]
        smooth = smooth and _same(base, _pattern(model))
        arr[idx] = old
        model._cache = None
        return (up - down) / (2 * h) if smooth else None

    report = GradCheckReport(tolerance=tolerance)
    targets = []
    for p, (dw, db) in zip(model.params, grads):
        targets.append((f"L{p.layer}.weight", p.weight, dw))
        targets.append((f"L{p.layer}.bias", p.bias, db))
    if check_input:
        targets.append(("input", x, dx))
    for name, arr, analytic in targets:
        k = min(samples_per_block, arr.size)
        worst, done = 0.0, 0
        # walk a random permutation until k probes land away from kinks
        for f in rng.permutation(arr.size):
            if done == k:
                break
            idx = np.unravel_index(f, arr.shape)
            n = numeric(arr, idx)
            if n is None:
                report.skipped += 1
                continue
            a = float(analytic[idx]) * (1 + corrupt)
            worst = max(worst, relative_error(a, n))
            done += 1
            report.samples += 1
        report.errors[name] = worst
    return report
