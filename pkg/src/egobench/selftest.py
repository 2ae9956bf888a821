"""Numerical self-tests for the detection-head kernels.

Two families of checks, both runnable from the CLI (`kernels selftest`)
and reused by the test suite:

* fixture checks: closed-form values plus naive, independently coded
  oracles (nested-loop convolution, dense matrix MLP, brute-force bilinear
  ROI pooling);
* gradient checks: every hand-written VJP is compared against central
  finite differences along random directions, with rejection sampling to
  keep probes away from kinks (ReLU zeros, integer coordinates, L1 ties,
  IoU label thresholds, min/max corner ties).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from egobench import kernels
from egobench.geometry import Box
from egobench.kernels import (
    CenterPrediction,
    ConvParams,
    LossConfig,
    MLPParams,
    bilinear_sample,
    bilinear_sample_vjp,
    cls_confidence,
    cls_confidence_vjp,
    detection_loss,
    detection_loss_vjp,
    modulate,
    modulate_vjp,
    refine_box,
    refine_box_vjp,
    register_target,
    roi_align,
    score_stack,
    score_stack_vjp,
    softmax_center,
    softmax_center_vjp,
)

FD_STEP = 1e-4
GRAD_RTOL = 1e-4
MIN_SIGNAL = 1e-3
MAX_RESAMPLE = 500


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    probes: int = 0
    max_rel_err: float = 0.0


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(1.0, abs(a), abs(n))


# --------------------------------------------------------------------------
# Naive oracles (deliberately slow and simple)
# --------------------------------------------------------------------------


def conv_stack_oracle(x: np.ndarray, layers) -> np.ndarray:
    """Nested-loop 3x3 convolution stack, padding 1, ReLU between layers."""
    cur = np.array(x, dtype=np.float64)
    for li, layer in enumerate(layers):
        c_out = layer.weight.shape[0]
        c_in, h, w = cur.shape
        nxt = np.zeros((c_out, h, w))
        for o in range(c_out):
            for yy in range(h):
                for xx in range(w):
                    acc = layer.bias[o]
                    for i in range(c_in):
                        for ky in range(3):
                            for kx in range(3):
                                sy = yy + ky - 1
                                sx = xx + kx - 1
                                if 0 <= sy < h and 0 <= sx < w:
                                    acc += layer.weight[o, i, ky, kx] * cur[i, sy, sx]
                    nxt[o, yy, xx] = acc
        if li < len(layers) - 1:
            nxt = np.maximum(nxt, 0.0)
        cur = nxt
    return cur[0]


def mlp_oracle(feat: np.ndarray, mlp: MLPParams) -> np.ndarray:
    """Dense 3-layer forward with explicit loops."""

    def dense(w, b, v):
        out = np.zeros(w.shape[0])
        for i in range(w.shape[0]):
            acc = b[i]
            for j in range(w.shape[1]):
                acc += w[i, j] * v[j]
            out[i] = acc
        return out

    h1 = np.maximum(dense(mlp.w1, mlp.b1, feat), 0.0)
    h2 = np.maximum(dense(mlp.w2, mlp.b2, h1), 0.0)
    return dense(mlp.w3, mlp.b3, h2)


def roi_align_oracle(f: np.ndarray, box: Box, s: int, sampling_ratio: int) -> np.ndarray:
    """Brute-force ROI pooling from individual bilinear samples."""
    c, h, w = f.shape
    bin_h = box.h / s
    bin_w = box.w / s
    out = np.zeros((c, s, s))
    for i in range(s):
        for j in range(s):
            samples = []
            for iy in range(sampling_ratio):
                for jx in range(sampling_ratio):
                    yy = box.y + bin_h * (i + (iy + 0.5) / sampling_ratio)
                    xx = box.x + bin_w * (j + (jx + 0.5) / sampling_ratio)
                    yy = min(max(yy, 0.0), float(h - 1))
                    xx = min(max(xx, 0.0), float(w - 1))
                    samples.append(bilinear_sample(f, yy, xx))
            out[:, i, j] = sum(samples) / len(samples)
    return out


# --------------------------------------------------------------------------
# Fixture checks
# --------------------------------------------------------------------------


def _approx(a, b, tol) -> bool:
    return np.max(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))) <= tol


def check_modulate_fixtures() -> CheckResult:
    rng = np.random.default_rng(11)
    ok = True
    notes = []

    f = rng.normal(size=(3, 4, 4))
    if not _approx(modulate(f, np.zeros(3)), np.zeros((3, 4, 4)), 0.0):
        ok, _ = False, notes.append("zero t_loc")

    v = rng.normal(size=(1, 2, 2))
    if not _approx(modulate(v, np.ones(1)), v * v, 1e-12):
        ok, _ = False, notes.append("C=1 square")

    f2 = np.zeros((2, 1, 1))
    f2[0, 0, 0] = 3.0
    f2[1, 0, 0] = 4.0
    got = modulate(f2, np.array([1.0, 2.0]))[:, 0, 0]
    if not _approx(got, [33.0, 44.0], 1e-12):
        ok, _ = False, notes.append(f"dot case got {got}")
    return CheckResult("modulate fixtures", ok, "; ".join(notes))


def check_score_stack_fixtures() -> CheckResult:
    rng = np.random.default_rng(12)
    ok = True
    notes = []

    zero_layers = [
        ConvParams(np.zeros((4, 6, 3, 3)), np.zeros(4)),
        ConvParams(np.zeros((1, 4, 3, 3)), np.zeros(1)),
    ]
    f = rng.normal(size=(6, 5, 5))
    if not _approx(score_stack(f, zero_layers), np.zeros((5, 5)), 0.0):
        ok, _ = False, notes.append("zero weights")

    # Single 1->1 layer whose kernel sums to 1 keeps a constant map constant
    # away from borders; with the center-only kernel it is exactly identity.
    ident = np.zeros((1, 1, 3, 3))
    ident[0, 0, 1, 1] = 1.0
    const = np.full((1, 4, 4), 2.5)
    if not _approx(score_stack(const, [ConvParams(ident, np.zeros(1))]), np.full((4, 4), 2.5), 0.0):
        ok, _ = False, notes.append("identity kernel")

    layers = kernels.default_score_layers(rng, schedule=(5, 4, 3, 1), scale=0.3)
    f = rng.normal(size=(5, 4, 6))
    if not _approx(score_stack(f, layers), conv_stack_oracle(f, layers), 1e-6):
        ok, _ = False, notes.append("conv oracle")

    big = kernels.default_score_layers(rng, schedule=kernels.DEFAULT_SCORE_SCHEDULE, scale=0.01)
    fbig = rng.normal(size=(256, 3, 3))
    if not _approx(score_stack(fbig, big), conv_stack_oracle(fbig, big), 1e-6):
        ok, _ = False, notes.append("default schedule oracle")
    return CheckResult("score_stack fixtures", ok, "; ".join(notes))


def check_softmax_center_fixtures() -> CheckResult:
    ok = True
    notes = []

    c = softmax_center(np.zeros((5, 5)))
    if not (_approx(c.c_y, 2.0, 1e-12) and _approx(c.c_x, 2.0, 1e-12)):
        ok, _ = False, notes.append("uniform 5x5")

    m = np.zeros((4, 6))
    m[1, 3] = 1000.0
    c = softmax_center(m)
    if not (_approx(c.c_y, 1.0, 1e-6) and _approx(c.c_x, 3.0, 1e-6)):
        ok, _ = False, notes.append("spike")

    m = np.array([[0.0, math.log(3.0)], [0.0, 0.0]])
    c = softmax_center(m)
    if not _approx(c.p, [1 / 6, 1 / 2, 1 / 6, 1 / 6], 1e-12):
        ok, _ = False, notes.append(f"2x2 p got {c.p}")
    if not (_approx(c.c_y, 1 / 3, 1e-12) and _approx(c.c_x, 2 / 3, 1e-12)):
        ok, _ = False, notes.append("2x2 center")

    rng = np.random.default_rng(13)
    m = rng.normal(size=(3, 7))
    a = softmax_center(m)
    b = softmax_center(m + 17.25)
    if not (_approx(a.p, b.p, 1e-9) and _approx(a.c_y, b.c_y, 1e-9) and _approx(a.c_x, b.c_x, 1e-9)):
        ok, _ = False, notes.append("shift invariance")
    if abs(float(np.sum(a.p)) - 1.0) > 1e-9 or np.min(a.p) < 0:
        ok, _ = False, notes.append("p not a distribution")
    return CheckResult("softmax_center fixtures", ok, "; ".join(notes))


def check_bilinear_fixtures() -> CheckResult:
    rng = np.random.default_rng(14)
    ok = True
    notes = []

    f = rng.normal(size=(3, 4, 5))
    if not _approx(bilinear_sample(f, 2.0, 3.0), f[:, 2, 3], 0.0):
        ok, _ = False, notes.append("integer coords")

    g = np.full((2, 2, 2), 7.5)
    if not _approx(bilinear_sample(g, 0.5, 0.5), [7.5, 7.5], 1e-12):
        ok, _ = False, notes.append("equal-cell midpoint")

    m = np.array([[[0.0, 10.0]]])
    if not _approx(bilinear_sample(m, 0.0, 0.25), [2.5], 1e-12):
        ok, _ = False, notes.append("1x2 linear")
    return CheckResult("bilinear_sample fixtures", ok, "; ".join(notes))


def check_refine_box_fixtures() -> CheckResult:
    rng = np.random.default_rng(15)
    ok = True
    notes = []
    c = 6

    def center_at(y, x, shape):
        return CenterPrediction(p=np.zeros(shape[0] * shape[1]), c_y=y, c_x=x, grid_shape=shape)

    f = rng.normal(size=(c, 5, 5))
    zero = MLPParams(
        np.zeros((8, c)), np.zeros(8), np.zeros((8, 8)), np.zeros(8), np.zeros((4, 8)), np.zeros(4)
    )
    p = refine_box(f, center_at(2.3, 1.7, (5, 5)), zero)
    if (p.delta_cy, p.delta_cx, p.s_y, p.s_x) != (0.0, 0.0, 0.0, 0.0):
        ok, _ = False, notes.append("zero weights")

    # Bias-only final layer: hidden path contributes nothing.
    bias_only = MLPParams(
        np.zeros((8, c)),
        np.zeros(8),
        np.zeros((8, 8)),
        np.zeros(8),
        np.zeros((4, 8)),
        np.array([0.5, -0.5, 3.0, -2.0]),
    )
    p = refine_box(f, center_at(1.1, 3.9, (5, 5)), bias_only)
    if (p.delta_cy, p.delta_cx, p.s_y, p.s_x) != (0.5, -0.5, 3.0, 0.0):
        ok, _ = False, notes.append(f"bias-only got {p}")

    mlp = kernels.random_mlp(rng, c, hidden=16, scale=0.4)
    center = center_at(2.6, 0.4, (5, 5))
    p = refine_box(f, center, mlp)
    raw = mlp_oracle(bilinear_sample(f, center.c_y, center.c_x), mlp)
    want = (raw[0], raw[1], max(raw[2], 0.0), max(raw[3], 0.0))
    if not _approx([p.delta_cy, p.delta_cx, p.s_y, p.s_x], want, 1e-6):
        ok, _ = False, notes.append("dense oracle")
    return CheckResult("refine_box fixtures", ok, "; ".join(notes))


def check_roi_align_fixtures() -> CheckResult:
    rng = np.random.default_rng(16)
    ok = True
    notes = []

    const = np.full((2, 6, 6), 3.25)
    out = roi_align(const, Box(0.7, 1.2, 3.1, 2.4), s=5)
    if not _approx(out, np.full((2, 5, 5), 3.25), 1e-12):
        ok, _ = False, notes.append("constant map")

    single = np.array([[[4.5]]])
    out = roi_align(single, Box(-0.5, -0.5, 1.0, 1.0), s=1)
    if not _approx(out, [[[4.5]]], 1e-12):
        ok, _ = False, notes.append("single cell")

    f = np.array([[[0.0, 1.0], [2.0, 3.0]]])
    box = Box(0.0, 0.0, 1.0, 1.0)
    if not _approx(roi_align(f, box, s=2), roi_align_oracle(f, box, 2, 2), 1e-9):
        ok, _ = False, notes.append("2x2 oracle")

    for _ in range(25):
        c = int(rng.integers(1, 4))
        h = int(rng.integers(2, 8))
        w = int(rng.integers(2, 8))
        f = rng.normal(size=(c, h, w))
        box = Box(
            float(rng.uniform(-1.0, w - 1.5)),
            float(rng.uniform(-1.0, h - 1.5)),
            float(rng.uniform(0.5, w)),
            float(rng.uniform(0.5, h)),
        )
        s = int(rng.integers(1, 6))
        ratio = int(rng.integers(1, 4))
        if not _approx(roi_align(f, box, s=s, sampling_ratio=ratio), roi_align_oracle(f, box, s, ratio), 1e-9):
            ok, _ = False, notes.append(f"random fixture {box}")
            break
    return CheckResult("roi_align vs brute force", ok, "; ".join(notes))


def check_cls_confidence_fixtures() -> CheckResult:
    ok = True
    notes = []
    a = np.zeros((2, 3, 3))
    a[0, 0, 0] = 1.0
    b = np.zeros((2, 3, 3))
    b[1, 2, 2] = 5.0
    if not _approx(cls_confidence(a, b), 0.5, 1e-12):
        ok, _ = False, notes.append("orthogonal")

    t = np.zeros((1, 2, 2))
    t[0, 0, 0] = 1.0
    r = np.zeros((1, 2, 2))
    r[0, 0, 0] = math.log(3.0)
    if not _approx(cls_confidence(r, t), 0.75, 1e-12):
        ok, _ = False, notes.append("ln3 dot")

    rng = np.random.default_rng(17)
    if not _approx(cls_confidence(rng.normal(size=(3, 5, 5)), np.zeros((3, 5, 5))), 0.5, 1e-12):
        ok, _ = False, notes.append("zero target")
    return CheckResult("cls_confidence fixtures", ok, "; ".join(notes))


def check_register_target_fixtures() -> CheckResult:
    rng = np.random.default_rng(18)
    ok = True
    notes = []

    loc = rng.normal(size=4)
    cls = rng.normal(size=(4, 3, 3))
    t = register_target([(loc, cls)])
    if not (_approx(t.t_loc, loc, 0.0) and _approx(t.t_cls, cls, 0.0)):
        ok, _ = False, notes.append("single ref")

    t = register_target(
        [(np.array([0.0, 2.0]), np.zeros((2, 1, 1))), (np.array([2.0, 0.0]), np.zeros((2, 1, 1)))]
    )
    if not _approx(t.t_loc, [1.0, 1.0], 0.0):
        ok, _ = False, notes.append("two-ref mean")

    refs = [(rng.normal(size=3), rng.normal(size=(3, 5, 5))) for _ in range(3)]
    t = register_target(refs)
    want_loc = sum(r[0] for r in refs) / 3.0
    want_cls = sum(r[1] for r in refs) / 3.0
    if not (_approx(t.t_loc, want_loc, 1e-9) and _approx(t.t_cls, want_cls, 1e-9)):
        ok, _ = False, notes.append("three-ref oracle")
    return CheckResult("register_target fixtures", ok, "; ".join(notes))


def check_detection_loss_fixtures() -> CheckResult:
    ok = True
    notes = []
    cfg = LossConfig()

    gt = Box(1.0, 2.0, 3.0, 4.0)
    r = detection_loss(gt, 1.0 - 1e-9, gt, cfg, "positive")
    if r.label != 1 or r.localization > 1e-12 or r.total > 1e-6:
        ok, _ = False, notes.append(f"perfect pred: {r}")

    cfg2 = LossConfig(negative_weight=0.5)
    r = detection_loss(None, 0.5, None, cfg2, "negative")
    if not _approx(r.total, 0.5 * math.log(2.0), 1e-12):
        ok, _ = False, notes.append(f"negative ln2: {r.total}")

    # IoU exactly 0.5 sits in the ignore band: no BCE term.
    pred = Box(0.0, 0.0, 1.0, 1.0)
    gt2 = Box(0.5, 0.0, 1.0, 1.0)  # IoU = 0.5/1.5 = 1/3... adjust below
    pred = Box(0.0, 0.0, 2.0, 1.0)
    gt2 = Box(0.0, 0.0, 1.0, 1.0)  # IoU = 1/2
    r = detection_loss(pred, 0.9, gt2, cfg, "positive")
    if r.label is not None or r.bce != 0.0:
        ok, _ = False, notes.append("ignore band")

    if detection_loss(Box(0, 0, 1, 1), 0.8, Box(0, 0, 1, 1), cfg, "index").label != 1:
        ok, _ = False, notes.append("index positive label")
    if detection_loss(Box(0, 0, 1, 1), 0.8, Box(5, 5, 1, 1), cfg, "index").label != 0:
        ok, _ = False, notes.append("index negative label")
    return CheckResult("detection_loss fixtures", ok, "; ".join(notes))


# --------------------------------------------------------------------------
# Gradient checks
# --------------------------------------------------------------------------


def _directional_check(
    value_fn: Callable[[np.ndarray], float],
    theta: np.ndarray,
    analytic_grad: np.ndarray,
    rng: np.random.Generator,
) -> Optional[float]:
    """Relative error of the directional derivative, or None when the
    signal is too small to compare reliably."""
    d = rng.normal(size=theta.shape)
    d /= np.linalg.norm(d)
    analytic = float(np.dot(analytic_grad.reshape(-1), d.reshape(-1)))
    if abs(analytic) < MIN_SIGNAL:
        return None
    plus = value_fn(theta + FD_STEP * d)
    minus = value_fn(theta - FD_STEP * d)
    numeric = (plus - minus) / (2.0 * FD_STEP)
    return _rel_err(analytic, numeric)


def _run_probes(name: str, probes: int, one_probe: Callable[[np.random.Generator], Optional[float]], seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    done = 0
    worst = 0.0
    attempts = 0
    while done < probes:
        attempts += 1
        if attempts > probes * MAX_RESAMPLE:
            return CheckResult(name, False, "probe resampling exhausted", done, worst)
        err = one_probe(rng)
        if err is None:
            continue
        worst = max(worst, err)
        done += 1
    return CheckResult(name, worst <= GRAD_RTOL, f"max rel err {worst:.3e}", done, worst)


def gradcheck_modulate(probes: int = 120, seed: int = 101) -> CheckResult:
    def probe(rng):
        c, h, w = 4, 3, 5
        f = rng.normal(size=(c, h, w))
        t = rng.normal(size=c)
        u = rng.normal(size=(c, h, w))
        gf, gt = modulate_vjp(f, t, u)
        grad = np.concatenate([gf.reshape(-1), gt])
        theta = np.concatenate([f.reshape(-1), t])

        def value(th):
            ff = th[: c * h * w].reshape(c, h, w)
            tt = th[c * h * w :]
            return float(np.sum(u * modulate(ff, tt)))

        return _directional_check(value, theta, grad, rng)

    return _run_probes("grad modulate", probes, probe, seed)


def gradcheck_score_stack(probes: int = 120, seed: int = 102) -> CheckResult:
    def probe(rng):
        schedule = (6, 4, 3, 1)
        h, w = 5, 4
        layers = kernels.default_score_layers(rng, schedule=schedule, scale=0.5)
        f = rng.normal(size=(schedule[0], h, w))
        _, pres = kernels._stack_forward(f, layers)
        for pre in pres[:-1]:
            if np.min(np.abs(pre)) < 1e-2:
                return None
        u = rng.normal(size=(h, w))
        grad = score_stack_vjp(f, layers, u)

        def value(th):
            return float(np.sum(u * score_stack(th.reshape(f.shape), layers)))

        return _directional_check(value, f.reshape(-1), grad.reshape(-1), rng)

    return _run_probes("grad score_stack", probes, probe, seed)


def gradcheck_softmax_center(probes: int = 120, seed: int = 103) -> CheckResult:
    def probe(rng):
        h, w = 4, 5
        s = rng.normal(size=(h, w)) * 2.0
        u_p = rng.normal(size=h * w)
        u_cy = float(rng.normal())
        u_cx = float(rng.normal())
        grad = softmax_center_vjp(s, grad_p=u_p, grad_cy=u_cy, grad_cx=u_cx)

        def value(th):
            pred = softmax_center(th.reshape(h, w))
            return float(np.dot(u_p, pred.p)) + u_cy * pred.c_y + u_cx * pred.c_x

        return _directional_check(value, s.reshape(-1), grad.reshape(-1), rng)

    return _run_probes("grad softmax_center", probes, probe, seed)


def _off_integer(v: float) -> bool:
    return abs(v - round(v)) > 0.05


def gradcheck_bilinear(probes: int = 120, seed: int = 104) -> CheckResult:
    def probe(rng):
        c, h, w = 3, 5, 6
        y = float(rng.uniform(0.1, h - 1.1))
        x = float(rng.uniform(0.1, w - 1.1))
        if not (_off_integer(y) and _off_integer(x)):
            return None
        f = rng.normal(size=(c, h, w))
        u = rng.normal(size=c)
        gf, gy, gx = bilinear_sample_vjp(f, y, x, u)
        grad = np.concatenate([gf.reshape(-1), [gy, gx]])
        theta = np.concatenate([f.reshape(-1), [y, x]])

        def value(th):
            ff = th[: c * h * w].reshape(c, h, w)
            return float(np.dot(u, bilinear_sample(ff, float(th[-2]), float(th[-1]))))

        return _directional_check(value, theta, grad, rng)

    return _run_probes("grad bilinear_sample", probes, probe, seed)


def gradcheck_refine_box(probes: int = 120, seed: int = 105) -> CheckResult:
    def probe(rng):
        c, h, w = 5, 5, 5
        f = rng.normal(size=(c, h, w))
        cy = float(rng.uniform(0.1, h - 1.1))
        cx = float(rng.uniform(0.1, w - 1.1))
        if not (_off_integer(cy) and _off_integer(cx)):
            return None
        mlp = kernels.random_mlp(rng, c, hidden=8, scale=0.6)
        center = CenterPrediction(p=np.zeros(h * w), c_y=cy, c_x=cx, grid_shape=(h, w))

        feat = bilinear_sample(f, cy, cx)
        out, pre1, _, pre2, _ = kernels._mlp_forward(feat, mlp)
        if min(np.min(np.abs(pre1)), np.min(np.abs(pre2))) < 1e-2:
            return None
        if min(abs(out[2]), abs(out[3])) < 1e-2:
            return None

        u = rng.normal(size=4)
        gf, gcy, gcx = refine_box_vjp(f, center, mlp, u)
        grad = np.concatenate([gf.reshape(-1), [gcy, gcx]])
        theta = np.concatenate([f.reshape(-1), [cy, cx]])

        def value(th):
            ff = th[: c * h * w].reshape(c, h, w)
            ctr = CenterPrediction(p=np.zeros(h * w), c_y=float(th[-2]), c_x=float(th[-1]), grid_shape=(h, w))
            p = refine_box(ff, ctr, mlp)
            return float(np.dot(u, [p.delta_cy, p.delta_cx, p.s_y, p.s_x]))

        return _directional_check(value, theta, grad, rng)

    return _run_probes("grad refine_box", probes, probe, seed)


def gradcheck_cls_confidence(probes: int = 120, seed: int = 106) -> CheckResult:
    def probe(rng):
        shape = (3, 5, 5)
        a = rng.normal(size=shape) * 0.3
        b = rng.normal(size=shape) * 0.3
        conf = cls_confidence(a, b)
        if not 0.05 <= conf <= 0.95:
            return None
        u = float(rng.normal())
        ga, gb = cls_confidence_vjp(a, b, u)
        grad = np.concatenate([ga.reshape(-1), gb.reshape(-1)])
        theta = np.concatenate([a.reshape(-1), b.reshape(-1)])
        n = a.size

        def value(th):
            return u * cls_confidence(th[:n].reshape(shape), th[n:].reshape(shape))

        return _directional_check(value, theta, grad, rng)

    return _run_probes("grad cls_confidence", probes, probe, seed)


def _loss_guards_ok(pred: Box, gt: Box, confidence: float, cfg: LossConfig) -> bool:
    if not 0.05 <= confidence <= 0.95:
        return False
    for d in (pred.x - gt.x, pred.y - gt.y, pred.w - gt.w, pred.h - gt.h):
        if abs(d) < 1e-2:
            return False
    x2, gx2 = pred.x + pred.w, gt.x + gt.w
    y2, gy2 = pred.y + pred.h, gt.y + gt.h
    for d in (pred.x - gt.x, x2 - gx2, pred.y - gt.y, y2 - gy2):
        if abs(d) < 1e-2:
            return False
    iw = min(x2, gx2) - max(pred.x, gt.x)
    ih = min(y2, gy2) - max(pred.y, gt.y)
    if abs(iw) < 1e-2 or abs(ih) < 1e-2:
        return False
    v = kernels.iou(pred, gt)
    if abs(v - cfg.iou_pos) < 1e-2 or abs(v - cfg.iou_neg) < 1e-2:
        return False
    return True


def gradcheck_detection_loss(probes: int = 150, seed: int = 107) -> CheckResult:
    cfg = LossConfig(
        positive_weight=1.3,
        index_weight=0.7,
        negative_weight=0.5,
        l1_weight=0.9,
        giou_weight=1.1,
    )

    def probe(rng):
        role = ("positive", "index", "negative")[int(rng.integers(3))]
        if role == "negative":
            conf = float(rng.uniform(0.05, 0.95))
            _, gconf = detection_loss_vjp(None, conf, None, cfg, role)

            def value(th):
                return detection_loss(None, float(th[0]), None, cfg, role).total

            return _directional_check(value, np.array([conf]), np.array([gconf]), rng)

        gt = Box(
            float(rng.uniform(0.0, 4.0)),
            float(rng.uniform(0.0, 4.0)),
            float(rng.uniform(1.0, 4.0)),
            float(rng.uniform(1.0, 4.0)),
        )
        pred = Box(
            gt.x + float(rng.uniform(-2.0, 2.0)),
            gt.y + float(rng.uniform(-2.0, 2.0)),
            max(0.2, gt.w + float(rng.uniform(-1.5, 1.5))),
            max(0.2, gt.h + float(rng.uniform(-1.5, 1.5))),
        )
        conf = float(rng.uniform(0.05, 0.95))
        if not _loss_guards_ok(pred, gt, conf, cfg):
            return None
        gbox, gconf = detection_loss_vjp(pred, conf, gt, cfg, role)
        grad = np.concatenate([gbox, [gconf]])
        theta = np.array([pred.x, pred.y, pred.w, pred.h, conf])

        def value(th):
            return detection_loss(Box(*th[:4]), float(th[4]), gt, cfg, role).total

        return _directional_check(value, theta, grad, rng)

    return _run_probes("grad detection_loss", probes, probe, seed)


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

FIXTURE_CHECKS = (
    check_modulate_fixtures,
    check_score_stack_fixtures,
    check_softmax_center_fixtures,
    check_bilinear_fixtures,
    check_refine_box_fixtures,
    check_roi_align_fixtures,
    check_cls_confidence_fixtures,
    check_register_target_fixtures,
    check_detection_loss_fixtures,
)

GRAD_CHECKS = (
    gradcheck_modulate,
    gradcheck_score_stack,
    gradcheck_softmax_center,
    gradcheck_bilinear,
    gradcheck_refine_box,
    gradcheck_cls_confidence,
    gradcheck_detection_loss,
)


def run_selftest(probes: int = 120) -> list[CheckResult]:
    results = [fn() for fn in FIXTURE_CHECKS]
    for fn in GRAD_CHECKS:
        results.append(fn(probes=probes))
    return results
