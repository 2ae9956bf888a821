"""Target-conditioned detection-head numerics.

Pure deterministic float64 kernels: feature modulation by a target vector,
a small conv Score stack, soft-argmax center localization, bilinear
sampling, MLP box refinement, ROIAlign, target registration, and the
role-weighted detection losses with IoU-threshold label assignment.

Every differentiable op ships a hand-written VJP (suffix ``_vjp``) used by
the finite-difference self-test. No training loop and no learned weights
live here; parameters are explicit inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from egobench.geometry import Box, giou, iou

DEFAULT_SCORE_SCHEDULE = (256, 128, 64, 32, 1)
DEFAULT_HIDDEN = 256
DEFAULT_PATCH = 5
DEFAULT_SAMPLING_RATIO = 2

ROLES = ("positive", "index", "negative")


def _as_f64(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _check_fmap(f, name: str = "feature map") -> np.ndarray:
    arr = _as_f64(f, name)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ValueError(f"{name} must have shape (C, H, W), got {arr.shape}")
    return arr


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


# --------------------------------------------------------------------------
# Parameter containers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvParams:
    """One 3x3 conv layer, zero padding 1."""

    weight: np.ndarray  # (c_out, c_in, 3, 3)
    bias: np.ndarray  # (c_out,)

    def __post_init__(self):
        w = _as_f64(self.weight, "conv weight")
        b = _as_f64(self.bias, "conv bias")
        if w.ndim != 4 or w.shape[2:] != (3, 3):
            raise ValueError(f"conv weight must be (c_out, c_in, 3, 3), got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"conv bias must be ({w.shape[0]},), got {b.shape}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class MLPParams:
    """3-layer dense net: C -> hidden -> hidden -> 4."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        vals = {k: _as_f64(getattr(self, k), k) for k in ("w1", "b1", "w2", "b2", "w3", "b3")}
        w1, b1, w2, b2, w3, b3 = (vals[k] for k in ("w1", "b1", "w2", "b2", "w3", "b3"))
        if w1.ndim != 2 or w2.ndim != 2 or w3.ndim != 2:
            raise ValueError("mlp weights must be 2-d")
        if b1.shape != (w1.shape[0],) or b2.shape != (w2.shape[0],) or b3.shape != (w3.shape[0],):
            raise ValueError("mlp bias shapes do not match weights")
        if w2.shape[1] != w1.shape[0] or w3.shape[1] != w2.shape[0]:
            raise ValueError("mlp layer dimensions do not chain")
        if w3.shape[0] != 4:
            raise ValueError(f"mlp must end in 4 outputs, got {w3.shape[0]}")
        for k, v in vals.items():
            object.__setattr__(self, k, v)


@dataclass(frozen=True)
class TargetDescriptor:
    """Registered target: a 1x1-resolution vector plus an SxS patch."""

    t_loc: np.ndarray  # (C,)
    t_cls: np.ndarray  # (C, S, S)

    def __post_init__(self):
        t_loc = _as_f64(self.t_loc, "t_loc")
        t_cls = _as_f64(self.t_cls, "t_cls")
        if t_loc.ndim != 1:
            raise ValueError(f"t_loc must be a vector, got shape {t_loc.shape}")
        if t_cls.ndim != 3 or t_cls.shape[0] != t_loc.shape[0] or t_cls.shape[1] != t_cls.shape[2]:
            raise ValueError(f"t_cls must be (C, S, S) with C={t_loc.shape[0]}, got {t_cls.shape}")
        object.__setattr__(self, "t_loc", t_loc)
        object.__setattr__(self, "t_cls", t_cls)


@dataclass(frozen=True)
class CenterPrediction:
    p: np.ndarray  # (H*W,), non-negative, sums to 1
    c_y: float
    c_x: float
    grid_shape: tuple[int, int]


@dataclass(frozen=True)
class BoxPrediction:
    delta_cy: float
    delta_cx: float
    s_y: float
    s_x: float
    confidence: Optional[float] = None

    def to_box(self, c_y: float, c_x: float) -> Box:
        """Axis-aligned box centered at the refined center."""
        cy = c_y + self.delta_cy
        cx = c_x + self.delta_cx
        return Box(cx - self.s_x / 2.0, cy - self.s_y / 2.0, self.s_x, self.s_y)


@dataclass(frozen=True)
class LossConfig:
    iou_pos: float = 0.7
    iou_neg: float = 0.3
    positive_weight: float = 1.0
    index_weight: float = 1.0
    negative_weight: float = 1.0
    l1_weight: float = 1.0
    giou_weight: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.iou_neg < self.iou_pos <= 1.0):
            raise ValueError(f"need 0 <= iou_neg < iou_pos <= 1, got ({self.iou_neg}, {self.iou_pos})")
        for k in ("positive_weight", "index_weight", "negative_weight", "l1_weight", "giou_weight"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be non-negative")

    def role_weight(self, role: str) -> float:
        if role == "positive":
            return self.positive_weight
        if role == "index":
            return self.index_weight
        if role == "negative":
            return self.negative_weight
        raise ValueError(f"role must be one of {ROLES}, got {role!r}")


@dataclass(frozen=True)
class LossResult:
    total: float
    label: Optional[int]  # 1, 0, or None when the BCE term is dropped
    localization: float
    bce: float


# --------------------------------------------------------------------------
# Modulation
# --------------------------------------------------------------------------


def modulate(f, t_loc) -> np.ndarray:
    """out[c,h,w] = (sum_c' t_loc[c'] * f[c',h,w]) * f[c,h,w]."""
    f = _check_fmap(f)
    t = _as_f64(t_loc, "t_loc")
    if t.shape != (f.shape[0],):
        raise ValueError(f"t_loc must have length {f.shape[0]}, got shape {t.shape}")
    dot = np.tensordot(t, f, axes=(0, 0))  # (H, W)
    return dot[None, :, :] * f


def modulate_vjp(f, t_loc, grad_out):
    f = _check_fmap(f)
    t = _as_f64(t_loc, "t_loc")
    g = _as_f64(grad_out, "grad_out")
    dot = np.tensordot(t, f, axes=(0, 0))
    g_dot = np.sum(g * f, axis=0)  # (H, W)
    grad_f = g * dot[None, :, :] + t[:, None, None] * g_dot[None, :, :]
    grad_t = np.tensordot(g_dot, f, axes=([0, 1], [1, 2]))
    return grad_f, grad_t


# --------------------------------------------------------------------------
# Score stack (3x3 convs, padding 1, ReLU between layers)
# --------------------------------------------------------------------------


def _conv3x3(x: np.ndarray, layer: ConvParams) -> np.ndarray:
    c_in, h, w = x.shape
    padded = np.zeros((c_in, h + 2, w + 2), dtype=np.float64)
    padded[:, 1 : h + 1, 1 : w + 1] = x
    out = np.broadcast_to(layer.bias[:, None, None], (layer.weight.shape[0], h, w)).copy()
    for dy in range(3):
        for dx in range(3):
            out += np.tensordot(layer.weight[:, :, dy, dx], padded[:, dy : dy + h, dx : dx + w], axes=(1, 0))
    return out


def _conv3x3_input_grad(grad_out: np.ndarray, layer: ConvParams) -> np.ndarray:
    c_out, h, w = grad_out.shape
    c_in = layer.weight.shape[1]
    gpad = np.zeros((c_in, h + 2, w + 2), dtype=np.float64)
    for dy in range(3):
        for dx in range(3):
            gpad[:, dy : dy + h, dx : dx + w] += np.tensordot(layer.weight[:, :, dy, dx], grad_out, axes=(0, 0))
    return gpad[:, 1 : h + 1, 1 : w + 1]


def _check_stack(f_mod: np.ndarray, layers: Sequence[ConvParams]) -> None:
    if not layers:
        raise ValueError("score stack needs at least one layer")
    c = f_mod.shape[0]
    for idx, layer in enumerate(layers):
        if layer.weight.shape[1] != c:
            raise ValueError(f"layer {idx} expects {layer.weight.shape[1]} channels, got {c}")
        c = layer.weight.shape[0]
    if c != 1:
        raise ValueError(f"score stack must end in 1 channel, got {c}")


def _stack_forward(f_mod: np.ndarray, layers: Sequence[ConvParams]):
    pres = []
    x = f_mod
    for k, layer in enumerate(layers):
        pre = _conv3x3(x, layer)
        pres.append(pre)
        x = np.maximum(pre, 0.0) if k < len(layers) - 1 else pre
    return x[0], pres


def score_stack(f_mod, layers: Sequence[ConvParams]) -> np.ndarray:
    """Reduce a modulated map to a single-channel HxW score map."""
    f_mod = _check_fmap(f_mod, "f_mod")
    _check_stack(f_mod, layers)
    out, _ = _stack_forward(f_mod, layers)
    return out


def score_stack_vjp(f_mod, layers: Sequence[ConvParams], grad_out) -> np.ndarray:
    """Gradient of the score map wrt the input feature map."""
    f_mod = _check_fmap(f_mod, "f_mod")
    _check_stack(f_mod, layers)
    _, pres = _stack_forward(f_mod, layers)
    g = _as_f64(grad_out, "grad_out")[None, :, :]
    for k in reversed(range(len(layers))):
        if k < len(layers) - 1:
            g = g * (pres[k] > 0.0)
        g = _conv3x3_input_grad(g, layers[k])
    return g


def default_score_layers(rng: np.random.Generator, schedule=DEFAULT_SCORE_SCHEDULE, scale=0.05) -> list[ConvParams]:
    """Random small-weight layers for the given channel schedule."""
    layers = []
    for c_in, c_out in zip(schedule[:-1], schedule[1:]):
        layers.append(
            ConvParams(
                weight=rng.normal(0.0, scale, size=(c_out, c_in, 3, 3)),
                bias=rng.normal(0.0, scale, size=(c_out,)),
            )
        )
    return layers


# --------------------------------------------------------------------------
# Soft-argmax center
# --------------------------------------------------------------------------


def _grids(h: int, w: int):
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return yy.reshape(-1), xx.reshape(-1)


def softmax_center(score_map) -> CenterPrediction:
    """Softmax over the flattened map, then expected (row, col) coordinates."""
    s = _as_f64(score_map, "score_map")
    if s.ndim != 2:
        raise ValueError(f"score map must be 2-d, got shape {s.shape}")
    h, w = s.shape
    flat = s.reshape(-1)
    e = np.exp(flat - flat.max())
    p = e / e.sum()
    yg, xg = _grids(h, w)
    c_y = float(np.dot(p, yg))
    c_x = float(np.dot(p, xg))
    return CenterPrediction(p=p, c_y=c_y, c_x=c_x, grid_shape=(h, w))


def softmax_center_vjp(score_map, grad_p=None, grad_cy: float = 0.0, grad_cx: float = 0.0) -> np.ndarray:
    """Gradient of (p, c_y, c_x) wrt the score map entries."""
    s = _as_f64(score_map, "score_map")
    h, w = s.shape
    pred = softmax_center(s)
    p = pred.p
    yg, xg = _grids(h, w)
    g = np.zeros_like(p)
    if grad_p is not None:
        gp = _as_f64(grad_p, "grad_p").reshape(-1)
        g += p * (gp - np.dot(gp, p))
    if grad_cy:
        g += grad_cy * p * (yg - pred.c_y)
    if grad_cx:
        g += grad_cx * p * (xg - pred.c_x)
    return g.reshape(h, w)


# --------------------------------------------------------------------------
# Bilinear sampling
# --------------------------------------------------------------------------


def _corners(coord: float, size: int):
    """Low index and fractional weight for one axis, clamped to the grid."""
    if size == 1:
        return 0, 0.0
    lo = int(math.floor(coord))
    if lo > size - 2:
        lo = size - 2
    if lo < 0:
        lo = 0
    return lo, coord - lo


def bilinear_sample(f, y: float, x: float) -> np.ndarray:
    """Channel vector interpolated from the 4 cells around (y, x)."""
    f = _check_fmap(f)
    _, h, w = f.shape
    if not (0.0 <= y <= h - 1 and 0.0 <= x <= w - 1):
        raise ValueError(f"coordinates ({y}, {x}) outside grid {h}x{w}")
    y0, wy = _corners(y, h)
    x0, wx = _corners(x, w)
    y1 = min(y0 + 1, h - 1)
    x1 = min(x0 + 1, w - 1)
    return (
        (1.0 - wy) * (1.0 - wx) * f[:, y0, x0]
        + (1.0 - wy) * wx * f[:, y0, x1]
        + wy * (1.0 - wx) * f[:, y1, x0]
        + wy * wx * f[:, y1, x1]
    )


def bilinear_sample_vjp(f, y: float, x: float, grad_out):
    """Gradients wrt the map and wrt (y, x).

    Coordinate gradients hold away from integer coordinates (the
    interpolation has kinks there).
    """
    f = _check_fmap(f)
    g = _as_f64(grad_out, "grad_out")
    _, h, w = f.shape
    y0, wy = _corners(y, h)
    x0, wx = _corners(x, w)
    y1 = min(y0 + 1, h - 1)
    x1 = min(x0 + 1, w - 1)

    grad_f = np.zeros_like(f)
    grad_f[:, y0, x0] += (1.0 - wy) * (1.0 - wx) * g
    grad_f[:, y0, x1] += (1.0 - wy) * wx * g
    grad_f[:, y1, x0] += wy * (1.0 - wx) * g
    grad_f[:, y1, x1] += wy * wx * g

    d_wy = (
        -(1.0 - wx) * f[:, y0, x0] - wx * f[:, y0, x1] + (1.0 - wx) * f[:, y1, x0] + wx * f[:, y1, x1]
    )
    d_wx = (
        -(1.0 - wy) * f[:, y0, x0] + (1.0 - wy) * f[:, y0, x1] - wy * f[:, y1, x0] + wy * f[:, y1, x1]
    )
    grad_y = float(np.dot(g, d_wy)) if h > 1 else 0.0
    grad_x = float(np.dot(g, d_wx)) if w > 1 else 0.0
    return grad_f, grad_y, grad_x


# --------------------------------------------------------------------------
# Box refinement MLP
# --------------------------------------------------------------------------


def _mlp_forward(feat: np.ndarray, mlp: MLPParams):
    pre1 = mlp.w1 @ feat + mlp.b1
    h1 = np.maximum(pre1, 0.0)
    pre2 = mlp.w2 @ h1 + mlp.b2
    h2 = np.maximum(pre2, 0.0)
    out = mlp.w3 @ h2 + mlp.b3
    return out, pre1, h1, pre2, h2


def refine_box(f, center: CenterPrediction, mlp: MLPParams) -> BoxPrediction:
    """Sample the center feature and predict offsets and sizes.

    Offsets (outputs 0, 1) are unconstrained; sizes (outputs 2, 3) pass
    through a ReLU so they cannot go negative.
    """
    f = _check_fmap(f)
    if mlp.w1.shape[1] != f.shape[0]:
        raise ValueError(f"mlp expects {mlp.w1.shape[1]} channels, feature map has {f.shape[0]}")
    feat = bilinear_sample(f, center.c_y, center.c_x)
    out, *_ = _mlp_forward(feat, mlp)
    return BoxPrediction(
        delta_cy=float(out[0]),
        delta_cx=float(out[1]),
        s_y=float(max(out[2], 0.0)),
        s_x=float(max(out[3], 0.0)),
    )


def refine_box_vjp(f, center: CenterPrediction, mlp: MLPParams, grad_out):
    """Gradients of (delta_cy, delta_cx, s_y, s_x) wrt the feature map and
    the center coordinates. ``grad_out`` is a 4-vector."""
    f = _check_fmap(f)
    g = _as_f64(grad_out, "grad_out")
    feat = bilinear_sample(f, center.c_y, center.c_x)
    out, pre1, h1, pre2, h2 = _mlp_forward(feat, mlp)

    g_out = g.copy()
    g_out[2] = g[2] if out[2] > 0.0 else 0.0
    g_out[3] = g[3] if out[3] > 0.0 else 0.0
    g_h2 = mlp.w3.T @ g_out
    g_pre2 = g_h2 * (pre2 > 0.0)
    g_h1 = mlp.w2.T @ g_pre2
    g_pre1 = g_h1 * (pre1 > 0.0)
    g_feat = mlp.w1.T @ g_pre1

    grad_f, grad_cy, grad_cx = bilinear_sample_vjp(f, center.c_y, center.c_x, g_feat)
    return grad_f, grad_cy, grad_cx


def random_mlp(rng: np.random.Generator, c: int, hidden: int = DEFAULT_HIDDEN, scale: float = 0.05) -> MLPParams:
    return MLPParams(
        w1=rng.normal(0.0, scale, size=(hidden, c)),
        b1=rng.normal(0.0, scale, size=(hidden,)),
        w2=rng.normal(0.0, scale, size=(hidden, hidden)),
        b2=rng.normal(0.0, scale, size=(hidden,)),
        w3=rng.normal(0.0, scale, size=(4, hidden)),
        b3=rng.normal(0.0, scale, size=(4,)),
    )


# --------------------------------------------------------------------------
# ROIAlign
# --------------------------------------------------------------------------


def roi_align(f, box: Box, s: int = DEFAULT_PATCH, sampling_ratio: int = DEFAULT_SAMPLING_RATIO) -> np.ndarray:
    """Average-pooled bilinear samples on a regular sub-grid per output bin.

    Box coordinates are in grid units; sample points are clamped to the
    grid extent before interpolation.
    """
    f = _check_fmap(f)
    if s < 1 or sampling_ratio < 1:
        raise ValueError("s and sampling_ratio must be positive")
    if box.w <= 0.0 or box.h <= 0.0:
        raise ValueError(f"degenerate box {box.as_tuple()}")
    c, h, w = f.shape
    if box.x > w - 1 or box.y > h - 1 or box.x + box.w < 0 or box.y + box.h < 0:
        raise ValueError(f"box {box.as_tuple()} does not intersect grid {h}x{w}")
    bin_h = box.h / s
    bin_w = box.w / s
    n = sampling_ratio
    out = np.empty((c, s, s), dtype=np.float64)
    for i in range(s):
        for j in range(s):
            acc = np.zeros(c, dtype=np.float64)
            for iy in range(n):
                for jx in range(n):
                    yy = box.y + bin_h * (i + (iy + 0.5) / n)
                    xx = box.x + bin_w * (j + (jx + 0.5) / n)
                    yy = min(max(yy, 0.0), float(h - 1))
                    xx = min(max(xx, 0.0), float(w - 1))
                    acc += bilinear_sample(f, yy, xx)
            out[:, i, j] = acc / (n * n)
    return out


# --------------------------------------------------------------------------
# Classification confidence and registration
# --------------------------------------------------------------------------


def cls_confidence(roi_feat, t_cls) -> float:
    """sigmoid of the full elementwise dot product."""
    a = _as_f64(roi_feat, "roi_feat")
    b = _as_f64(t_cls, "t_cls")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return sigmoid(float(np.sum(a * b)))


def cls_confidence_vjp(roi_feat, t_cls, grad_out: float = 1.0):
    a = _as_f64(roi_feat, "roi_feat")
    b = _as_f64(t_cls, "t_cls")
    sig = cls_confidence(a, b)
    gz = grad_out * sig * (1.0 - sig)
    return gz * b, gz * a


def register_target(ref_feats: Sequence[tuple]) -> TargetDescriptor:
    """Elementwise mean of reference (f_loc, f_cls) pairs."""
    if not ref_feats:
        raise ValueError("need at least one reference feature pair")
    locs = [_as_f64(p[0], "f_loc") for p in ref_feats]
    clss = [_as_f64(p[1], "f_cls") for p in ref_feats]
    for v in locs[1:]:
        if v.shape != locs[0].shape:
            raise ValueError("inconsistent f_loc shapes")
    for v in clss[1:]:
        if v.shape != clss[0].shape:
            raise ValueError("inconsistent f_cls shapes")
    return TargetDescriptor(
        t_loc=np.mean(np.stack(locs), axis=0),
        t_cls=np.mean(np.stack(clss), axis=0),
    )


# --------------------------------------------------------------------------
# Losses
# --------------------------------------------------------------------------

_BCE_EPS = 1e-12


def bce(p: float, label: float) -> float:
    """Binary cross entropy with a tiny clamp for numerical safety."""
    p = min(max(p, _BCE_EPS), 1.0 - _BCE_EPS)
    return -math.log(p) if label else -math.log(1.0 - p)


def assign_label(iou_value: float, cfg: LossConfig) -> Optional[int]:
    """1 above iou_pos, 0 at or below iou_neg, None (ignored) in between."""
    if iou_value > cfg.iou_pos:
        return 1
    if iou_value <= cfg.iou_neg:
        return 0
    return None


def detection_loss(
    pred_box: Optional[Box],
    confidence: float,
    gt: Optional[Box],
    cfg: LossConfig,
    image_role: str,
) -> LossResult:
    """Role-weighted localization + confidence loss.

    positive/index roles: L1 over (x, y, w, h) plus (1 - GIoU), plus BCE
    against the IoU-assigned label (the BCE term is dropped when the IoU
    falls in the ignore band). negative role: BCE toward 0 only; gt must
    be absent.
    """
    if image_role not in ROLES:
        raise ValueError(f"role must be one of {ROLES}, got {image_role!r}")
    weight = cfg.role_weight(image_role)

    if image_role == "negative":
        if gt is not None:
            raise ValueError("negative role images have no ground-truth box")
        bce_term = bce(confidence, 0.0)
        return LossResult(total=weight * bce_term, label=0, localization=0.0, bce=bce_term)

    if gt is None:
        raise ValueError(f"{image_role} role requires a ground-truth box")
    if pred_box is None:
        raise ValueError(f"{image_role} role requires a predicted box")

    l1 = (
        abs(pred_box.x - gt.x)
        + abs(pred_box.y - gt.y)
        + abs(pred_box.w - gt.w)
        + abs(pred_box.h - gt.h)
    )
    loc = cfg.l1_weight * l1 + cfg.giou_weight * (1.0 - giou(pred_box, gt))
    label = assign_label(iou(pred_box, gt), cfg)
    bce_term = bce(confidence, float(label)) if label is not None else 0.0
    return LossResult(
        total=weight * (loc + bce_term),
        label=label,
        localization=loc,
        bce=bce_term,
    )


def _giou_grad(pred: Box, gt: Box) -> np.ndarray:
    """d(GIoU)/d(pred x, y, w, h); piecewise-smooth away from min/max ties
    and zero-overlap boundaries."""
    x1, y1 = pred.x, pred.y
    x2, y2 = pred.x + pred.w, pred.y + pred.h
    gx1, gy1 = gt.x, gt.y
    gx2, gy2 = gt.x + gt.w, gt.y + gt.h

    iw = min(x2, gx2) - max(x1, gx1)
    ih = min(y2, gy2) - max(y1, gy1)
    overlap = iw > 0.0 and ih > 0.0
    inter = iw * ih if overlap else 0.0
    area_p = pred.w * pred.h
    area_g = gt.w * gt.h
    union = area_p + area_g - inter

    hw = max(x2, gx2) - min(x1, gx1)
    hh = max(y2, gy2) - min(y1, gy1)
    hull = hw * hh

    # Partials wrt pred corners (zero where the min/max picks the gt side).
    d_iw = np.zeros(4)  # order: x1, y1, x2, y2
    d_ih = np.zeros(4)
    if overlap:
        if x1 > gx1:
            d_iw[0] = -1.0
        if x2 < gx2:
            d_iw[2] = 1.0
        if y1 > gy1:
            d_ih[1] = -1.0
        if y2 < gy2:
            d_ih[3] = 1.0
    d_inter = d_iw * ih + d_ih * iw if overlap else np.zeros(4)
    d_area = np.array([-(y2 - y1), -(x2 - x1), y2 - y1, x2 - x1])
    d_union = d_area - d_inter

    d_hw = np.zeros(4)
    d_hh = np.zeros(4)
    if x1 < gx1:
        d_hw[0] = -1.0
    if x2 > gx2:
        d_hw[2] = 1.0
    if y1 < gy1:
        d_hh[1] = -1.0
    if y2 > gy2:
        d_hh[3] = 1.0
    d_hull = d_hw * hh + d_hh * hw

    # giou = inter/union - 1 + union/hull
    d_corners = np.zeros(4)
    if union > 0.0:
        d_corners += (d_inter * union - inter * d_union) / (union * union)
    if hull > 0.0:
        d_corners += (d_union * hull - union * d_hull) / (hull * hull)

    # Chain corners -> (x, y, w, h): x1 = x, x2 = x + w, y1 = y, y2 = y + h.
    return np.array(
        [
            d_corners[0] + d_corners[2],
            d_corners[1] + d_corners[3],
            d_corners[2],
            d_corners[3],
        ]
    )


def detection_loss_vjp(
    pred_box: Optional[Box],
    confidence: float,
    gt: Optional[Box],
    cfg: LossConfig,
    image_role: str,
):
    """Gradients of the total loss wrt (pred x, y, w, h) and confidence.

    The assigned label is treated as locally constant; gradients hold away
    from the L1 kinks, IoU label thresholds, and min/max ties.
    """
    if image_role not in ROLES:
        raise ValueError(f"role must be one of {ROLES}, got {image_role!r}")
    weight = cfg.role_weight(image_role)

    def d_bce(p: float, label: float) -> float:
        p = min(max(p, _BCE_EPS), 1.0 - _BCE_EPS)
        return -1.0 / p if label else 1.0 / (1.0 - p)

    if image_role == "negative":
        if gt is not None:
            raise ValueError("negative role images have no ground-truth box")
        return np.zeros(4), weight * d_bce(confidence, 0.0)

    if gt is None or pred_box is None:
        raise ValueError(f"{image_role} role requires predicted and ground-truth boxes")

    sign = np.array(
        [
            math.copysign(1.0, pred_box.x - gt.x) if pred_box.x != gt.x else 0.0,
            math.copysign(1.0, pred_box.y - gt.y) if pred_box.y != gt.y else 0.0,
            math.copysign(1.0, pred_box.w - gt.w) if pred_box.w != gt.w else 0.0,
            math.copysign(1.0, pred_box.h - gt.h) if pred_box.h != gt.h else 0.0,
        ]
    )
    grad_box = cfg.l1_weight * sign - cfg.giou_weight * _giou_grad(pred_box, gt)
    label = assign_label(iou(pred_box, gt), cfg)
    grad_conf = d_bce(confidence, float(label)) if label is not None else 0.0
    return weight * grad_box, weight * grad_conf


# --------------------------------------------------------------------------
# Full head forward pass
# --------------------------------------------------------------------------


def run_head(
    f,
    target: TargetDescriptor,
    score_layers: Sequence[ConvParams],
    mlp: MLPParams,
    sampling_ratio: int = DEFAULT_SAMPLING_RATIO,
) -> tuple[Box, BoxPrediction, CenterPrediction]:
    """Modulate, score, localize, refine, then score the refined box."""
    f = _check_fmap(f)
    f_mod = modulate(f, target.t_loc)
    smap = score_stack(f_mod, score_layers)
    center = softmax_center(smap)
    pred = refine_box(f, center, mlp)
    box = pred.to_box(center.c_y, center.c_x)
    s = target.t_cls.shape[1]
    if box.w > 0.0 and box.h > 0.0 and box.x <= f.shape[2] - 1 and box.y <= f.shape[1] - 1 and box.x + box.w >= 0 and box.y + box.h >= 0:
        patch = roi_align(f, box, s=s, sampling_ratio=sampling_ratio)
        conf = cls_confidence(patch, target.t_cls)
    else:
        conf = 0.0
    pred = BoxPrediction(
        delta_cy=pred.delta_cy,
        delta_cx=pred.delta_cx,
        s_y=pred.s_y,
        s_x=pred.s_x,
        confidence=conf,
    )
    return box, pred, center
