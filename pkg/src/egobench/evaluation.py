"""Federated detection metrics.

Category mode gates each category's evaluation to the images where that
category is either annotated or explicitly verified absent; predictions
anywhere else are ignored rather than penalized. Instance mode evaluates
each registered target over the whole evaluation split, so false alarms on
target-absent images count. Both modes use score-ranked greedy matching
and 101-point interpolated average precision, reduced with exactly-rounded
sums so reports are byte-identical regardless of thread count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from egobench import _core
from egobench.errors import EvalError, ParseError
from egobench.geometry import Box
from egobench.schema import Dataset, Prediction
from egobench.splits import SplitSpec

RECALL_POINTS = 101
SIZE_BUCKETS = ("l", "m", "s")
LIGHTING_BUCKETS = ("bright", "dim")
BACKGROUND_BUCKETS = ("simple", "busy")


def default_thresholds() -> tuple[float, ...]:
    return tuple(np.arange(10, 20) / 20.0)  # 0.50, 0.55, ... 0.95


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple = field(default_factory=default_thresholds)
    max_dets: Optional[int] = None  # per-image cap; None = uncapped
    size_small: float = 0.20  # scale < small -> s
    size_large: float = 0.30  # scale > large -> l; else m
    subset: str = "valtest"  # instance-mode evaluation images
    threads: int = 1

    def __post_init__(self):
        ts = tuple(float(t) for t in self.iou_thresholds)
        if not ts:
            raise EvalError("iou_thresholds must be non-empty")
        for a, b in zip(ts, ts[1:]):
            if not a < b:
                raise EvalError("iou_thresholds must be strictly increasing")
        if not (0.0 < ts[0] and ts[-1] <= 1.0):
            raise EvalError("iou_thresholds must lie in (0, 1]")
        if self.subset not in ("val", "test", "valtest"):
            raise EvalError(f"subset must be val, test, or valtest, got {self.subset!r}")
        if not 0.0 < self.size_small <= self.size_large:
            raise EvalError("need 0 < size_small <= size_large")
        if self.max_dets is not None and self.max_dets < 1:
            raise EvalError("max_dets must be positive or None")
        if self.threads < 1:
            raise EvalError("threads must be positive")
        object.__setattr__(self, "iou_thresholds", ts)


@dataclass
class EvalReport:
    mode: str
    ap: float
    ap50: float
    ap75: float
    num_evaluated: int
    per_entity: dict[int, dict[str, float]]
    size_ap50: dict[str, Optional[float]]
    lighting_ap50: dict[str, Optional[float]]
    background_ap50: dict[str, Optional[float]]
    seen_ap50: Optional[float] = None
    unseen_ap50: Optional[float] = None
    num_skipped_no_gt: int = 0

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "ap": self.ap,
            "ap50": self.ap50,
            "ap75": self.ap75,
            "num_evaluated": self.num_evaluated,
            "num_skipped_no_gt": self.num_skipped_no_gt,
            "per_entity": {str(k): v for k, v in sorted(self.per_entity.items())},
            "size_ap50": dict(self.size_ap50),
            "lighting_ap50": dict(self.lighting_ap50),
            "background_ap50": dict(self.background_ap50),
        }
        if self.mode == "instance":
            out["seen_ap50"] = self.seen_ap50
            out["unseen_ap50"] = self.unseen_ap50
        return out


def serialize_report(payload: Mapping) -> str:
    """Canonical report encoding; key-sorted so output is byte-stable."""
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# Core per-entity AP machinery
# --------------------------------------------------------------------------

_GRID = np.arange(RECALL_POINTS) / 100.0


def _interp_ap(flags: np.ndarray, n_gt: int) -> float:
    """101-point interpolated AP from rank-ordered TP flags."""
    if n_gt <= 0:
        raise ValueError("AP needs at least one ground-truth box")
    if flags.size == 0:
        return 0.0
    tp = np.cumsum(flags, dtype=np.float64)
    fp = np.cumsum(~flags, dtype=np.float64)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, _GRID, side="left")
    vals = [float(envelope[i]) if i < envelope.size else 0.0 for i in idx]
    return math.fsum(vals) / RECALL_POINTS


def _scale_bucket(scale: float, cfg: EvalConfig) -> str:
    if scale < cfg.size_small:
        return "s"
    if scale > cfg.size_large:
        return "l"
    return "m"


def _rel_scale(box: Box, width: int, height: int) -> float:
    return max(box.w, box.h) / min(width, height)


@dataclass
class _EntityResult:
    ap_by_thresh: dict[float, float]
    ap50: float
    ap75: float
    # size-bucket AP50 values; None where the bucket has no ground truth
    size_ap50: dict[str, Optional[float]]
    n_gt: int


def _evaluate_entity(
    dataset: Dataset,
    gt_items: Sequence[tuple[int, Box]],  # (image_id, box)
    pred_items: Sequence[tuple[int, int, Box, float]],  # (input_idx, image_id, box, score)
    thresholds: Sequence[float],
    cfg: EvalConfig,
) -> _EntityResult:
    n_gt = len(gt_items)
    order = sorted(range(len(pred_items)), key=lambda k: (-pred_items[k][3], pred_items[k][0]))
    rank_of = {k: r for r, k in enumerate(order)}

    gts_by_image: dict[int, list[int]] = {}
    for gi, (img, _) in enumerate(gt_items):
        gts_by_image.setdefault(img, []).append(gi)
    preds_by_image: dict[int, list[int]] = {}
    for k in order:
        preds_by_image.setdefault(pred_items[k][1], []).append(k)

    all_t = sorted(set(float(t) for t in thresholds) | {0.5, 0.75})
    # matched_gt[t][rank] = gt index or -1
    matched = {t: np.full(len(pred_items), -1, dtype=np.int64) for t in all_t}
    for img, kidx in preds_by_image.items():
        gidx = gts_by_image.get(img, [])
        if not gidx:
            continue
        pboxes = np.array([pred_items[k][2].as_tuple() for k in kidx], dtype=np.float64)
        gboxes = np.array([gt_items[g][1].as_tuple() for g in gidx], dtype=np.float64)
        ious = _core.iou_matrix(pboxes, gboxes)
        for t in all_t:
            assign = _core.greedy_match_indices(ious, t)
            for row, k in enumerate(kidx):
                if assign[row] >= 0:
                    matched[t][rank_of[k]] = gidx[assign[row]]

    ap_by_thresh = {}
    for t in all_t:
        flags = matched[t] >= 0
        ap_by_thresh[t] = _interp_ap(flags, n_gt) if n_gt > 0 else 0.0

    # Size buckets at IoU 0.5: TPs follow their gt's bucket; unmatched
    # predictions are false positives only in their own bucket; everything
    # else is ignored for that bucket.
    def item_scale(img: int, box: Box) -> float:
        rec = dataset.images[img]
        return _rel_scale(box, rec.width, rec.height)

    gt_bucket = [_scale_bucket(item_scale(img, box), cfg) for img, box in gt_items]
    pred_bucket = [_scale_bucket(item_scale(p[1], p[2]), cfg) for p in pred_items]
    m50 = matched[0.5]
    size_ap50: dict[str, Optional[float]] = {}
    for b in SIZE_BUCKETS:
        n_gt_b = sum(1 for g in gt_bucket if g == b)
        if n_gt_b == 0:
            size_ap50[b] = None
            continue
        flags_b = []
        for r in range(len(pred_items)):
            g = m50[r]
            if g >= 0:
                if gt_bucket[g] == b:
                    flags_b.append(True)
            elif pred_bucket[order[r]] == b:
                flags_b.append(False)
        size_ap50[b] = _interp_ap(np.array(flags_b, dtype=bool), n_gt_b)

    return _EntityResult(
        ap_by_thresh={t: ap_by_thresh[t] for t in thresholds},
        ap50=ap_by_thresh[0.5],
        ap75=ap_by_thresh[0.75],
        size_ap50=size_ap50,
        n_gt=n_gt,
    )


def _apply_max_dets(predictions: Sequence[Prediction], cfg: EvalConfig) -> list[tuple[int, Prediction]]:
    """Index predictions and optionally keep the top-scoring per image."""
    indexed = list(enumerate(predictions))
    if cfg.max_dets is None:
        return indexed
    by_image: dict[int, list[tuple[int, Prediction]]] = {}
    for idx, p in indexed:
        by_image.setdefault(p.image_id, []).append((idx, p))
    kept = []
    for img in by_image:
        rows = sorted(by_image[img], key=lambda r: (-r[1].score, r[0]))
        kept.extend(rows[: cfg.max_dets])
    return sorted(kept, key=lambda r: r[0])


def _parallel(fn, keys: Sequence, threads: int) -> dict:
    if threads <= 1 or len(keys) <= 1:
        return {k: fn(k) for k in keys}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return dict(zip(keys, pool.map(fn, keys)))


def _mean_over(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _reduce_reports(
    mode: str, results: dict[int, _EntityResult], cfg: EvalConfig
) -> tuple[float, float, float, dict, dict]:
    keys = sorted(k for k, r in results.items() if r.n_gt > 0)
    if not keys:
        raise EvalError("no ground truth for any evaluated entity")
    per_entity = {}
    ap_means = []
    for k in keys:
        r = results[k]
        entity_ap = _mean_over([r.ap_by_thresh[t] for t in cfg.iou_thresholds])
        ap_means.append(entity_ap)
        per_entity[k] = {"ap": entity_ap, "ap50": r.ap50, "ap75": r.ap75}
    ap = _mean_over(ap_means)
    ap50 = _mean_over([results[k].ap50 for k in keys])
    ap75 = _mean_over([results[k].ap75 for k in keys])
    size_ap50: dict[str, Optional[float]] = {}
    for b in SIZE_BUCKETS:
        vals = [results[k].size_ap50[b] for k in keys if results[k].size_ap50[b] is not None]
        size_ap50[b] = _mean_over(vals) if vals else None
    return ap, ap50, ap75, per_entity, size_ap50


# --------------------------------------------------------------------------
# Category mode
# --------------------------------------------------------------------------


def _category_entity_inputs(
    dataset: Dataset,
    indexed_preds: Sequence[tuple[int, Prediction]],
    category_id: int,
    image_filter: Optional[frozenset[int]] = None,
):
    """Federated inputs for one category: the evaluation image set is the
    images annotating the category plus the images verifying its absence."""
    eval_images = set()
    gt_items = []
    for img_id in sorted(dataset.images):
        if image_filter is not None and img_id not in image_filter:
            continue
        img = dataset.images[img_id]
        anns = [
            dataset.annotations[a]
            for a in dataset.annotations_by_image.get(img_id, [])
            if dataset.annotations[a].category_id == category_id
        ]
        if anns:
            eval_images.add(img_id)
            gt_items.extend((img_id, a.bbox) for a in anns)
        elif category_id in img.neg_category_ids:
            eval_images.add(img_id)
    pred_items = [
        (idx, p.image_id, p.bbox, p.score)
        for idx, p in indexed_preds
        if p.label == category_id and p.image_id in eval_images
    ]
    return gt_items, pred_items


def federated_ap_category(
    dataset: Dataset, predictions: Sequence[Prediction], cfg: EvalConfig = None
) -> EvalReport:
    """Category-level federated AP over every category with ground truth."""
    cfg = cfg or EvalConfig()
    indexed = _apply_max_dets(predictions, cfg)
    categories = sorted(dataset.categories)

    def run(cat: int) -> _EntityResult:
        gt_items, pred_items = _category_entity_inputs(dataset, indexed, cat)
        return _evaluate_entity(dataset, gt_items, pred_items, cfg.iou_thresholds, cfg)

    results = _parallel(run, categories, cfg.threads)
    ap, ap50, ap75, per_entity, size_ap50 = _reduce_reports("category", results, cfg)

    lighting = _condition_buckets(dataset, indexed, cfg, "lighting", LIGHTING_BUCKETS)
    background = _condition_buckets(dataset, indexed, cfg, "background", BACKGROUND_BUCKETS)
    skipped = sum(1 for r in results.values() if r.n_gt == 0)
    return EvalReport(
        mode="category",
        ap=ap,
        ap50=ap50,
        ap75=ap75,
        num_evaluated=len(per_entity),
        per_entity=per_entity,
        size_ap50=size_ap50,
        lighting_ap50=lighting,
        background_ap50=background,
        num_skipped_no_gt=skipped,
    )


def _condition_buckets(
    dataset: Dataset,
    indexed_preds: Sequence[tuple[int, Prediction]],
    cfg: EvalConfig,
    attr: str,
    tags: Sequence[str],
    instance_inputs=None,
) -> dict[str, Optional[float]]:
    """AP50 restricted to images whose video carries each tag; a tag with
    no ground truth is reported as absent."""
    out: dict[str, Optional[float]] = {}
    for tag in tags:
        image_filter = frozenset(
            img
            for img, rec in dataset.images.items()
            if rec.video_id in dataset.videos
            and getattr(dataset.videos[rec.video_id], attr) == tag
        )

        if instance_inputs is None:
            keys = sorted(dataset.categories)

            def run(cat: int) -> _EntityResult:
                gt_items, pred_items = _category_entity_inputs(dataset, indexed_preds, cat, image_filter)
                return _evaluate_entity(dataset, gt_items, pred_items, (0.5,), cfg)

        else:
            keys = sorted(instance_inputs)

            def run(iid: int) -> _EntityResult:
                gt_items, pred_items = instance_inputs[iid]
                gt_f = [g for g in gt_items if g[0] in image_filter]
                pred_f = [p for p in pred_items if p[1] in image_filter]
                return _evaluate_entity(dataset, gt_f, pred_f, (0.5,), cfg)

        results = _parallel(run, keys, cfg.threads)
        vals = [r.ap50 for _, r in sorted(results.items()) if r.n_gt > 0]
        out[tag] = _mean_over(vals) if vals else None
    return out


def bucket_breakdown(
    dataset: Dataset,
    predictions: Sequence[Prediction],
    cfg: EvalConfig = None,
) -> dict[str, dict[str, Optional[float]]]:
    """Standalone per-condition AP50 breakdown for category predictions."""
    cfg = cfg or EvalConfig()
    indexed = _apply_max_dets(predictions, cfg)
    return {
        "lighting": _condition_buckets(dataset, indexed, cfg, "lighting", LIGHTING_BUCKETS),
        "background": _condition_buckets(dataset, indexed, cfg, "background", BACKGROUND_BUCKETS),
    }


# --------------------------------------------------------------------------
# Instance mode
# --------------------------------------------------------------------------


def _eval_image_set(spec: SplitSpec, subset: str) -> frozenset[int]:
    if subset == "val":
        return spec.val_images
    if subset == "test":
        return spec.test_images
    return spec.val_images | spec.test_images


def instance_ap(
    dataset: Dataset,
    predictions: Sequence[Prediction],
    split_spec: SplitSpec,
    cfg: EvalConfig = None,
) -> EvalReport:
    """Per-instance AP over the evaluation split, averaged over instances.

    Every evaluation-split image counts for every instance (a false alarm
    on a target-absent image is a real false positive). Instances with no
    ground truth in the split are skipped, not scored zero.
    """
    cfg = cfg or EvalConfig()
    registry = split_spec.eval_instance_ids
    if not registry:
        raise EvalError("split has no registered target instances")
    for p in predictions:
        if p.label not in registry:
            raise EvalError(f"prediction for unregistered instance {p.label}")

    eval_images = _eval_image_set(split_spec, cfg.subset)
    indexed_all = _apply_max_dets(predictions, cfg)
    indexed = [(i, p) for i, p in indexed_all if p.image_id in eval_images]

    inputs: dict[int, tuple[list, list]] = {}
    for iid in sorted(registry):
        gt_items = []
        for img in sorted(eval_images):
            for aid in dataset.annotations_by_image.get(img, []):
                a = dataset.annotations[aid]
                if a.instance_id == iid:
                    gt_items.append((img, a.bbox))
        pred_items = [(idx, p.image_id, p.bbox, p.score) for idx, p in indexed if p.label == iid]
        inputs[iid] = (gt_items, pred_items)

    def run(iid: int) -> _EntityResult:
        gt_items, pred_items = inputs[iid]
        return _evaluate_entity(dataset, gt_items, pred_items, cfg.iou_thresholds, cfg)

    results = _parallel(run, sorted(registry), cfg.threads)
    ap, ap50, ap75, per_entity, size_ap50 = _reduce_reports("instance", results, cfg)

    evaluated = sorted(per_entity)
    seen_vals = [results[i].ap50 for i in evaluated if i not in split_spec.unseen_instance_ids]
    unseen_vals = [results[i].ap50 for i in evaluated if i in split_spec.unseen_instance_ids]

    lighting = _condition_buckets(dataset, indexed, cfg, "lighting", LIGHTING_BUCKETS, instance_inputs=inputs)
    background = _condition_buckets(dataset, indexed, cfg, "background", BACKGROUND_BUCKETS, instance_inputs=inputs)
    return EvalReport(
        mode="instance",
        ap=ap,
        ap50=ap50,
        ap75=ap75,
        num_evaluated=len(evaluated),
        per_entity=per_entity,
        size_ap50=size_ap50,
        lighting_ap50=lighting,
        background_ap50=background,
        seen_ap50=_mean_over(seen_vals) if seen_vals else None,
        unseen_ap50=_mean_over(unseen_vals) if unseen_vals else None,
        num_skipped_no_gt=len(registry) - len(evaluated),
    )


# --------------------------------------------------------------------------
# Continual-learning experience streams
# --------------------------------------------------------------------------

STREAM_MODES = ("class_incremental_instance", "data_incremental_category")


@dataclass(frozen=True)
class Experience:
    index: int
    instance_ids: frozenset[int] = frozenset()
    image_ids: frozenset[int] = frozenset()


@dataclass(frozen=True)
class ExperienceStream:
    mode: str
    experiences: tuple[Experience, ...]

    def __post_init__(self):
        if self.mode not in STREAM_MODES:
            raise EvalError(f"stream mode must be one of {STREAM_MODES}, got {self.mode!r}")
        if not self.experiences:
            raise EvalError("stream needs at least one experience")
        for i, e in enumerate(self.experiences):
            if e.index != i:
                raise EvalError(f"experience indexes must be 0..n-1 in order, got {e.index} at {i}")
        key = "instance_ids" if self.mode == "class_incremental_instance" else "image_ids"
        seen: set[int] = set()
        for e in self.experiences:
            ids = getattr(e, key)
            if not ids:
                raise EvalError(f"experience {e.index} has no {key}")
            overlap = seen & ids
            if overlap:
                raise EvalError(
                    f"experience {e.index} shares {key} {sorted(overlap)[:5]} with an earlier experience"
                )
            seen |= ids


def stream_from_dict(payload: Mapping) -> ExperienceStream:
    if not isinstance(payload, Mapping):
        raise ParseError("stream file must be a JSON object")
    if "mode" not in payload or "experiences" not in payload:
        raise ParseError("stream file needs 'mode' and 'experiences'")
    if not isinstance(payload["experiences"], list):
        raise ParseError("'experiences' must be an array")
    exps = []
    for i, rec in enumerate(payload["experiences"]):
        if not isinstance(rec, Mapping):
            raise ParseError(f"experiences[{i}] must be an object")
        idx = rec.get("index", i)
        if isinstance(idx, bool) or not isinstance(idx, int):
            raise ParseError(f"experiences[{i}]: index must be an integer")
        for key in ("instance_ids", "image_ids"):
            vals = rec.get(key, [])
            if not isinstance(vals, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in vals):
                raise ParseError(f"experiences[{i}]: {key} must be a list of integers")
        exps.append(
            Experience(
                index=idx,
                instance_ids=frozenset(rec.get("instance_ids", [])),
                image_ids=frozenset(rec.get("image_ids", [])),
            )
        )
    return ExperienceStream(mode=str(payload["mode"]), experiences=tuple(exps))


def load_stream(path) -> tuple[ExperienceStream, Optional[list[float]]]:
    """Load a stream file; returns the stream plus optional precomputed
    per-experience mAPs ("map_per_experience") for checkpoint-less use."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    stream = stream_from_dict(payload)
    maps = payload.get("map_per_experience")
    if maps is not None:
        if not isinstance(maps, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in maps):
            raise ParseError("map_per_experience must be a list of numbers")
        if len(maps) != len(stream.experiences):
            raise ParseError(
                f"map_per_experience has {len(maps)} entries for {len(stream.experiences)} experiences"
            )
        maps = [float(v) for v in maps]
    return stream, maps


def experience_average_precision(map_per_experience: Sequence[float]) -> float:
    """Arithmetic mean of per-experience mAPs."""
    if not map_per_experience:
        raise EvalError("need at least one experience mAP")
    return math.fsum(map_per_experience) / len(map_per_experience)


@dataclass
class CLReport:
    mode: str
    metric: str
    map_per_experience: list[float]
    eap: float

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "metric": self.metric,
            "map_per_experience": list(self.map_per_experience),
            "eap": self.eap,
        }


def cl_evaluate(
    stream: ExperienceStream,
    per_experience_predictions: Sequence[Sequence[Prediction]],
    dataset: Dataset,
    cfg: EvalConfig = None,
    split_spec: Optional[SplitSpec] = None,
    metric: str = "ap50",
) -> CLReport:
    """Score one checkpoint's predictions per experience on the fixed
    evaluation set, then average."""
    cfg = cfg or EvalConfig()
    if metric not in ("ap", "ap50", "ap75"):
        raise EvalError(f"metric must be ap, ap50, or ap75, got {metric!r}")
    if len(per_experience_predictions) != len(stream.experiences):
        raise EvalError(
            f"{len(per_experience_predictions)} prediction sets for {len(stream.experiences)} experiences"
        )
    maps = []
    for preds in per_experience_predictions:
        if stream.mode == "class_incremental_instance":
            if split_spec is None:
                raise EvalError("instance-mode streams need a split spec")
            report = instance_ap(dataset, preds, split_spec, cfg)
        else:
            report = federated_ap_category(dataset, preds, cfg)
        maps.append(getattr(report, metric))
    return CLReport(
        mode=stream.mode,
        metric=metric,
        map_per_experience=maps,
        eap=experience_average_precision(maps),
    )


# --------------------------------------------------------------------------
# Independent oracle (test provenance; no shared matching code)
# --------------------------------------------------------------------------


def brute_force_ap_oracle(
    gts: Sequence[tuple[int, Box]],
    predictions: Sequence[tuple[int, Box, float]],  # (image_id, box, score)
    iou_thresh: float,
) -> float:
    """Direct PR-point enumeration for micro fixtures.

    Re-implements ranking, matching, and 101-point interpolation from the
    definitions, sharing no code with the engine path. IoU arithmetic uses
    the same operation order so agreement is exact in double precision.
    """

    def oracle_iou(a: Box, b: Box) -> float:
        ax2 = a.x + a.w
        ay2 = a.y + a.h
        bx2 = b.x + b.w
        by2 = b.y + b.h
        iw = min(ax2, bx2) - max(a.x, b.x)
        ih = min(ay2, by2) - max(a.y, b.y)
        if iw < 0.0:
            iw = 0.0
        if ih < 0.0:
            ih = 0.0
        inter = iw * ih
        union = a.w * a.h + b.w * b.h - inter
        if union <= 0.0:
            return 0.0
        return inter / union

    n_gt = len(gts)
    if n_gt == 0:
        raise ValueError("oracle needs at least one ground-truth box")
    ranked = sorted(range(len(predictions)), key=lambda i: (-predictions[i][2], i))
    gt_used = [False] * n_gt
    is_tp = []
    for i in ranked:
        img, pbox, _ = predictions[i]
        best = -1
        best_iou = 0.0
        for j, (gimg, gbox) in enumerate(gts):
            if gt_used[j] or gimg != img:
                continue
            v = oracle_iou(pbox, gbox)
            if v >= iou_thresh and (best < 0 or v > best_iou):
                best = j
                best_iou = v
        if best >= 0:
            gt_used[best] = True
            is_tp.append(True)
        else:
            is_tp.append(False)

    points = []  # (recall, precision) after each ranked prediction
    tp = 0
    for k, hit in enumerate(is_tp, start=1):
        if hit:
            tp += 1
        points.append((tp / n_gt, tp / k))

    vals = []
    for i in range(RECALL_POINTS):
        r = i / 100.0
        best_p = 0.0
        for recall, precision in points:
            if recall >= r and precision > best_p:
                best_p = precision
        vals.append(best_p)
    return math.fsum(vals) / RECALL_POINTS
