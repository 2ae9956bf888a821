"""Builders and independent reference helpers shared across the suite.

The random generators respect every dataset invariant (verified-negative
contract, box bounds, enum values) so `validate` stays clean unless a test
breaks something on purpose.
"""

from __future__ import annotations

import math

import numpy as np

from egobench.evaluation import brute_force_ap_oracle
from egobench.geometry import Box
from egobench.schema import (
    BoxAnnotation,
    Category,
    Dataset,
    ImageRecord,
    Prediction,
    VideoMeta,
)


def cat(cid: int, name: str = None, parent: int = None) -> Category:
    return Category(id=cid, name=name if name is not None else f"cat-{cid}", parent_id=parent)


def video(
    vid: int,
    main_instance: int = 1,
    main_category: int = 1,
    participant: int = 1,
    device: str = "mobile",
    distance: str = "near",
    motion: str = "horizontal",
    background: str = "simple",
    lighting: str = "bright",
    location: str = "",
) -> VideoMeta:
    return VideoMeta(
        id=vid,
        participant_id=participant,
        device=device,
        main_instance_id=main_instance,
        main_category_id=main_category,
        distance=distance,
        motion=motion,
        background=background,
        lighting=lighting,
        location=location,
    )


def image(iid, video_id=1, width=640, height=480, frame_index=0, negs=()):
    return ImageRecord(
        id=iid,
        video_id=video_id,
        width=width,
        height=height,
        frame_index=frame_index,
        neg_category_ids=frozenset(negs),
    )


def ann(aid, image_id, category_id, box, instance_id=None, is_main=False, annotator_id=None):
    return BoxAnnotation(
        id=aid,
        image_id=image_id,
        category_id=category_id,
        bbox=Box(*box),
        instance_id=instance_id,
        is_main=is_main,
        annotator_id=annotator_id,
    )


def pred(image_id, label, box, score) -> Prediction:
    return Prediction(image_id=image_id, label=label, bbox=Box(*box), score=score)


def pred_records(preds, mode: str) -> list:
    """Prediction objects -> JSON-ready records for the file loader."""
    key = "category_id" if mode == "category" else "instance_id"
    return [
        {"image_id": p.image_id, key: p.label, "bbox": list(p.bbox.as_tuple()), "score": p.score}
        for p in preds
    ]


# --------------------------------------------------------------------------
# Randomized generators
# --------------------------------------------------------------------------


def random_box(rng: np.random.Generator, width: float, height: float, min_side=5.0, max_side=60.0):
    w = float(rng.uniform(min_side, min(max_side, width)))
    h = float(rng.uniform(min_side, min(max_side, height)))
    x = float(rng.uniform(0.0, width - w))
    y = float(rng.uniform(0.0, height - h))
    return (x, y, w, h)


def random_score(rng: np.random.Generator) -> float:
    # Coarse grid so score ties actually occur and exercise the tie-break.
    return float(rng.integers(0, 101)) / 100.0


def random_micro_dataset(rng: np.random.Generator) -> Dataset:
    """Tiny valid dataset: <= 5 images, <= 4 categories, random negatives."""
    n_cat = int(rng.integers(1, 5))
    n_img = int(rng.integers(1, 6))
    width, height = 200, 150
    cats = [cat(c) for c in range(1, n_cat + 1)]
    vid = video(1, main_instance=1, main_category=1)
    images = []
    anns = []
    aid = 1
    for i in range(1, n_img + 1):
        annotated = set()
        rows = []
        for c in range(1, n_cat + 1):
            for _ in range(int(rng.choice([0, 0, 1, 1, 2]))):
                rows.append((c, random_box(rng, width, height)))
                annotated.add(c)
        negs = [
            c for c in range(1, n_cat + 1) if c not in annotated and rng.random() < 0.5
        ]
        images.append(image(i, video_id=1, width=width, height=height, frame_index=i - 1, negs=negs))
        for c, b in rows:
            anns.append(ann(aid, i, c, b))
            aid += 1
    return Dataset(cats, [vid], images, anns)


def jitter_box(rng: np.random.Generator, b: Box) -> tuple:
    w = max(2.0, b.w * float(rng.uniform(0.6, 1.4)))
    h = max(2.0, b.h * float(rng.uniform(0.6, 1.4)))
    x = b.x + float(rng.uniform(-10.0, 10.0))
    y = b.y + float(rng.uniform(-10.0, 10.0))
    return (x, y, w, h)


def random_category_predictions(rng: np.random.Generator, ds: Dataset, max_preds: int = 6):
    """Mix of jittered copies of ground truth and unrelated boxes."""
    out = []
    for aid in sorted(ds.annotations):
        a = ds.annotations[aid]
        if rng.random() < 0.6:
            out.append(pred(a.image_id, a.category_id, jitter_box(rng, a.bbox), random_score(rng)))
    imgs = sorted(ds.images)
    cats = sorted(ds.categories)
    for _ in range(int(rng.integers(0, 4))):
        img_id = int(rng.choice(imgs))
        im = ds.images[img_id]
        out.append(
            pred(img_id, int(rng.choice(cats)), random_box(rng, im.width, im.height), random_score(rng))
        )
    if len(out) > max_preds:
        keep = sorted(rng.choice(len(out), size=max_preds, replace=False))
        out = [out[i] for i in keep]
    return out


def random_split_dataset(rng: np.random.Generator) -> Dataset:
    """Multi-video dataset with instance tracks for split construction.

    Every instance gets its own video; with some probability an instance is
    also annotated inside another instance's video, linking the two videos
    into one component.
    """
    n_cat = int(rng.integers(2, 5))
    n_inst = int(rng.integers(4, 10))
    cats = [cat(c) for c in range(1, n_cat + 1)]
    inst_cat = {i: int(rng.integers(1, n_cat + 1)) for i in range(1, n_inst + 1)}

    videos = []
    images = []
    anns = []
    iid = 1
    aid = 1
    width, height = 320, 240
    video_of_instance = {}
    for inst in range(1, n_inst + 1):
        videos.append(video(inst, main_instance=inst, main_category=inst_cat[inst]))
        video_of_instance[inst] = inst
        for frame in range(int(rng.integers(1, 4))):
            images.append(image(iid, video_id=inst, width=width, height=height, frame_index=frame))
            anns.append(
                ann(aid, iid, inst_cat[inst], random_box(rng, width, height), instance_id=inst, is_main=True)
            )
            aid += 1
            iid += 1

    # Secondary appearances create shared-instance links between videos.
    by_video = {}
    for im in images:
        by_video.setdefault(im.video_id, []).append(im.id)
    for inst in range(1, n_inst + 1):
        if rng.random() < 0.3:
            other = int(rng.integers(1, n_inst + 1))
            if other == inst:
                continue
            host_img = int(rng.choice(by_video[video_of_instance[other]]))
            anns.append(ann(aid, host_img, inst_cat[inst], random_box(rng, width, height), instance_id=inst))
            aid += 1
    return Dataset(cats, videos, images, anns)


def random_instance_predictions(rng: np.random.Generator, ds: Dataset, spec, max_preds: int = 12):
    """Predictions labeled with registered target instances only."""
    eval_imgs = sorted(spec.val_images | spec.test_images)
    targets = sorted(spec.targets)
    out = []
    for img_id in eval_imgs:
        for a in ds.image_annotations(img_id):
            if a.instance_id in spec.targets and rng.random() < 0.6:
                out.append(pred(img_id, a.instance_id, jitter_box(rng, a.bbox), random_score(rng)))
    for _ in range(int(rng.integers(0, 4))):
        if not eval_imgs:
            break
        img_id = int(rng.choice(eval_imgs))
        im = ds.images[img_id]
        out.append(
            pred(img_id, int(rng.choice(targets)), random_box(rng, im.width, im.height), random_score(rng))
        )
    if len(out) > max_preds:
        keep = sorted(rng.choice(len(out), size=max_preds, replace=False))
        out = [out[i] for i in keep]
    return out


# --------------------------------------------------------------------------
# Independent reference computations (definition level, no engine code)
# --------------------------------------------------------------------------


def federated_images(ds: Dataset, category_id: int) -> set:
    """Evaluation images for a category: annotated there, or verified absent."""
    out = set()
    for img_id, im in ds.images.items():
        annotated = {
            ds.annotations[a].category_id for a in ds.annotations_by_image.get(img_id, [])
        }
        if category_id in annotated or category_id in im.neg_category_ids:
            out.add(img_id)
    return out


def oracle_category_values(ds: Dataset, predictions, thresholds):
    """Per-category AP at each threshold via the brute-force oracle.

    Categories without ground truth are omitted, mirroring the engine's
    skip rule.
    """
    out = {}
    for cid in sorted(ds.categories):
        imgs = federated_images(ds, cid)
        gts = []
        for img_id in sorted(ds.images):
            if img_id not in imgs:
                continue
            for aid in ds.annotations_by_image.get(img_id, []):
                a = ds.annotations[aid]
                if a.category_id == cid:
                    gts.append((img_id, a.bbox))
        if not gts:
            continue
        kept = [
            (p.image_id, p.bbox, p.score)
            for p in predictions
            if p.label == cid and p.image_id in imgs
        ]
        out[cid] = {t: brute_force_ap_oracle(gts, kept, t) for t in thresholds}
    return out


def oracle_report_means(per_entity_by_thresh, thresholds):
    """Reduce oracle per-entity values to (ap, ap50, ap75) engine-style."""
    keys = sorted(per_entity_by_thresh)
    ap = math.fsum(
        math.fsum(per_entity_by_thresh[k][t] for t in thresholds) / len(thresholds) for k in keys
    ) / len(keys)
    ap50 = math.fsum(per_entity_by_thresh[k][0.5] for k in keys) / len(keys)
    ap75 = math.fsum(per_entity_by_thresh[k][0.75] for k in keys) / len(keys)
    return ap, ap50, ap75
