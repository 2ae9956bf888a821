"""Train/target/val/test split construction and verification.

Splitting is per-video: all frames of a video land in the same split,
and videos sharing any object instance travel together (union-find
components), so no evaluation instance ever appears in a train image.
Each evaluation instance gets exactly one reference annotation; reference
images form the target split and are withheld from val/test.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from egobench.errors import ParseError, SplitError
from egobench.schema import Dataset, Violation

# Fraction of instances routed to evaluation per mode. The instdet mode
# holds out fewer instances but prefers rare categories, producing more
# unseen-category instances.
EVAL_FRACTION = {"unified": 0.30, "instdet": 0.15}


@dataclass
class SplitSpec:
    train_images: frozenset[int]
    val_images: frozenset[int]
    test_images: frozenset[int]
    # instance_id -> (image_id, annotation_id); the target split is exactly
    # the set of these reference images.
    targets: dict[int, tuple[int, int]]
    unseen_instance_ids: frozenset[int]
    mode: str = "unified"
    seed: int = 0

    @property
    def target_images(self) -> frozenset[int]:
        return frozenset(img for img, _ in self.targets.values())

    @property
    def eval_instance_ids(self) -> frozenset[int]:
        return frozenset(self.targets)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "train_images": sorted(self.train_images),
            "val_images": sorted(self.val_images),
            "test_images": sorted(self.test_images),
            "targets": [
                {"instance_id": iid, "image_id": img, "annotation_id": aid}
                for iid, (img, aid) in sorted(self.targets.items())
            ],
            "unseen_instance_ids": sorted(self.unseen_instance_ids),
        }


def spec_from_dict(payload: Mapping) -> SplitSpec:
    if not isinstance(payload, Mapping):
        raise ParseError("split file must be a JSON object")
    for key in ("train_images", "val_images", "test_images", "targets", "unseen_instance_ids"):
        if key not in payload:
            raise ParseError(f"split file: missing key '{key}'")
    for key in ("train_images", "val_images", "test_images", "unseen_instance_ids"):
        vals = payload[key]
        if not isinstance(vals, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in vals):
            raise ParseError(f"split file: '{key}' must be a list of integers")
    targets: dict[int, tuple[int, int]] = {}
    if not isinstance(payload["targets"], list):
        raise ParseError("split file: 'targets' must be an array")
    for i, t in enumerate(payload["targets"]):
        ctx = f"targets[{i}]"
        if not isinstance(t, Mapping):
            raise ParseError(f"{ctx}: must be an object")
        try:
            iid, img, aid = t["instance_id"], t["image_id"], t["annotation_id"]
        except KeyError as exc:
            raise ParseError(f"{ctx}: missing field {exc}") from exc
        for v in (iid, img, aid):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ParseError(f"{ctx}: ids must be integers")
        if iid in targets:
            raise ParseError(f"{ctx}: duplicate reference for instance {iid}")
        targets[iid] = (img, aid)
    return SplitSpec(
        train_images=frozenset(payload["train_images"]),
        val_images=frozenset(payload["val_images"]),
        test_images=frozenset(payload["test_images"]),
        targets=targets,
        unseen_instance_ids=frozenset(payload["unseen_instance_ids"]),
        mode=str(payload.get("mode", "unified")),
        seed=int(payload.get("seed", 0)),
    )


def save_splits(spec: SplitSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")


def load_splits(path) -> SplitSpec:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return spec_from_dict(payload)


# --------------------------------------------------------------------------
# Construction
# --------------------------------------------------------------------------


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _relative_size(ds: Dataset, annotation_id: int) -> float:
    a = ds.annotations[annotation_id]
    im = ds.images[a.image_id]
    area = max(a.bbox.w, 0.0) * max(a.bbox.h, 0.0)
    return math.sqrt(area / (im.width * im.height))


def build_splits(dataset: Dataset, mode: str = "unified", seed: int = 0) -> SplitSpec:
    """Partition videos into train vs evaluation components, pick one
    reference annotation per evaluation instance, and split the remaining
    evaluation videos between val and test.

    Deterministic for a fixed (dataset, mode, seed).
    """
    if mode not in EVAL_FRACTION:
        raise SplitError(f"mode must be one of {sorted(EVAL_FRACTION)}, got {mode!r}")
    rng = random.Random(seed)

    instance_videos: dict[int, set[int]] = {}
    for a in dataset.annotations.values():
        if a.instance_id is None:
            continue
        video_id = dataset.images[a.image_id].video_id
        instance_videos.setdefault(a.instance_id, set()).add(video_id)
    if not instance_videos:
        raise SplitError("dataset has no instance annotations to split")

    uf = _UnionFind(sorted(dataset.videos))
    for videos in instance_videos.values():
        ordered = sorted(videos)
        for v in ordered[1:]:
            uf.union(ordered[0], v)

    components: dict[int, list[int]] = {}
    for v in sorted(dataset.videos):
        components.setdefault(uf.find(v), []).append(v)

    comp_instances: dict[int, set[int]] = {root: set() for root in components}
    for iid, videos in instance_videos.items():
        comp_instances[uf.find(next(iter(videos)))].add(iid)

    roots = [r for r in sorted(components) if comp_instances[r]]
    if len(roots) < 2:
        raise SplitError(
            "dataset too small: need at least 2 video groups with instances "
            "to separate train from evaluation"
        )

    rng.shuffle(roots)
    if mode == "instdet":
        # Prefer components whose instances come from rare categories, so
        # more held-out instances have categories absent from train.
        cat_count: dict[int, int] = {}
        inst_cat = dataset.instance_category_map()
        for iid, cat in inst_cat.items():
            cat_count[cat] = cat_count.get(cat, 0) + 1
        roots.sort(key=lambda r: min(cat_count[inst_cat[i]] for i in comp_instances[r]))

    total = sum(len(comp_instances[r]) for r in roots)
    want = EVAL_FRACTION[mode] * total
    eval_roots = []
    got = 0
    for r in roots:
        if got >= want or len(eval_roots) == len(roots) - 1:
            break
        eval_roots.append(r)
        got += len(comp_instances[r])
    if not eval_roots:
        raise SplitError("dataset too small: no component can be held out for evaluation")

    eval_root_set = set(eval_roots)
    train_videos = [v for r in sorted(components) if r not in eval_root_set for v in components[r]]
    train_images = {img for v in train_videos for img in dataset.images_by_video.get(v, [])}

    eval_instances = sorted(i for r in eval_roots for i in comp_instances[r])
    eval_videos = sorted(v for r in eval_roots for v in components[r])
    eval_images = {img for v in eval_videos for img in dataset.images_by_video.get(v, [])}

    # Reference per evaluation instance: the most visible annotation
    # (largest relative box size), annotation id as tie-break.
    ann_by_instance: dict[int, list[int]] = {}
    for aid in sorted(dataset.annotations):
        a = dataset.annotations[aid]
        if a.instance_id in set(eval_instances) and a.image_id in eval_images:
            ann_by_instance.setdefault(a.instance_id, []).append(aid)
    targets: dict[int, tuple[int, int]] = {}
    for iid in eval_instances:
        candidates = ann_by_instance.get(iid)
        if not candidates:
            raise SplitError(f"evaluation instance {iid} has no annotation in evaluation videos")
        best = min(candidates, key=lambda aid: (-_relative_size(dataset, aid), aid))
        targets[iid] = (dataset.annotations[best].image_id, best)

    reference_images = {img for img, _ in targets.values()}
    remaining = sorted(eval_images - reference_images)

    # Per-video val/test assignment over the leftover evaluation images.
    shuffled = list(eval_videos)
    rng.shuffle(shuffled)
    val_videos = set(shuffled[: max(1, len(shuffled) // 2)]) if shuffled else set()
    val_images = {img for img in remaining if dataset.images[img].video_id in val_videos}
    test_images = set(remaining) - val_images

    seen_categories = {
        dataset.annotations[aid].category_id
        for img in train_images
        for aid in dataset.annotations_by_image.get(img, [])
    }
    inst_cat = dataset.instance_category_map()
    unseen = frozenset(i for i in eval_instances if inst_cat[i] not in seen_categories)

    return SplitSpec(
        train_images=frozenset(train_images),
        val_images=frozenset(val_images),
        test_images=frozenset(test_images),
        targets=targets,
        unseen_instance_ids=unseen,
        mode=mode,
        seed=seed,
    )


# --------------------------------------------------------------------------
# Verification
# --------------------------------------------------------------------------


def seen_categories(dataset: Dataset, spec: SplitSpec) -> frozenset[int]:
    return frozenset(
        dataset.annotations[aid].category_id
        for img in spec.train_images
        for aid in dataset.annotations_by_image.get(img, [])
    )


def verify_splits(dataset: Dataset, spec: SplitSpec) -> list[Violation]:
    """Empty iff every structural invariant holds."""
    out: list[Violation] = []

    def check_images(ids, name):
        for img in sorted(ids):
            if img not in dataset.images:
                out.append(Violation("DANGLING_REF", f"{name} references missing image {img}", img))

    check_images(spec.train_images, "train split")
    check_images(spec.val_images, "val split")
    check_images(spec.test_images, "test split")

    named = [
        ("train", spec.train_images),
        ("val", spec.val_images),
        ("test", spec.test_images),
        ("target", spec.target_images),
    ]
    for i in range(len(named)):
        for j in range(i + 1, len(named)):
            shared = named[i][1] & named[j][1]
            if shared:
                out.append(
                    Violation(
                        "OVERLAP",
                        f"{named[i][0]} and {named[j][0]} splits share images {sorted(shared)[:5]}",
                    )
                )

    eval_instances = spec.eval_instance_ids
    for iid, (img, aid) in sorted(spec.targets.items()):
        ann = dataset.annotations.get(aid)
        if ann is None:
            out.append(Violation("DANGLING_REF", f"target for instance {iid} references missing annotation {aid}", iid))
            continue
        if ann.instance_id != iid or ann.image_id != img:
            out.append(
                Violation(
                    "BAD_REFERENCE",
                    f"target for instance {iid} points at annotation {aid} "
                    f"(instance {ann.instance_id}, image {ann.image_id}, expected image {img})",
                    iid,
                )
            )
            continue
        if img in spec.train_images:
            out.append(Violation("REFERENCE_IN_TRAIN", f"reference image {img} of instance {iid} is in train", iid))
        if img in spec.val_images or img in spec.test_images:
            out.append(Violation("REFERENCE_IN_EVAL", f"reference image {img} of instance {iid} is in val/test", iid))

    for img in sorted(spec.train_images):
        for aid in dataset.annotations_by_image.get(img, []):
            ann = dataset.annotations[aid]
            if ann.instance_id is not None and ann.instance_id in eval_instances:
                out.append(
                    Violation(
                        "LEAKED_INSTANCE",
                        f"evaluation instance {ann.instance_id} is annotated in train image {img}",
                        ann.instance_id,
                    )
                )

    seen = seen_categories(dataset, spec)
    inst_cat = dataset.instance_category_map()
    for iid in sorted(eval_instances):
        cat = inst_cat.get(iid)
        if cat is None:
            out.append(Violation("DANGLING_REF", f"evaluation instance {iid} has no annotations", iid))
            continue
        should_be_unseen = cat not in seen
        flagged = iid in spec.unseen_instance_ids
        if flagged and not should_be_unseen:
            out.append(
                Violation("BAD_UNSEEN_FLAG", f"instance {iid} marked unseen but category {cat} occurs in train", iid)
            )
        if should_be_unseen and not flagged:
            out.append(
                Violation("BAD_UNSEEN_FLAG", f"instance {iid} not marked unseen though category {cat} never trains", iid)
            )
    for iid in sorted(spec.unseen_instance_ids - eval_instances):
        out.append(Violation("BAD_UNSEEN_FLAG", f"unseen flag on non-evaluation instance {iid}", iid))
    return out
