"""Multi-annotator reconciliation for one image.

Each annotator labels every object in the image; agreement between two
annotators is an averaged-IoU score over one annotator's boxes, and the
annotator agreeing most with everyone else becomes the source of truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from egobench.errors import IntegrityError
from egobench.geometry import iou
from egobench.schema import BoxAnnotation


@dataclass(frozen=True)
class AnnotatorSet:
    """All annotators' boxes for a single image, keyed by annotator id."""

    image_id: int
    by_annotator: dict[int, tuple[BoxAnnotation, ...]]

    def __post_init__(self):
        for aid, anns in self.by_annotator.items():
            for a in anns:
                if a.image_id != self.image_id:
                    raise IntegrityError(
                        f"annotation {a.id} (annotator {aid}) is for image "
                        f"{a.image_id}, not {self.image_id}",
                        code="MIXED_IMAGE",
                    )

    @property
    def annotator_ids(self) -> list[int]:
        return sorted(self.by_annotator)


def annotator_sets(dataset) -> list[AnnotatorSet]:
    """Group a dataset's annotations into per-image AnnotatorSets.

    Images with fewer than two distinct annotator ids are skipped (nothing
    to reconcile). Annotations without an annotator_id are ignored.
    """
    out = []
    for image_id in sorted(dataset.images):
        groups: dict[int, list[BoxAnnotation]] = {}
        for a in dataset.image_annotations(image_id):
            if a.annotator_id is not None:
                groups.setdefault(a.annotator_id, []).append(a)
        if len(groups) >= 2:
            out.append(
                AnnotatorSet(
                    image_id=image_id,
                    by_annotator={k: tuple(v) for k, v in groups.items()},
                )
            )
    return out


def pairwise_agreement(a: Sequence[BoxAnnotation], b: Sequence[BoxAnnotation]) -> float:
    """Mean over a's boxes of the IoU with their greedy match in b.

    Matching is within-category, by descending IoU, each of b's boxes used
    at most once, and only strictly overlapping pairs can match; an
    unmatched box contributes 0. Empty a scores 1.0 against empty b and
    0.0 otherwise. Asymmetric by design: the mean is over a's boxes.
    """
    image_ids = {x.image_id for x in a} | {x.image_id for x in b}
    if len(image_ids) > 1:
        raise IntegrityError(f"annotations span images {sorted(image_ids)}", code="MIXED_IMAGE")
    if not a:
        return 1.0 if not b else 0.0

    pairs = []
    for i, box_a in enumerate(a):
        for j, box_b in enumerate(b):
            if box_a.category_id != box_b.category_id:
                continue
            v = iou(box_a.bbox, box_b.bbox)
            if v > 0.0:
                pairs.append((-v, i, j))
    pairs.sort()

    matched_iou = [0.0] * len(a)
    used_a = [False] * len(a)
    used_b = [False] * len(b)
    for neg_v, i, j in pairs:
        if used_a[i] or used_b[j]:
            continue
        used_a[i] = True
        used_b[j] = True
        matched_iou[i] = -neg_v
    return math.fsum(matched_iou) / len(a)


def consensus_scores(annotators: AnnotatorSet) -> dict[int, float]:
    """Per-annotator mean agreement against every other annotator."""
    ids = annotators.annotator_ids
    if len(ids) < 2:
        raise IntegrityError(
            f"image {annotators.image_id} has {len(ids)} annotator(s); need at least 2",
            code="TOO_FEW_ANNOTATORS",
        )
    scores = {}
    for k in ids:
        others = [
            pairwise_agreement(annotators.by_annotator[k], annotators.by_annotator[j])
            for j in ids
            if j != k
        ]
        scores[k] = math.fsum(others) / len(others)
    return scores


def select_source_of_truth(annotators: AnnotatorSet) -> int:
    """Annotator id with the highest consensus score; ties go to the
    lowest id."""
    scores = consensus_scores(annotators)
    return min(scores, key=lambda k: (-scores[k], k))
