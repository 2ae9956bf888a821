"""Dataset data model, JSON file formats, and validation.

Annotation file layout: one JSON object with keys "categories", "videos",
"images", "annotations", each an array of snake_case records. Prediction
file: JSON array of {"image_id", "category_id" | "instance_id",
"bbox": [x, y, w, h], "score"}. All ids are integers, all geometry is in
pixels with a top-left origin.

Unknown extra JSON fields are preserved on each record (``extra``) and
written back on save, but are otherwise ignored.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

from egobench.errors import IntegrityError, ParseError
from egobench.geometry import Box

DEVICES = frozenset({"vuzix", "aria", "rayban", "mobile"})
DISTANCES = frozenset({"near", "medium", "far"})
MOTIONS = frozenset({"horizontal", "vertical", "combined"})
BACKGROUNDS = frozenset({"simple", "busy"})
LIGHTINGS = frozenset({"bright", "dim"})

# Boxes may exceed image bounds by at most this many pixels.
BOX_BOUND_TOL = 0.5


@dataclass(frozen=True)
class Category:
    id: int
    name: str
    parent_id: Optional[int] = None
    extra: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class VideoMeta:
    id: int
    participant_id: int
    device: str
    main_instance_id: int
    main_category_id: int
    distance: str
    motion: str
    background: str
    lighting: str
    location: str = ""
    extra: Mapping = field(default_factory=dict)

    def condition_tuple(self) -> tuple[str, str, str, str]:
        return (self.distance, self.motion, self.background, self.lighting)


@dataclass(frozen=True)
class ImageRecord:
    id: int
    video_id: int
    width: int
    height: int
    frame_index: int
    neg_category_ids: frozenset[int] = frozenset()
    extra: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class BoxAnnotation:
    id: int
    image_id: int
    category_id: int
    bbox: Box
    instance_id: Optional[int] = None
    is_main: bool = False
    annotator_id: Optional[int] = None
    extra: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class Prediction:
    image_id: int
    label: int
    bbox: Box
    score: float


@dataclass(frozen=True)
class Violation:
    """One validator finding; violations are data, not failures."""

    code: str
    message: str
    subject_id: Optional[int] = None


class Dataset:
    """Immutable-after-load container of categories, videos, images, boxes.

    Safe for concurrent read by many workers once constructed.
    """

    def __init__(
        self,
        categories: Iterable[Category],
        videos: Iterable[VideoMeta],
        images: Iterable[ImageRecord],
        annotations: Iterable[BoxAnnotation],
    ):
        self.categories: dict[int, Category] = {}
        self.videos: dict[int, VideoMeta] = {}
        self.images: dict[int, ImageRecord] = {}
        self.annotations: dict[int, BoxAnnotation] = {}
        for c in categories:
            if c.id in self.categories:
                raise IntegrityError(f"duplicate category id {c.id}", code="DUPLICATE_ID")
            self.categories[c.id] = c
        for v in videos:
            if v.id in self.videos:
                raise IntegrityError(f"duplicate video id {v.id}", code="DUPLICATE_ID")
            self.videos[v.id] = v
        for im in images:
            if im.id in self.images:
                raise IntegrityError(f"duplicate image id {im.id}", code="DUPLICATE_ID")
            self.images[im.id] = im
        for a in annotations:
            if a.id in self.annotations:
                raise IntegrityError(f"duplicate annotation id {a.id}", code="DUPLICATE_ID")
            self.annotations[a.id] = a

        self.annotations_by_image: dict[int, list[int]] = {}
        for a in self.annotations.values():
            self.annotations_by_image.setdefault(a.image_id, []).append(a.id)
        for ids in self.annotations_by_image.values():
            ids.sort()

        self.images_by_video: dict[int, list[int]] = {}
        for im in self.images.values():
            self.images_by_video.setdefault(im.video_id, []).append(im.id)
        for ids in self.images_by_video.values():
            ids.sort()

    def instance_category_map(self) -> dict[int, int]:
        """First category seen per instance id (annotation-id order)."""
        out: dict[int, int] = {}
        for aid in sorted(self.annotations):
            a = self.annotations[aid]
            if a.instance_id is not None and a.instance_id not in out:
                out[a.instance_id] = a.category_id
        return out

    def image_annotations(self, image_id: int) -> list[BoxAnnotation]:
        return [self.annotations[i] for i in self.annotations_by_image.get(image_id, [])]

    def counts(self) -> tuple[int, int, int, int]:
        return (len(self.categories), len(self.videos), len(self.images), len(self.annotations))


# --------------------------------------------------------------------------
# Parsing helpers
# --------------------------------------------------------------------------


def _field(record: Mapping, key: str, ctx: str):
    if key not in record:
        raise ParseError(f"{ctx}: missing field '{key}'")
    return record[key]


def _int_field(record: Mapping, key: str, ctx: str) -> int:
    v = _field(record, key, ctx)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"{ctx}: field '{key}' must be an integer, got {v!r}")
    return v


def _opt_int_field(record: Mapping, key: str, ctx: str) -> Optional[int]:
    v = record.get(key)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"{ctx}: field '{key}' must be an integer or null, got {v!r}")
    return v


def _str_field(record: Mapping, key: str, ctx: str) -> str:
    v = _field(record, key, ctx)
    if not isinstance(v, str):
        raise ParseError(f"{ctx}: field '{key}' must be a string, got {v!r}")
    return v


def _enum_field(record: Mapping, key: str, allowed: frozenset[str], ctx: str) -> str:
    v = _str_field(record, key, ctx)
    if v not in allowed:
        raise ParseError(f"{ctx}: field '{key}' must be one of {sorted(allowed)}, got {v!r}")
    return v


def _bbox_field(record: Mapping, ctx: str) -> Box:
    v = _field(record, "bbox", ctx)
    if not isinstance(v, (list, tuple)) or len(v) != 4:
        raise ParseError(f"{ctx}: field 'bbox' must be [x, y, w, h], got {v!r}")
    vals = []
    for elem in v:
        if isinstance(elem, bool) or not isinstance(elem, (int, float)):
            raise ParseError(f"{ctx}: bbox entries must be numbers, got {elem!r}")
        if not math.isfinite(elem):
            raise ParseError(f"{ctx}: bbox entries must be finite, got {elem!r}")
        vals.append(float(elem))
    return Box(*vals)


def _extra(record: Mapping, known: frozenset[str]) -> dict:
    return {k: v for k, v in record.items() if k not in known}


_CATEGORY_FIELDS = frozenset({"id", "name", "parent_id"})
_VIDEO_FIELDS = frozenset(
    {
        "id",
        "participant_id",
        "device",
        "main_instance_id",
        "main_category_id",
        "distance",
        "motion",
        "background",
        "lighting",
        "location",
    }
)
_IMAGE_FIELDS = frozenset({"id", "video_id", "width", "height", "frame_index", "neg_category_ids"})
_ANNOTATION_FIELDS = frozenset(
    {"id", "image_id", "category_id", "instance_id", "bbox", "is_main", "annotator_id"}
)


def _parse_category(record: Mapping, idx: int) -> Category:
    ctx = f"categories[{idx}]"
    return Category(
        id=_int_field(record, "id", ctx),
        name=_str_field(record, "name", ctx),
        parent_id=_opt_int_field(record, "parent_id", ctx),
        extra=_extra(record, _CATEGORY_FIELDS),
    )


def _parse_video(record: Mapping, idx: int) -> VideoMeta:
    ctx = f"videos[{idx}]"
    return VideoMeta(
        id=_int_field(record, "id", ctx),
        participant_id=_int_field(record, "participant_id", ctx),
        device=_enum_field(record, "device", DEVICES, ctx),
        main_instance_id=_int_field(record, "main_instance_id", ctx),
        main_category_id=_int_field(record, "main_category_id", ctx),
        distance=_enum_field(record, "distance", DISTANCES, ctx),
        motion=_enum_field(record, "motion", MOTIONS, ctx),
        background=_enum_field(record, "background", BACKGROUNDS, ctx),
        lighting=_enum_field(record, "lighting", LIGHTINGS, ctx),
        location=str(record.get("location", "")),
        extra=_extra(record, _VIDEO_FIELDS),
    )


def _parse_image(record: Mapping, idx: int) -> ImageRecord:
    ctx = f"images[{idx}]"
    width = _int_field(record, "width", ctx)
    height = _int_field(record, "height", ctx)
    if width <= 0 or height <= 0:
        raise ParseError(f"{ctx}: width and height must be positive")
    frame_index = _int_field(record, "frame_index", ctx)
    if frame_index < 0:
        raise ParseError(f"{ctx}: frame_index must be non-negative")
    negs = record.get("neg_category_ids", [])
    if not isinstance(negs, list) or any(isinstance(n, bool) or not isinstance(n, int) for n in negs):
        raise ParseError(f"{ctx}: neg_category_ids must be a list of integers")
    return ImageRecord(
        id=_int_field(record, "id", ctx),
        video_id=_int_field(record, "video_id", ctx),
        width=width,
        height=height,
        frame_index=frame_index,
        neg_category_ids=frozenset(negs),
        extra=_extra(record, _IMAGE_FIELDS),
    )


def _parse_annotation(record: Mapping, idx: int) -> BoxAnnotation:
    ctx = f"annotations[{idx}]"
    return BoxAnnotation(
        id=_int_field(record, "id", ctx),
        image_id=_int_field(record, "image_id", ctx),
        category_id=_int_field(record, "category_id", ctx),
        bbox=_bbox_field(record, ctx),
        instance_id=_opt_int_field(record, "instance_id", ctx),
        is_main=bool(record.get("is_main", False)),
        annotator_id=_opt_int_field(record, "annotator_id", ctx),
        extra=_extra(record, _ANNOTATION_FIELDS),
    )


# --------------------------------------------------------------------------
# Loading / saving
# --------------------------------------------------------------------------


def dataset_from_dict(payload: Mapping, check_integrity: bool = True) -> Dataset:
    """Build a Dataset from an already-parsed annotation-file payload."""
    if not isinstance(payload, Mapping):
        raise ParseError("annotation file must be a JSON object")
    for key in ("categories", "videos", "images", "annotations"):
        if key not in payload:
            raise ParseError(f"annotation file: missing top-level key '{key}'")
        if not isinstance(payload[key], list):
            raise ParseError(f"annotation file: '{key}' must be an array")

    ds = Dataset(
        categories=[_parse_category(r, i) for i, r in enumerate(payload["categories"])],
        videos=[_parse_video(r, i) for i, r in enumerate(payload["videos"])],
        images=[_parse_image(r, i) for i, r in enumerate(payload["images"])],
        annotations=[_parse_annotation(r, i) for i, r in enumerate(payload["annotations"])],
    )
    if check_integrity:
        _check_integrity(ds)
    return ds


def load_dataset(path, check_integrity: bool = True) -> Dataset:
    """Load and cross-link an annotation file.

    Raises ParseError on malformed JSON or fields, IntegrityError on
    referential violations (named by the offending id). With
    ``check_integrity=False`` integrity problems are left for
    :func:`validate` to report as violations.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return dataset_from_dict(payload, check_integrity=check_integrity)


def _check_integrity(ds: Dataset) -> None:
    for im in ds.images.values():
        if im.video_id not in ds.videos:
            raise IntegrityError(
                f"image {im.id} references missing video {im.video_id}", code="MISSING_VIDEO"
            )
    for v in ds.videos.values():
        if v.main_category_id not in ds.categories:
            raise IntegrityError(
                f"video {v.id} references missing category {v.main_category_id}",
                code="MISSING_CATEGORY",
            )
    for a in ds.annotations.values():
        if a.image_id not in ds.images:
            raise IntegrityError(
                f"annotation {a.id} references missing image {a.image_id}", code="MISSING_IMAGE"
            )
        if a.category_id not in ds.categories:
            raise IntegrityError(
                f"annotation {a.id} references missing category {a.category_id}",
                code="MISSING_CATEGORY",
            )
    for c in ds.categories.values():
        if c.parent_id is not None and c.parent_id not in ds.categories:
            raise IntegrityError(
                f"category {c.id} references missing parent {c.parent_id}", code="MISSING_CATEGORY"
            )
    cycle = _find_taxonomy_cycle(ds)
    if cycle is not None:
        raise IntegrityError(f"category parent links form a cycle at {cycle}", code="CYCLIC_TAXONOMY")
    seen: dict[int, int] = {}
    for aid in sorted(ds.annotations):
        a = ds.annotations[aid]
        if a.instance_id is None:
            continue
        prev = seen.get(a.instance_id)
        if prev is None:
            seen[a.instance_id] = a.category_id
        elif prev != a.category_id:
            raise IntegrityError(
                f"instance {a.instance_id} has inconsistent category "
                f"({prev} vs {a.category_id} at annotation {a.id})",
                code="INSTANCE_CATEGORY_CONFLICT",
            )


def _find_taxonomy_cycle(ds: Dataset) -> Optional[int]:
    state: dict[int, int] = {}  # 1 = visiting, 2 = done
    for start in ds.categories:
        node = start
        path = []
        while node is not None and node in ds.categories and state.get(node) != 2:
            if state.get(node) == 1:
                return node
            state[node] = 1
            path.append(node)
            node = ds.categories[node].parent_id
        for n in path:
            state[n] = 2
    return None


def _category_to_dict(c: Category) -> dict:
    out = {"id": c.id, "name": c.name, "parent_id": c.parent_id}
    out.update(c.extra)
    return out


def _video_to_dict(v: VideoMeta) -> dict:
    out = {
        "id": v.id,
        "participant_id": v.participant_id,
        "device": v.device,
        "main_instance_id": v.main_instance_id,
        "main_category_id": v.main_category_id,
        "distance": v.distance,
        "motion": v.motion,
        "background": v.background,
        "lighting": v.lighting,
        "location": v.location,
    }
    out.update(v.extra)
    return out


def _image_to_dict(im: ImageRecord) -> dict:
    out = {
        "id": im.id,
        "video_id": im.video_id,
        "width": im.width,
        "height": im.height,
        "frame_index": im.frame_index,
        "neg_category_ids": sorted(im.neg_category_ids),
    }
    out.update(im.extra)
    return out


def _annotation_to_dict(a: BoxAnnotation) -> dict:
    out = {
        "id": a.id,
        "image_id": a.image_id,
        "category_id": a.category_id,
        "instance_id": a.instance_id,
        "bbox": [a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h],
        "is_main": a.is_main,
        "annotator_id": a.annotator_id,
    }
    out.update(a.extra)
    return out


def dataset_to_dict(ds: Dataset) -> dict:
    return {
        "categories": [_category_to_dict(ds.categories[i]) for i in sorted(ds.categories)],
        "videos": [_video_to_dict(ds.videos[i]) for i in sorted(ds.videos)],
        "images": [_image_to_dict(ds.images[i]) for i in sorted(ds.images)],
        "annotations": [_annotation_to_dict(ds.annotations[i]) for i in sorted(ds.annotations)],
    }


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(json.dumps(dataset_to_dict(ds), indent=2, sort_keys=True) + "\n")


def load_predictions(
    path,
    mode: str,
    dataset: Optional[Dataset] = None,
    extra_labels: Optional[Iterable[int]] = None,
) -> list[Prediction]:
    """Load a prediction file for the given mode ("category" or "instance").

    When ``dataset`` (or ``extra_labels``, e.g. a registered target set) is
    given, labels are checked against it: category ids must exist in the
    dataset, instance ids must be known instances or declared targets.
    """
    if mode not in ("category", "instance"):
        raise ParseError(f"mode must be 'category' or 'instance', got {mode!r}")
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return predictions_from_records(payload, mode, dataset=dataset, extra_labels=extra_labels)


def predictions_from_records(
    payload,
    mode: str,
    dataset: Optional[Dataset] = None,
    extra_labels: Optional[Iterable[int]] = None,
) -> list[Prediction]:
    if not isinstance(payload, list):
        raise ParseError("prediction file must be a JSON array")
    label_key = "category_id" if mode == "category" else "instance_id"

    known: Optional[set[int]] = None
    if dataset is not None or extra_labels is not None:
        known = set(extra_labels or ())
        if dataset is not None:
            if mode == "category":
                known.update(dataset.categories)
            else:
                known.update(dataset.instance_category_map())

    out = []
    for i, record in enumerate(payload):
        ctx = f"predictions[{i}]"
        if not isinstance(record, Mapping):
            raise ParseError(f"{ctx}: must be an object")
        image_id = _int_field(record, "image_id", ctx)
        label = _int_field(record, label_key, ctx)
        bbox = _bbox_field(record, ctx)
        score = _field(record, "score", ctx)
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise ParseError(f"{ctx}: score must be a number, got {score!r}")
        score = float(score)
        if not math.isfinite(score):
            raise ParseError(f"{ctx}: score must be finite")
        if score < 0.0 or score > 1.0:
            raise ParseError(f"{ctx}: score out of range [0, 1]: {score}")
        if bbox.w <= 0.0 or bbox.h <= 0.0:
            raise ParseError(f"{ctx}: degenerate box {bbox.as_tuple()}")
        if dataset is not None and image_id not in dataset.images:
            raise ParseError(f"{ctx}: unknown image id {image_id}")
        if known is not None and label not in known:
            raise ParseError(f"{ctx}: unknown {label_key} {label}")
        out.append(Prediction(image_id=image_id, label=label, bbox=bbox, score=score))
    return out


def subset_images(ds: Dataset, image_ids) -> Dataset:
    """Dataset restricted to the given images (and their annotations).

    Categories and videos are kept whole so references stay valid.
    """
    keep = set(image_ids)
    return Dataset(
        categories=ds.categories.values(),
        videos=ds.videos.values(),
        images=[im for i, im in sorted(ds.images.items()) if i in keep],
        annotations=[a for i, a in sorted(ds.annotations.items()) if a.image_id in keep],
    )


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


def validate(ds: Dataset) -> list[Violation]:
    """Check every dataset invariant; returns [] iff all hold.

    Covers referential integrity, the instance-to-category function, the
    verified-negative contract, box degeneracy and bounds, enum values,
    taxonomy acyclicity, and category names.
    """
    out: list[Violation] = []

    for c in ds.categories.values():
        if not c.name:
            out.append(Violation("EMPTY_NAME", f"category {c.id} has an empty name", c.id))
        if c.parent_id is not None and c.parent_id not in ds.categories:
            out.append(
                Violation("DANGLING_REF", f"category {c.id} references missing parent {c.parent_id}", c.id)
            )
    cycle = _find_taxonomy_cycle(ds)
    if cycle is not None:
        out.append(Violation("CYCLIC_TAXONOMY", f"category parent links form a cycle at {cycle}", cycle))

    for v in ds.videos.values():
        if v.main_category_id not in ds.categories:
            out.append(
                Violation(
                    "DANGLING_REF", f"video {v.id} references missing category {v.main_category_id}", v.id
                )
            )
        for fieldname, allowed in (
            ("device", DEVICES),
            ("distance", DISTANCES),
            ("motion", MOTIONS),
            ("background", BACKGROUNDS),
            ("lighting", LIGHTINGS),
        ):
            if getattr(v, fieldname) not in allowed:
                out.append(
                    Violation("BAD_ENUM", f"video {v.id} has invalid {fieldname} {getattr(v, fieldname)!r}", v.id)
                )

    for im in ds.images.values():
        if im.video_id not in ds.videos:
            out.append(Violation("DANGLING_REF", f"image {im.id} references missing video {im.video_id}", im.id))
        annotated = {ds.annotations[aid].category_id for aid in ds.annotations_by_image.get(im.id, [])}
        clash = annotated & im.neg_category_ids
        if clash:
            out.append(
                Violation(
                    "NEG_CONTRADICTION",
                    f"image {im.id} lists annotated categories {sorted(clash)} as negative",
                    im.id,
                )
            )

    instance_cat: dict[int, int] = {}
    for aid in sorted(ds.annotations):
        a = ds.annotations[aid]
        if a.image_id not in ds.images:
            out.append(Violation("DANGLING_REF", f"annotation {a.id} references missing image {a.image_id}", a.id))
        if a.category_id not in ds.categories:
            out.append(
                Violation("DANGLING_REF", f"annotation {a.id} references missing category {a.category_id}", a.id)
            )
        if a.bbox.w <= 0.0 or a.bbox.h <= 0.0:
            out.append(Violation("DEGENERATE_BOX", f"annotation {a.id} has degenerate box {a.bbox.as_tuple()}", a.id))
        im = ds.images.get(a.image_id)
        if im is not None:
            b = a.bbox
            if (
                b.x < -BOX_BOUND_TOL
                or b.y < -BOX_BOUND_TOL
                or b.x + b.w > im.width + BOX_BOUND_TOL
                or b.y + b.h > im.height + BOX_BOUND_TOL
            ):
                out.append(
                    Violation("BOX_OUT_OF_BOUNDS", f"annotation {a.id} exceeds image {im.id} bounds", a.id)
                )
        if a.instance_id is not None:
            prev = instance_cat.get(a.instance_id)
            if prev is None:
                instance_cat[a.instance_id] = a.category_id
            elif prev != a.category_id:
                out.append(
                    Violation(
                        "INSTANCE_CATEGORY_CONFLICT",
                        f"instance {a.instance_id} has inconsistent category ({prev} vs {a.category_id})",
                        a.instance_id,
                    )
                )
    return out
