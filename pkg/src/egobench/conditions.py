"""Capture-condition rules: distance and lighting classification, and the
ten canonical video configurations each main object is recorded under.

Boundary choices are load-bearing for reproducibility: a ratio of exactly
0.30 is medium (not near), exactly 0.20 is far (not medium), and a meter
reading of exactly 250 lux is dim.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from egobench.errors import IntegrityError
from egobench.schema import Dataset

NEAR_RATIO = 0.30
MEDIUM_RATIO = 0.20
BRIGHT_LUX = 250.0


@dataclass(frozen=True)
class CaptureConfig:
    video_slot: int  # 1..10
    distance: str
    motion: str
    background: str
    lighting: str

    def condition_tuple(self) -> tuple[str, str, str, str]:
        return (self.distance, self.motion, self.background, self.lighting)


_CANONICAL = (
    CaptureConfig(1, "near", "horizontal", "simple", "bright"),
    CaptureConfig(2, "medium", "horizontal", "simple", "bright"),
    CaptureConfig(3, "near", "horizontal", "simple", "dim"),
    CaptureConfig(4, "medium", "horizontal", "busy", "bright"),
    CaptureConfig(5, "far", "horizontal", "busy", "bright"),
    CaptureConfig(6, "medium", "vertical", "busy", "bright"),
    CaptureConfig(7, "medium", "combined", "busy", "bright"),
    CaptureConfig(8, "near", "horizontal", "busy", "dim"),
    CaptureConfig(9, "medium", "horizontal", "busy", "dim"),
    CaptureConfig(10, "far", "horizontal", "busy", "dim"),
)


def canonical_configs() -> list[CaptureConfig]:
    """The ten recording configurations, in slot order."""
    return list(_CANONICAL)


def classify_distance(object_scale: float, frame_scale: float) -> str:
    """Distance class from object scale (longer box dimension, pixels) and
    frame scale (shorter frame edge, pixels).

    near if the ratio exceeds 0.30, medium if it lies in (0.20, 0.30],
    far otherwise.
    """
    if object_scale <= 0 or frame_scale <= 0:
        raise ValueError(f"scales must be positive, got ({object_scale}, {frame_scale})")
    ratio = object_scale / frame_scale
    if ratio > NEAR_RATIO:
        return "near"
    if ratio > MEDIUM_RATIO:
        return "medium"
    return "far"


def classify_lighting(lux: float) -> str:
    """bright iff the reading is strictly above 250 lux."""
    if lux < 0:
        raise ValueError(f"lux must be non-negative, got {lux}")
    return "bright" if lux > BRIGHT_LUX else "dim"


@dataclass
class CoverageReport:
    """Which canonical slots an instance's videos cover."""

    instance_id: int
    # slot -> sorted video ids whose tags equal that slot's 4-tuple
    matched: dict[int, list[int]] = field(default_factory=dict)
    missing_slots: list[int] = field(default_factory=list)
    # videos of this instance matching none of the 10 rows
    unmatched_videos: list[int] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.missing_slots

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "matched": {str(slot): ids for slot, ids in sorted(self.matched.items())},
            "missing_slots": list(self.missing_slots),
            "unmatched_videos": list(self.unmatched_videos),
            "complete": self.complete,
        }


def check_video_coverage(dataset: Dataset, main_instance_id: int) -> CoverageReport:
    """Match each of the instance's videos against the canonical table.

    A video covers a slot when its (distance, motion, background, lighting)
    tags equal that slot's 4-tuple. Tags are trusted as ground truth; no
    per-frame reclassification happens here.
    """
    videos = sorted(
        v.id for v in dataset.videos.values() if v.main_instance_id == main_instance_id
    )
    if not videos:
        raise IntegrityError(
            f"no videos with main instance {main_instance_id}", code="UNKNOWN_INSTANCE"
        )
    by_tuple: dict[tuple, int] = {c.condition_tuple(): c.video_slot for c in _CANONICAL}
    report = CoverageReport(instance_id=main_instance_id)
    for vid in videos:
        slot = by_tuple.get(dataset.videos[vid].condition_tuple())
        if slot is None:
            report.unmatched_videos.append(vid)
        else:
            report.matched.setdefault(slot, []).append(vid)
    report.missing_slots = [c.video_slot for c in _CANONICAL if c.video_slot not in report.matched]
    return report


def relative_scale(box_w: float, box_h: float, frame_w: float, frame_h: float) -> float:
    """Object-scale / frame-scale ratio used by the distance rule."""
    if box_w <= 0 or box_h <= 0 or frame_w <= 0 or frame_h <= 0:
        raise ValueError("dimensions must be positive")
    return max(box_w, box_h) / min(frame_w, frame_h)
