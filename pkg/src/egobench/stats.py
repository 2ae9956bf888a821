"""Dataset statistics as plain data tables.

Per-category tallies, normalized box-center histograms (main objects only
and all annotations), relative-size histograms, metadata tag counts, and
incidence summaries. Everything is emitted as CSV for downstream plotting;
nothing here renders figures.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from egobench.geometry import Box
from egobench.schema import Dataset, ImageRecord

CENTER_BINS = 50
SIZE_BINS = 40
# sqrt(area ratio) can slightly exceed 1 for boxes at the bounds tolerance;
# a full-frame box in a 2:1 frame tops out around sqrt(2).
SIZE_RANGE = (0.0, 1.5)

METADATA_FIELDS = ("device", "distance", "motion", "background", "lighting", "location")


def relative_size(box: Box, image: ImageRecord) -> float:
    """Square root of box-area over image-area."""
    if image.width <= 0 or image.height <= 0:
        raise ValueError(f"degenerate image {image.id}: {image.width}x{image.height}")
    area = max(box.w, 0.0) * max(box.h, 0.0)
    return math.sqrt(area / (image.width * image.height))


@dataclass
class StatsReport:
    # (category_id, name, instance_count, annotation_count), sorted by id
    category_rows: list[tuple[int, str, int, int]]
    center_hist_main: np.ndarray  # (bins, bins) int64, [y_bin, x_bin]
    center_hist_all: np.ndarray
    size_hist_main: np.ndarray  # (size_bins,) int64
    size_hist_all: np.ndarray
    size_range: tuple[float, float]
    metadata_counts: dict[str, dict[str, int]]
    summary: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "categories": [
                {"category_id": cid, "name": name, "instances": ic, "annotations": ac}
                for cid, name, ic, ac in self.category_rows
            ],
            "center_hist_main": self.center_hist_main.tolist(),
            "center_hist_all": self.center_hist_all.tolist(),
            "size_hist_main": self.size_hist_main.tolist(),
            "size_hist_all": self.size_hist_all.tolist(),
            "size_range": list(self.size_range),
            "metadata_counts": {k: dict(sorted(v.items())) for k, v in sorted(self.metadata_counts.items())},
            "summary": dict(sorted(self.summary.items())),
        }


def _center_bin(value: float, bins: int) -> int:
    idx = int(value * bins)
    return min(max(idx, 0), bins - 1)


def compute_stats(dataset: Dataset, center_bins: int = CENTER_BINS, size_bins: int = SIZE_BINS) -> StatsReport:
    """Single deterministic pass over the dataset."""
    if center_bins < 1 or size_bins < 1:
        raise ValueError("bin counts must be positive")

    cat_instances: dict[int, set[int]] = {c: set() for c in dataset.categories}
    cat_annotations: dict[int, int] = {c: 0 for c in dataset.categories}
    center_main = np.zeros((center_bins, center_bins), dtype=np.int64)
    center_all = np.zeros((center_bins, center_bins), dtype=np.int64)
    size_main = np.zeros(size_bins, dtype=np.int64)
    size_all = np.zeros(size_bins, dtype=np.int64)
    lo, hi = SIZE_RANGE
    width = (hi - lo) / size_bins

    instances_per_image: dict[int, set[int]] = {img: set() for img in dataset.images}
    images_per_instance: dict[int, set[int]] = {}

    for aid in sorted(dataset.annotations):
        a = dataset.annotations[aid]
        img = dataset.images.get(a.image_id)
        if img is None:
            continue
        cat_annotations[a.category_id] = cat_annotations.get(a.category_id, 0) + 1
        if a.instance_id is not None:
            cat_instances.setdefault(a.category_id, set()).add(a.instance_id)
            instances_per_image[a.image_id].add(a.instance_id)
            images_per_instance.setdefault(a.instance_id, set()).add(a.image_id)

        cy = _center_bin((a.bbox.y + a.bbox.h / 2.0) / img.height, center_bins)
        cx = _center_bin((a.bbox.x + a.bbox.w / 2.0) / img.width, center_bins)
        sbin = min(max(int((relative_size(a.bbox, img) - lo) / width), 0), size_bins - 1)
        center_all[cy, cx] += 1
        size_all[sbin] += 1
        if a.is_main:
            center_main[cy, cx] += 1
            size_main[sbin] += 1

    category_rows = [
        (cid, dataset.categories[cid].name, len(cat_instances.get(cid, ())), cat_annotations.get(cid, 0))
        for cid in sorted(dataset.categories)
    ]

    metadata_counts: dict[str, dict[str, int]] = {f: {} for f in METADATA_FIELDS}
    for vid in sorted(dataset.videos):
        v = dataset.videos[vid]
        for f in METADATA_FIELDS:
            val = str(getattr(v, f))
            metadata_counts[f][val] = metadata_counts[f].get(val, 0) + 1

    n_images = len(dataset.images)
    n_instances = len(images_per_instance)
    mean_inst_per_image = (
        math.fsum(len(s) for s in instances_per_image.values()) / n_images if n_images else 0.0
    )
    mean_images_per_inst = (
        math.fsum(len(s) for s in images_per_instance.values()) / n_instances if n_instances else 0.0
    )
    summary = {
        "categories": float(len(dataset.categories)),
        "videos": float(len(dataset.videos)),
        "images": float(n_images),
        "annotations": float(len(dataset.annotations)),
        "instances": float(n_instances),
        "mean_instances_per_image": mean_inst_per_image,
        "mean_images_per_instance": mean_images_per_inst,
    }
    return StatsReport(
        category_rows=category_rows,
        center_hist_main=center_main,
        center_hist_all=center_all,
        size_hist_main=size_main,
        size_hist_all=size_all,
        size_range=SIZE_RANGE,
        metadata_counts=metadata_counts,
        summary=summary,
    )


def write_csvs(report: StatsReport, out_dir) -> list[str]:
    """Emit one CSV per panel; returns the written file names."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name: str, header: list[str], rows) -> None:
        path = out_dir / name
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        written.append(name)

    emit(
        "category_counts.csv",
        ["category_id", "name", "instance_count", "annotation_count"],
        report.category_rows,
    )
    for scope, hist in (("main", report.center_hist_main), ("all", report.center_hist_all)):
        emit(
            f"center_histogram_{scope}.csv",
            ["y_bin", "x_bin", "count"],
            (
                (y, x, int(hist[y, x]))
                for y in range(hist.shape[0])
                for x in range(hist.shape[1])
                if hist[y, x]
            ),
        )
    lo, hi = report.size_range
    width = (hi - lo) / report.size_hist_all.shape[0]
    emit(
        "size_histogram.csv",
        ["scope", "bin_index", "low", "high", "count"],
        [
            (scope, i, lo + i * width, lo + (i + 1) * width, int(hist[i]))
            for scope, hist in (("main", report.size_hist_main), ("all", report.size_hist_all))
            for i in range(hist.shape[0])
        ],
    )
    emit(
        "metadata_counts.csv",
        ["field", "value", "count"],
        [
            (f, val, count)
            for f in sorted(report.metadata_counts)
            for val, count in sorted(report.metadata_counts[f].items())
        ],
    )
    emit("summary.csv", ["metric", "value"], sorted(report.summary.items()))
    return written
