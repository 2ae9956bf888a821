"""Compare the compiled matching kernels against the pure NumPy fallback.

Runs three stages: a bit-identity sweep over randomized inputs, per-op
timings at several workload sizes, and an end-to-end `eval category`
timing under each backend (subprocess, so the import-time selection
applies). The identity sweep is an assertion, not a report; a mismatch
aborts the run.

Usage: python3 benchmarks/bench_backends.py [--repeats N] [--seed S]
"""

import argparse
import json
import os
import subprocess
import sys
import tempfile
import time
import timeit

import numpy as np

from egobench._core import _pyops
from egobench.geometry import Box
from egobench.schema import (
    BoxAnnotation,
    Category,
    Dataset,
    ImageRecord,
    VideoMeta,
    save_dataset,
)

try:
    from egobench._core import _coreops
except ImportError:
    _coreops = None


def random_boxes(rng, n):
    xy = rng.uniform(0.0, 600.0, size=(n, 2))
    wh = rng.uniform(4.0, 120.0, size=(n, 2))
    return np.concatenate([xy, wh], axis=1)


def check_bitwise(rng, trials=50):
    for _ in range(trials):
        a = random_boxes(rng, int(rng.integers(1, 80)))
        b = random_boxes(rng, int(rng.integers(1, 60)))
        ref = _pyops.iou_matrix(a, b)
        got = _coreops.iou_matrix(a, b)
        if not np.array_equal(ref, got):
            raise SystemExit("FAIL: backends disagree on iou_matrix")
        for thresh in (0.5, 0.75):
            if not np.array_equal(
                _pyops.greedy_match_indices(ref, thresh),
                _coreops.greedy_match_indices(got, thresh),
            ):
                raise SystemExit("FAIL: backends disagree on greedy_match_indices")
    print(f"bit-identity: OK ({trials} randomized trials)")


def bench_ops(rng, repeats):
    print(f"{'workload':<12} {'op':<22} {'python':>12} {'compiled':>12} {'speedup':>9}")
    for n, m in ((20, 10), (100, 50), (400, 200)):
        a = random_boxes(rng, n)
        b = random_boxes(rng, m)
        ious = _pyops.iou_matrix(a, b)
        for op, call in (
            ("iou_matrix", lambda mod: mod.iou_matrix(a, b)),
            ("greedy_match_indices", lambda mod: mod.greedy_match_indices(ious, 0.5)),
        ):
            times = {}
            for name, mod in (("python", _pyops), ("compiled", _coreops)):
                number = 200
                best = min(timeit.repeat(lambda: call(mod), number=number, repeat=repeats))
                times[name] = best / number
            print(
                f"{f'{n}x{m}':<12} {op:<22} {times['python'] * 1e6:>10.1f}us "
                f"{times['compiled'] * 1e6:>10.1f}us {times['python'] / times['compiled']:>8.1f}x"
            )


def synth_dataset(rng, n_videos=16, frames=10, n_cats=8):
    cats = [Category(id=c, name=f"cat-{c:03d}") for c in range(1, n_cats + 1)]
    videos, images, anns = [], [], []
    img_id = 0
    ann_id = 0
    for v in range(1, n_videos + 1):
        main_cat = 1 + (v % n_cats)
        videos.append(
            VideoMeta(
                id=v,
                participant_id=v,
                device="mobile",
                main_instance_id=100 * v,
                main_category_id=main_cat,
                distance="near",
                motion="horizontal",
                background="simple",
                lighting="bright",
            )
        )
        for k in range(frames):
            img_id += 1
            clutter_cat = 1 + ((v + k) % n_cats)
            present = {main_cat, clutter_cat}
            spare = [c for c in range(1, n_cats + 1) if c not in present]
            negs = frozenset({spare[int(rng.integers(0, len(spare)))]}) if rng.random() < 0.5 else frozenset()
            images.append(
                ImageRecord(
                    id=img_id, video_id=v, width=1920, height=1440, frame_index=k, neg_category_ids=negs
                )
            )
            ann_id += 1
            anns.append(
                BoxAnnotation(
                    id=ann_id,
                    image_id=img_id,
                    category_id=main_cat,
                    bbox=Box(*rng.uniform(100.0, 800.0, 2), *rng.uniform(80.0, 400.0, 2)),
                    instance_id=100 * v,
                    is_main=True,
                )
            )
            if clutter_cat != main_cat:
                ann_id += 1
                anns.append(
                    BoxAnnotation(
                        id=ann_id,
                        image_id=img_id,
                        category_id=clutter_cat,
                        bbox=Box(*rng.uniform(100.0, 800.0, 2), *rng.uniform(40.0, 200.0, 2)),
                    )
                )
    return Dataset(cats, videos, images, anns)


def synth_predictions(rng, ds, per_image=8):
    records = []
    for img in ds.images.values():
        labels = sorted({a.category_id for a in ds.image_annotations(img.id)} | set(img.neg_category_ids))
        for _ in range(per_image):
            records.append(
                {
                    "image_id": img.id,
                    "category_id": labels[int(rng.integers(0, len(labels)))],
                    "bbox": [float(x) for x in (*rng.uniform(50.0, 900.0, 2), *rng.uniform(60.0, 420.0, 2))],
                    "score": float(rng.integers(0, 1001)) / 1000.0,
                }
            )
    return records


def bench_end_to_end(rng, repeats):
    with tempfile.TemporaryDirectory() as tmp:
        ds = synth_dataset(rng)
        ds_path = os.path.join(tmp, "dataset.json")
        preds_path = os.path.join(tmp, "preds.json")
        save_dataset(ds, ds_path)
        with open(preds_path, "w") as fh:
            json.dump(synth_predictions(rng, ds), fh)

        reports = {}
        for name, forced in (("compiled", None), ("python", "1")):
            env = dict(os.environ)
            env.pop("EGOBENCH_PURE_PYTHON", None)
            if forced:
                env["EGOBENCH_PURE_PYTHON"] = forced
            out = os.path.join(tmp, f"report_{name}.json")
            args = [
                sys.executable, "-m", "egobench.cli", "eval", "category",
                "--dataset", ds_path, "--preds", preds_path,
                "--threads", "1", "--out", out,
            ]
            best = None
            for _ in range(repeats):
                t0 = time.perf_counter()
                proc = subprocess.run(args, capture_output=True, text=True, env=env)
                elapsed = time.perf_counter() - t0
                if proc.returncode != 0:
                    raise SystemExit(f"FAIL: eval exited {proc.returncode}: {proc.stderr}")
                best = elapsed if best is None else min(best, elapsed)
            with open(out, "rb") as fh:
                reports[name] = fh.read()
            print(f"end-to-end eval category ({name:<8}): {best:.3f}s best of {repeats}")
        if reports["compiled"] != reports["python"]:
            raise SystemExit("FAIL: end-to-end reports differ between backends")
        print("end-to-end reports: byte-identical")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timing repeats per measurement")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if _coreops is None:
        raise SystemExit("compiled backend not built; run pip install -e . first")

    rng = np.random.default_rng(args.seed)
    check_bitwise(rng)
    bench_ops(rng, args.repeats)
    bench_end_to_end(rng, args.repeats)


if __name__ == "__main__":
    main()
