"""In-process facade over the egobench core for pipeline code.

Exposes the dataset loaders plus the three evaluation entry points, with
reports returned as plain nested dicts/lists that are numerically
identical to the CLI's ``--out`` JSON for the same inputs. No metric
logic lives in this layer; every call delegates to the core, so the
core's internal thread pool does the work and nothing here holds a lock
around it. Core exceptions propagate unchanged, carrying their stable
``code`` attribute (PARSE_ERROR, EVAL_ERROR, ...).
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import egobench
from egobench import evaluation, schema
from egobench import splits as splits_mod
from egobench.errors import EgobenchError
from egobench.schema import load_dataset, load_predictions

__version__ = egobench.__version__

__all__ = [
    "BoundReport",
    "cl_evaluate",
    "evaluate",
    "federated_ap_category",
    "instance_ap",
    "load_dataset",
    "load_predictions",
]

# Reports are plain nested mappings/lists, exactly the parsed form of the
# CLI's machine report.
BoundReport = dict


def _bound(payload: dict) -> BoundReport:
    # round-trip through the canonical serializer so values match the
    # CLI's --out file bit for bit
    return json.loads(evaluation.serialize_report(payload))


def _resolve_threads(value) -> int:
    if value is not None:
        return max(1, int(value))
    env = os.environ.get("EGOBENCH_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise EgobenchError(f"EGOBENCH_THREADS must be an integer, got {env!r}", code="USAGE")
    return os.cpu_count() or 1


def federated_ap_category(dataset, predictions, config=None) -> BoundReport:
    report = evaluation.federated_ap_category(dataset, predictions, config)
    return _bound(report.to_dict())


def instance_ap(dataset, predictions, split_spec, config=None) -> BoundReport:
    report = evaluation.instance_ap(dataset, predictions, split_spec, config)
    return _bound(report.to_dict())


def cl_evaluate(
    stream,
    per_experience_predictions,
    dataset,
    config=None,
    split_spec=None,
    metric: str = "ap50",
) -> BoundReport:
    report = evaluation.cl_evaluate(
        stream, per_experience_predictions, dataset, config, split_spec=split_spec, metric=metric
    )
    return _bound(report.to_dict())


_COMMON_OPTIONS = {"threads", "max_dets"}
_ALLOWED_OPTIONS = {
    "category": _COMMON_OPTIONS | {"splits"},
    "instance": _COMMON_OPTIONS | {"splits", "subset"},
    "cl": _COMMON_OPTIONS | {"dataset", "splits", "metric"},
}


def evaluate(dataset_path, predictions_path, mode: str, options=None) -> BoundReport:
    """File-based evaluation with the CLI's exact semantics.

    mode "category"/"instance": dataset_path and predictions_path are the
    dataset and prediction JSON files; instance mode requires
    options["splits"]. mode "cl": dataset_path is the experience-stream
    JSON and predictions_path is the directory of experience_<i>.json
    files, or None to use the stream's precomputed per-experience values.
    """
    opts = dict(options or {})
    if mode not in _ALLOWED_OPTIONS:
        raise EgobenchError(
            f"mode must be one of {sorted(_ALLOWED_OPTIONS)}, got {mode!r}", code="USAGE"
        )
    unknown = sorted(set(opts) - _ALLOWED_OPTIONS[mode])
    if unknown:
        raise EgobenchError(
            f"unknown option(s) for {mode} mode: {', '.join(unknown)}", code="USAGE"
        )
    cfg = evaluation.EvalConfig(
        max_dets=opts.get("max_dets"),
        subset=opts.get("subset", "valtest"),
        threads=_resolve_threads(opts.get("threads")),
    )

    if mode == "category":
        ds = schema.load_dataset(dataset_path)
        preds = schema.load_predictions(predictions_path, "category", dataset=ds)
        if opts.get("splits"):
            spec = splits_mod.load_splits(opts["splits"])
            ds = schema.subset_images(ds, spec.val_images | spec.test_images)
            preds = [p for p in preds if p.image_id in ds.images]
        return _bound(evaluation.federated_ap_category(ds, preds, cfg).to_dict())

    if mode == "instance":
        if not opts.get("splits"):
            raise EgobenchError("instance mode needs options['splits']", code="USAGE")
        ds = schema.load_dataset(dataset_path)
        spec = splits_mod.load_splits(opts["splits"])
        preds = schema.load_predictions(
            predictions_path, "instance", dataset=ds, extra_labels=spec.targets
        )
        return _bound(evaluation.instance_ap(ds, preds, spec, cfg).to_dict())

    stream, precomputed = evaluation.load_stream(dataset_path)
    if predictions_path is None:
        if precomputed is None:
            raise EgobenchError(
                "stream has no map_per_experience; provide a predictions directory",
                code="USAGE",
            )
        eap = evaluation.experience_average_precision(precomputed)
        report = evaluation.CLReport(
            mode=stream.mode, metric="precomputed", map_per_experience=precomputed, eap=eap
        )
        return _bound(report.to_dict())
    if not opts.get("dataset"):
        raise EgobenchError("predictions-directory evaluation needs options['dataset']", code="USAGE")
    ds = schema.load_dataset(opts["dataset"])
    spec = None
    if stream.mode == "class_incremental_instance":
        if not opts.get("splits"):
            raise EgobenchError("instance-mode streams need options['splits']", code="USAGE")
        spec = splits_mod.load_splits(opts["splits"])
    per_exp = []
    for e in stream.experiences:
        path = Path(predictions_path) / f"experience_{e.index}.json"
        pred_mode = "instance" if stream.mode == "class_incremental_instance" else "category"
        extra = spec.targets if spec is not None else None
        per_exp.append(schema.load_predictions(path, pred_mode, dataset=ds, extra_labels=extra))
    report = evaluation.cl_evaluate(
        stream, per_exp, ds, cfg, split_spec=spec, metric=opts.get("metric", "ap50")
    )
    return _bound(report.to_dict())
