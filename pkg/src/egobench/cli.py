"""Command-line entry point.

Exit codes: 0 success, 1 when a check finds violations (validate,
coverage, split --verify, kernels selftest), 2 on I/O, format, or usage
errors. Human-readable tables go to stdout with metric values scaled to
percentages; ``--out`` writes the raw machine report (values in [0, 1])
as key-sorted JSON, byte-identical for identical inputs regardless of
``--threads``.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from egobench import consensus as consensus_mod
from egobench import conditions, evaluation, selftest, splits, stats
from egobench.errors import EgobenchError
from egobench.schema import load_dataset, load_predictions, subset_images, validate


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


def _pct(value) -> str:
    return "-" if value is None else f"{100.0 * value:.2f}"


def _write_report(path, payload: dict) -> None:
    Path(path).write_text(evaluation.serialize_report(payload))


def _print_eval_report(report: evaluation.EvalReport, show_buckets: bool) -> None:
    print(f"mode: {report.mode}")
    print(f"entities evaluated: {report.num_evaluated} (skipped without ground truth: {report.num_skipped_no_gt})")
    print(f"AP    : {_pct(report.ap)}")
    print(f"AP50  : {_pct(report.ap50)}")
    print(f"AP75  : {_pct(report.ap75)}")
    if report.mode == "instance":
        print(f"AP50 seen   : {_pct(report.seen_ap50)}")
        print(f"AP50 unseen : {_pct(report.unseen_ap50)}")
    if show_buckets:
        for label, values in (
            ("size", report.size_ap50),
            ("lighting", report.lighting_ap50),
            ("background", report.background_ap50),
        ):
            row = "  ".join(f"{k}={_pct(v)}" for k, v in sorted(values.items()))
            print(f"AP50 by {label}: {row}")


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_validate(args) -> int:
    ds = load_dataset(args.dataset, check_integrity=False)
    violations = validate(ds)
    counts = ds.counts()
    print(f"categories={counts[0]} videos={counts[1]} images={counts[2]} annotations={counts[3]}")
    if not violations:
        print("OK: no violations")
        return 0
    for v in violations:
        print(f"{v.code}: {v.message}")
    print(f"{len(violations)} violation(s)")
    return 1


def cmd_coverage(args) -> int:
    ds = load_dataset(args.dataset)
    if args.instance is not None:
        instance_ids = [args.instance]
    else:
        instance_ids = sorted({v.main_instance_id for v in ds.videos.values()})
    reports = [conditions.check_video_coverage(ds, iid) for iid in instance_ids]
    incomplete = 0
    for r in reports:
        status = "complete" if r.complete else f"missing slots {r.missing_slots}"
        extra = f", unmatched videos {r.unmatched_videos}" if r.unmatched_videos else ""
        print(f"instance {r.instance_id}: {status}{extra}")
        if not r.complete:
            incomplete += 1
    print(f"{len(reports)} instance(s), {incomplete} incomplete")
    if args.out:
        _write_report(args.out, {"instances": [r.to_dict() for r in reports]})
    return 1 if incomplete else 0


def cmd_consensus(args) -> int:
    ds = load_dataset(args.dataset, check_integrity=False)
    sets = consensus_mod.annotator_sets(ds)
    if not sets:
        raise EgobenchError("no images with two or more annotators", code="NO_ANNOTATOR_SETS")
    rows = []
    for aset in sets:
        scores = consensus_mod.consensus_scores(aset)
        winner = consensus_mod.select_source_of_truth(aset)
        for annotator_id in aset.annotator_ids:
            rows.append((aset.image_id, annotator_id, scores[annotator_id], 1 if annotator_id == winner else 0))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["image_id", "annotator_id", "score", "selected"])
            w.writerows(rows)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        print("image_id  annotator_id  score   selected")
        for image_id, annotator_id, score, sel in rows:
            print(f"{image_id:<9} {annotator_id:<13} {score:.4f}  {sel}")
    return 0


def cmd_split(args) -> int:
    ds = load_dataset(args.dataset)
    if args.verify:
        spec = splits.load_splits(args.verify)
        violations = splits.verify_splits(ds, spec)
        if not violations:
            print("OK: split invariants hold")
            return 0
        for v in violations:
            print(f"{v.code}: {v.message}")
        print(f"{len(violations)} violation(s)")
        return 1
    spec = splits.build_splits(ds, mode=args.mode, seed=args.seed)
    problems = splits.verify_splits(ds, spec)
    if problems:  # construction bug; never expected
        for v in problems:
            print(f"{v.code}: {v.message}", file=sys.stderr)
        raise EgobenchError("built split failed verification", code="SPLIT_BUG")
    print(
        f"mode={spec.mode} seed={spec.seed} train_images={len(spec.train_images)} "
        f"val_images={len(spec.val_images)} test_images={len(spec.test_images)} "
        f"targets={len(spec.targets)} unseen_instances={len(spec.unseen_instance_ids)}"
    )
    if args.out:
        splits.save_splits(spec, args.out)
        print(f"wrote {args.out}")
    return 0


def _make_cfg(args, subset: str = "valtest") -> evaluation.EvalConfig:
    return evaluation.EvalConfig(
        max_dets=args.max_dets,
        subset=subset,
        threads=_resolve_threads(args.threads),
    )


def cmd_eval_category(args) -> int:
    ds = load_dataset(args.dataset)
    cfg = _make_cfg(args)
    # validate predictions against the full dataset, then narrow, so a
    # whole-dataset prediction file works with any split
    preds = load_predictions(args.preds, "category", dataset=ds)
    if args.splits:
        spec = splits.load_splits(args.splits)
        ds = subset_images(ds, spec.val_images | spec.test_images)
        preds = [p for p in preds if p.image_id in ds.images]
    report = evaluation.federated_ap_category(ds, preds, cfg)
    _print_eval_report(report, args.buckets)
    if args.out:
        _write_report(args.out, report.to_dict())
    return 0


def cmd_eval_instance(args) -> int:
    ds = load_dataset(args.dataset)
    spec = splits.load_splits(args.splits)
    cfg = _make_cfg(args, subset=args.subset)
    preds = load_predictions(args.preds, "instance", dataset=ds, extra_labels=spec.targets)
    report = evaluation.instance_ap(ds, preds, spec, cfg)
    _print_eval_report(report, args.buckets)
    if args.out:
        _write_report(args.out, report.to_dict())
    return 0


def cmd_eval_cl(args) -> int:
    stream, precomputed = evaluation.load_stream(args.stream)
    if args.preds_dir is None:
        if precomputed is None:
            raise EgobenchError(
                "stream has no map_per_experience; provide --preds-dir with per-experience predictions",
                code="USAGE",
            )
        eap = evaluation.experience_average_precision(precomputed)
        report = evaluation.CLReport(
            mode=stream.mode, metric="precomputed", map_per_experience=precomputed, eap=eap
        )
        print("per-experience mAP: " + "  ".join(f"{v:.2f}" for v in precomputed))
        print(f"EAP: {eap:.2f}")
    else:
        if args.dataset is None:
            raise EgobenchError("--preds-dir evaluation needs --dataset", code="USAGE")
        ds = load_dataset(args.dataset)
        spec = None
        if stream.mode == "class_incremental_instance":
            if args.splits is None:
                raise EgobenchError("instance-mode streams need --splits", code="USAGE")
            spec = splits.load_splits(args.splits)
        cfg = _make_cfg(args)
        per_exp = []
        for e in stream.experiences:
            path = Path(args.preds_dir) / f"experience_{e.index}.json"
            mode = "instance" if stream.mode == "class_incremental_instance" else "category"
            extra = spec.targets if spec is not None else None
            per_exp.append(load_predictions(path, mode, dataset=ds, extra_labels=extra))
        report = evaluation.cl_evaluate(stream, per_exp, ds, cfg, split_spec=spec, metric=args.metric)
        print(
            "per-experience mAP: "
            + "  ".join(f"{100.0 * v:.2f}" for v in report.map_per_experience)
        )
        print(f"EAP: {100.0 * report.eap:.2f}")
    if args.out:
        _write_report(args.out, report.to_dict())
    return 0


def cmd_stats(args) -> int:
    ds = load_dataset(args.dataset)
    report = stats.compute_stats(ds)
    for key, value in sorted(report.summary.items()):
        print(f"{key}: {value:g}")
    written = stats.write_csvs(report, args.out_dir)
    print(f"wrote {len(written)} files to {args.out_dir}: {', '.join(written)}")
    return 0


def cmd_kernels_selftest(args) -> int:
    results = selftest.run_selftest(probes=args.probes)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        detail = f"  {r.detail}" if r.detail else ""
        print(f"{status}  {r.name}{detail}")
        if not r.passed:
            failed += 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="egobench",
        description="Benchmark toolkit for egocentric object-detection datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a dataset file against every invariant")
    p.add_argument("--dataset", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("coverage", help="match videos against the 10 canonical capture configs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--instance", type=int, help="main instance id (default: all main instances)")
    p.add_argument("--out", help="write machine report JSON here")
    p.set_defaults(fn=cmd_coverage)

    p = sub.add_parser("consensus", help="per-image annotator agreement and source-of-truth pick")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", help="write CSV here (default: table on stdout)")
    p.set_defaults(fn=cmd_consensus)

    p = sub.add_parser("split", help="build or verify train/target/val/test splits")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", choices=sorted(splits.EVAL_FRACTION), default="unified")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the split spec JSON here")
    p.add_argument("--verify", help="verify this split spec instead of building one")
    p.set_defaults(fn=cmd_split)

    pe = sub.add_parser("eval", help="detection metrics")
    esub = pe.add_subparsers(dest="eval_mode", required=True)

    def add_common_eval(q):
        q.add_argument("--threads", type=int, help="worker threads (default: EGOBENCH_THREADS or all cores)")
        q.add_argument("--max-dets", type=int, default=None, help="per-image detection cap (default: uncapped)")
        q.add_argument("--out", help="write machine report JSON here")

    q = esub.add_parser("category", help="federated category-level AP")
    q.add_argument("--dataset", required=True)
    q.add_argument("--preds", required=True)
    q.add_argument("--splits", help="restrict evaluation to the split's val+test images")
    q.add_argument("--buckets", action="store_true", help="print size/lighting/background AP50 tables")
    add_common_eval(q)
    q.set_defaults(fn=cmd_eval_category)

    q = esub.add_parser("instance", help="per-instance AP over the evaluation split")
    q.add_argument("--dataset", required=True)
    q.add_argument("--preds", required=True)
    q.add_argument("--splits", required=True)
    q.add_argument("--subset", choices=("val", "test", "valtest"), default="valtest")
    q.add_argument("--buckets", action="store_true", help="print size/lighting/background AP50 tables")
    add_common_eval(q)
    q.set_defaults(fn=cmd_eval_instance)

    q = esub.add_parser("cl", help="per-experience mAP and their average")
    q.add_argument("--stream", required=True, help="experience stream JSON")
    q.add_argument("--preds-dir", help="directory with experience_<i>.json prediction files")
    q.add_argument("--dataset")
    q.add_argument("--splits")
    q.add_argument("--metric", choices=("ap", "ap50", "ap75"), default="ap50")
    add_common_eval(q)
    q.set_defaults(fn=cmd_eval_cl)

    p = sub.add_parser("stats", help="dataset statistics as CSV tables")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_stats)

    pk = sub.add_parser("kernels", help="numerical kernel checks")
    ksub = pk.add_subparsers(dest="kernels_cmd", required=True)
    q = ksub.add_parser("selftest", help="run fixture and gradient suites")
    q.add_argument("--probes", type=int, default=120, help="gradient probes per op")
    q.set_defaults(fn=cmd_kernels_selftest)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except EgobenchError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error [IO_ERROR]: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
