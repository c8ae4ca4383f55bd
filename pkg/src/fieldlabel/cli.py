"""Batch command-line entry points.

Subcommands: prep (collapse + split), augment, evaluate, compare, annotate,
report. Exit codes: 0 success, 1 validation error (bad flags, missing or
malformed inputs), 2 runtime failure. Every subcommand that uses randomness
accepts ``--seed``; identical invocations with the same seed produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .augment import AugmentSpec, augment_dataset
from .detect import BackendError, DetectorConfig, parse_prediction_file
from .labels import (
    ClassMap,
    DatasetConfig,
    load_class_map,
    read_label_file,
    serialize_dataset_config,
)
from .metrics import UndefinedMetricError, build_eval_report, report_csv, serialize_report
from .prep import (
    SPLIT_NAMES,
    collapse_classes,
    load_image_dir,
    save_image_dir,
    stratified_split,
)
from .session import (
    EndOfStream,
    SessionConfig,
    SourceError,
    SourceSpec,
    run_local_display,
    start_session,
)
from .stats import (
    DEFAULT_ALPHA,
    METRIC_NAMES,
    compare_configs,
    format_test_result,
    ingest_training_log,
    serialize_comparisons,
)

DESCRIPTOR_NAMES = ("data.yaml", "dataset.yaml")


class CliValidationError(ValueError):
    """Bad flags or unusable inputs; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; route through the
    # validation-error path instead so unknown flags map to exit code 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliValidationError(message)


def _find_descriptor(root: Path, search_parent: bool = False) -> Path:
    candidates = [root / name for name in DESCRIPTOR_NAMES]
    if search_parent:
        candidates += [root.parent / name for name in DESCRIPTOR_NAMES]
    for cand in candidates:
        if cand.is_file():
            return cand
    raise CliValidationError(
        f"no dataset descriptor ({' or '.join(DESCRIPTOR_NAMES)}) near {root}"
    )


def _load_dir_dataset(root: Path, search_parent: bool = False):
    if not root.is_dir():
        raise CliValidationError(f"not a directory: {root}")
    class_map = load_class_map(
        _find_descriptor(root, search_parent).read_text(encoding="utf-8")
    )
    try:
        ds = load_image_dir(root, class_map)
    except FileNotFoundError as exc:
        raise CliValidationError(str(exc)) from None
    if len(ds) == 0:
        raise CliValidationError(f"dataset at {root} is empty")
    return ds


def _parse_split(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise CliValidationError(f"--split needs three comma-separated ratios, got {text!r}")
    try:
        ratios = tuple(float(p) for p in parts)
    except ValueError:
        raise CliValidationError(f"--split ratios must be numbers, got {text!r}") from None
    return ratios


# --- subcommands ------------------------------------------------------------

def run_prep(args) -> int:
    ds = _load_dir_dataset(Path(args.in_dir))
    if args.single_class:
        ds = collapse_classes(ds, args.name)
    train, val, test = stratified_split(ds, _parse_split(args.split), seed=args.seed)
    out = Path(args.out)
    for name, split in zip(SPLIT_NAMES, (train, val, test)):
        save_image_dir(split, out / name)
    (out / "data.yaml").write_text(
        serialize_dataset_config(
            DatasetConfig(
                class_map=ds.class_map,
                train="train/images",
                val="val/images",
                test="test/images",
            )
        ),
        encoding="utf-8",
    )
    print(
        f"prep: {len(ds)} images -> train {len(train)} / val {len(val)} / "
        f"test {len(test)} under {out}"
    )
    return 0


def run_augment(args) -> int:
    ds = _load_dir_dataset(Path(args.in_dir), search_parent=True)
    spec = AugmentSpec(variants_per_image=args.variants, seed=args.seed)
    augmented = augment_dataset(ds, spec, include_originals=not args.no_originals)
    out = Path(args.out)
    save_image_dir(augmented, out)
    names_lines = "\n".join(
        f"  {i}: {name}" for i, name in enumerate(ds.class_map.names)
    )
    (out / "data.yaml").write_text(f"names:\n{names_lines}\n", encoding="utf-8")
    print(
        f"augment: {len(ds)} images -> {len(augmented)} "
        f"({args.variants} variants each, seed {args.seed}) under {out}"
    )
    return 0


def _scan_max_class(paths) -> int:
    top = 0
    for path in paths:
        for line in path.read_text(encoding="utf-8").splitlines():
            fields = line.split()
            if not fields:
                continue
            try:
                top = max(top, int(fields[0]))
            except ValueError:
                continue  # strict parsing reports this later with a line number
    return top


def run_evaluate(args) -> int:
    preds_dir = Path(args.preds)
    gt_dir = Path(args.gt)
    for d in (preds_dir, gt_dir):
        if not d.is_dir():
            raise CliValidationError(f"not a directory: {d}")
    gt_files = sorted(gt_dir.glob("*.txt"))
    pred_files = sorted(preds_dir.glob("*.txt"))
    if not gt_files:
        raise CliValidationError(f"no ground-truth label files in {gt_dir}")
    class_count = _scan_max_class(gt_files + pred_files) + 1
    stems = sorted({p.stem for p in gt_files} | {p.stem for p in pred_files})
    samples = []
    for stem in stems:
        gt_path = gt_dir / f"{stem}.txt"
        pred_path = preds_dir / f"{stem}.txt"
        gts = read_label_file(gt_path, class_count) if gt_path.exists() else []
        preds = (
            parse_prediction_file(pred_path.read_text(encoding="utf-8"), class_count)
            if pred_path.exists()
            else []
        )
        samples.append((preds, gts))
    try:
        report = build_eval_report(samples, confidence_threshold=args.conf)
    except UndefinedMetricError as exc:
        raise CliValidationError(str(exc)) from None
    base = args.out[:-4] if args.out.endswith(".txt") else args.out
    text_path = Path(base + ".txt")
    csv_path = Path(base + ".csv")
    text_path.write_text(serialize_report(report), encoding="utf-8")
    csv_path.write_text(report_csv(report), encoding="utf-8")
    print(f"evaluate: map_50_95 {report.aggregate.map_50_95:.6f}")
    print(f"report written to {text_path} and {csv_path}")
    return 0


def _parse_pairs(path: Path):
    if not path.is_file():
        raise CliValidationError(f"pairs file not found: {path}")
    pairs = []
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.replace(",", " ").split()
        if len(tokens) != 2:
            raise CliValidationError(
                f"pairs file line {line_no}: expected two config ids, got {raw!r}"
            )
        pairs.append((tokens[0], tokens[1]))
    if not pairs:
        raise CliValidationError(f"pairs file {path} has no pairs")
    return pairs


def run_compare(args) -> int:
    logs_dir = Path(args.logs)
    if not logs_dir.is_dir():
        raise CliValidationError(f"not a directory: {logs_dir}")
    log_files = sorted(logs_dir.glob("*.csv"))
    if not log_files:
        raise CliValidationError(f"no training logs (*.csv) in {logs_dir}")
    series = []
    for path in log_files:
        series.extend(
            ingest_training_log(path.read_text(encoding="utf-8"), config_id=path.stem)
        )
    pairs = _parse_pairs(Path(args.pairs))
    rows = compare_configs(
        series, pairs, metric=args.metric, variant=args.variant, alpha=args.alpha
    )
    Path(args.out).write_text(
        serialize_comparisons(rows, sample_unit=args.sample_unit), encoding="utf-8"
    )
    for row in rows:
        verdict = "significant" if row.result.significant else "not significant"
        print(
            f"{row.config_a} vs {row.config_b} [{row.metric}]: "
            f"{format_test_result(row.result)} ({verdict}; higher: {row.direction})"
        )
    print(f"comparison table written to {args.out}")
    return 0


def _parse_source(text: str) -> SourceSpec:
    kind, sep, location = text.partition(":")
    if kind in ("dir", "directory"):
        if not sep:
            raise CliValidationError("directory source needs a path, e.g. dir:frames/")
        return SourceSpec("directory", location)
    if kind == "video":
        if not sep:
            raise CliValidationError("video source needs a path, e.g. video:run.mp4")
        return SourceSpec("video", location)
    if kind == "camera":
        index = location or "0"
        try:
            return SourceSpec("camera", int(index))
        except ValueError:
            raise CliValidationError(f"camera index must be an integer, got {index!r}") from None
    if Path(text).is_dir():
        return SourceSpec("directory", text)
    raise CliValidationError(
        f"unrecognized source {text!r}; use dir:<path>, video:<path>, or camera[:N]"
    )


def run_annotate(args) -> int:
    spec = _parse_source(args.source)
    names = [n.strip() for n in args.names.split(",") if n.strip()]
    if not names:
        raise CliValidationError("--names must list at least one class")
    detector = DetectorConfig(
        confidence_threshold=args.conf,
        nms_iou_threshold=args.iou,
        backend_id=args.backend,
        model_path=args.model,
        deadline_ms=args.deadline_ms,
        per_class_nms=len(names) > 1,
    )
    config = SessionConfig(
        source=spec,
        detector=detector,
        output_root=Path(args.out),
        class_map=ClassMap(names),
        active_class=args.active_class,
        auto_save=args.auto_save,
    )
    if not (args.serve or args.auto_save or args.display):
        raise CliValidationError(
            "choose a mode: --serve <addr>, --display, or --auto-save"
        )
    try:
        session = start_session(config)
    except (SourceError, BackendError) as exc:
        raise CliValidationError(str(exc)) from None
    try:
        if args.serve:
            from .gateway import serve

            print(f"session {session.session_dir}; gateway on {args.serve}")
            serve(session, args.serve)
        elif args.display:
            run_local_display(session)
        else:
            while True:
                try:
                    session.process_next()
                except EndOfStream:
                    break
    finally:
        report = session.stop()
    stats = session.stats()
    print(
        f"annotate: {stats.frames_processed} frames, {stats.frames_saved} saved, "
        f"{stats.frames_skipped} skipped; report {report}"
    )
    return 0


def run_report(args) -> int:
    session_dir = Path(args.session)
    csv_path = session_dir / "session.csv"
    if not csv_path.is_file():
        raise CliValidationError(f"no session.csv under {session_dir}")
    text = csv_path.read_text(encoding="utf-8")
    Path(args.out).write_text(text, encoding="utf-8")
    by_outcome: dict[str, list[float]] = {}
    lines = text.splitlines()
    for line in lines[1:]:
        fields = line.split(",")
        if len(fields) != 4:
            continue
        by_outcome.setdefault(fields[1], []).append(float(fields[2]))
    for outcome in sorted(by_outcome):
        values = by_outcome[outcome]
        print(
            f"{outcome}: {len(values)} frames, "
            f"mean {sum(values) / len(values):.1f} ms"
        )
    print(f"latency records written to {args.out}")
    return 0


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fieldlabel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="collapse classes and split a dataset")
    p.add_argument("--in", dest="in_dir", required=True, help="dataset root (images/ + labels/ + data.yaml)")
    p.add_argument("--out", required=True, help="output root for train/val/test")
    p.add_argument("--single-class", action="store_true", help="collapse all classes into one")
    p.add_argument("--name", default="Plant", help="collapsed class name (default Plant)")
    p.add_argument("--split", default="0.7,0.15,0.15", help="train,val,test ratios")
    p.add_argument("--seed", type=int, default=0, help="shuffle seed")
    p.set_defaults(func=run_prep)

    p = sub.add_parser("augment", help="generate augmented training variants")
    p.add_argument("--in", dest="in_dir", required=True, help="split directory (images/ + labels/)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--variants", type=int, default=3, help="variants per image (default 3)")
    p.add_argument("--seed", type=int, default=0, help="augmentation seed")
    p.add_argument("--no-originals", action="store_true", help="emit only the variants")
    p.set_defaults(func=run_augment)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--preds", required=True, help="directory of prediction files (class cx cy w h conf)")
    p.add_argument("--gt", required=True, help="directory of ground-truth label files")
    p.add_argument("--out", required=True, help="report base path (writes .txt and .csv)")
    p.add_argument("--conf", type=float, default=0.25, help="reporting confidence threshold")
    p.set_defaults(func=run_evaluate)

    p = sub.add_parser("compare", help="t-test table across training logs")
    p.add_argument("--logs", required=True, help="directory of <config>.csv training logs")
    p.add_argument("--pairs", required=True, help="file of config id pairs, one pair per line")
    p.add_argument("--metric", default="f1", choices=METRIC_NAMES, help="metric to compare")
    p.add_argument("--variant", default="pooled", choices=("pooled", "welch"), help="t-test variant")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="significance level (default 0.05)")
    p.add_argument("--sample-unit", default="per_epoch", help="what one sample value represents")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=run_compare)

    p = sub.add_parser("annotate", help="run a live annotation session")
    p.add_argument("--source", required=True, help="dir:<path>, video:<path>, or camera[:N]")
    p.add_argument("--backend", default="mock", help="detector backend id")
    p.add_argument("--model", help="model artifact (mock: script file)")
    p.add_argument("--out", required=True, help="output root for session directories")
    p.add_argument("--serve", metavar="HOST:PORT", help="expose the session to the browser UI")
    p.add_argument("--display", action="store_true", help="local window with keyboard control")
    p.add_argument("--auto-save", action="store_true", help="save every frame without confirmation")
    p.add_argument("--names", default="Plant", help="comma-separated class names")
    p.add_argument("--active-class", type=int, default=0, help="class id for saved labels")
    p.add_argument("--conf", type=float, default=0.25, help="confidence threshold")
    p.add_argument("--iou", type=float, default=0.45, help="NMS IoU threshold")
    p.add_argument("--deadline-ms", type=float, default=None, help="inference deadline in ms")
    p.set_defaults(func=run_annotate)

    p = sub.add_parser("report", help="export latency records from a session")
    p.add_argument("--session", required=True, help="session directory")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=run_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
