"""Detection evaluation: prediction/ground-truth matching, precision/recall/F1,
101-point interpolated average precision, and mAP@50-95.

Matching is greedy in descending confidence (ties broken by best-IoU
descending, then input order): each prediction takes the unmatched same-class
ground truth with the highest IoU at or above the threshold, preferring the
smaller ground-truth index on exact IoU ties. mAP@50-95 averages AP over the
ten IoU thresholds 0.50, 0.55, ..., 0.95, per class first in multi-class data.

The single reported precision/recall/F1 triple is computed at IoU 0.50 from
the predictions surviving the configured confidence threshold; classes absent
from the ground truth are excluded from aggregate averages.
"""

from __future__ import annotations

from dataclasses import dataclass

from .detect import Detection, iou
from .labels import ClassMap, NormalizedBox

MAP_IOU_THRESHOLDS: tuple[float, ...] = tuple((50 + 5 * i) / 100 for i in range(10))
RECALL_GRID: tuple[float, ...] = tuple(i / 100 for i in range(101))
REPORT_IOU_THRESHOLD = 0.50
AGGREGATE_CLASS_NAME = "all"


class UndefinedMetricError(ValueError):
    """A metric has no defined value (e.g. mAP with no ground truth)."""


@dataclass(frozen=True)
class MatchOutcome:
    """Greedy matching result; per-prediction entries follow input order."""

    matched_gt: tuple  # per prediction: ground-truth index or None (FP)
    gt_matched: tuple  # per ground truth: True when some prediction took it

    @property
    def tp(self) -> int:
        return sum(1 for m in self.matched_gt if m is not None)

    @property
    def fp(self) -> int:
        return len(self.matched_gt) - self.tp

    @property
    def fn(self) -> int:
        return sum(1 for m in self.gt_matched if not m)


@dataclass(frozen=True)
class PRCurve:
    """(recall, precision) after each prefix of the confidence-descending sweep."""

    points: tuple  # tuple of (recall, precision)


def _best_iou(det: Detection, gts: list[NormalizedBox]) -> float:
    best = 0.0
    for g in gts:
        if g.class_id == det.box.class_id:
            best = max(best, iou(det.box, g))
    return best


def _processing_order(preds: list[Detection], gts: list[NormalizedBox]) -> list[int]:
    keyed = [
        (-preds[i].confidence, -_best_iou(preds[i], gts), i) for i in range(len(preds))
    ]
    keyed.sort()
    return [k[2] for k in keyed]


def match_predictions(
    preds: list[Detection], gts: list[NormalizedBox], iou_thresh: float
) -> MatchOutcome:
    """Match predictions to ground truths greedily by descending confidence."""
    if not 0.0 < iou_thresh < 1.0:
        raise ValueError(f"iou_thresh out of (0, 1): {iou_thresh}")
    matched: list = [None] * len(preds)
    taken = [False] * len(gts)
    for i in _processing_order(preds, gts):
        det = preds[i]
        best_j = None
        best = 0.0
        for j, g in enumerate(gts):
            if taken[j] or g.class_id != det.box.class_id:
                continue
            overlap = iou(det.box, g)
            if overlap >= iou_thresh and (best_j is None or overlap > best):
                best_j, best = j, overlap
        if best_j is not None:
            matched[i] = best_j
            taken[best_j] = True
    return MatchOutcome(tuple(matched), tuple(taken))


def precision_of(outcome: MatchOutcome) -> float:
    denom = outcome.tp + outcome.fp
    return outcome.tp / denom if denom else 0.0


def recall_of(outcome: MatchOutcome) -> float:
    denom = outcome.tp + outcome.fn
    return outcome.tp / denom if denom else 0.0


def f1(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    for name, v in (("precision", precision), ("recall", recall)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} out of [0, 1]: {v}")
    s = precision + recall
    return 0.0 if s == 0.0 else 2.0 * precision * recall / s


def _sweep(samples, iou_thresh: float):
    """Flatten per-image matches into one confidence-descending (conf, tp) list.

    samples: list of (preds, gts) pairs, one per image.
    Returns (sweep entries, total ground truths).
    """
    entries = []  # (-conf, -iou_key, global_index, is_tp)
    total_gt = 0
    index = 0
    for preds, gts in samples:
        total_gt += len(gts)
        outcome = match_predictions(preds, gts, iou_thresh)
        for i, det in enumerate(preds):
            j = outcome.matched_gt[i]
            iou_key = iou(det.box, gts[j]) if j is not None else _best_iou(det, gts)
            entries.append((-det.confidence, -iou_key, index, j is not None))
            index += 1
    entries.sort()
    return [(e[3]) for e in entries], total_gt


def pr_curve(samples, iou_thresh: float) -> PRCurve:
    """Precision-recall points from the confidence-descending sweep."""
    flags, total_gt = _sweep(samples, iou_thresh)
    points = []
    tp = 0
    for rank, is_tp in enumerate(flags, start=1):
        if is_tp:
            tp += 1
        recall = tp / total_gt if total_gt else 0.0
        points.append((recall, tp / rank))
    return PRCurve(tuple(points))


def _ap_from_curve(curve: PRCurve) -> float:
    total = 0.0
    for r in RECALL_GRID:
        best = 0.0
        for recall, precision in curve.points:
            if recall >= r and precision > best:
                best = precision
        total += best
    return total / len(RECALL_GRID)


def average_precision(preds, gts, iou_thresh: float) -> float:
    """101-point interpolated AP for one pooled set of predictions/truths."""
    return dataset_average_precision([(preds, gts)], iou_thresh)


def dataset_average_precision(samples, iou_thresh: float) -> float:
    """AP over per-image samples: match per image, sweep confidence globally."""
    return _ap_from_curve(pr_curve(samples, iou_thresh))


def _classes_in_gts(samples) -> list[int]:
    present = {g.class_id for _, gts in samples for g in gts}
    return sorted(present)


def _filter_class(samples, class_id: int):
    return [
        (
            [d for d in preds if d.box.class_id == class_id],
            [g for g in gts if g.class_id == class_id],
        )
        for preds, gts in samples
    ]


def map_50_95(preds, gts):
    """(per-threshold APs, their mean) for one pooled prediction/truth set."""
    return dataset_map_50_95([(preds, gts)])


def dataset_map_50_95(samples):
    """mAP@50-95 with per-class averaging at each of the 10 IoU thresholds.

    Returns (ap_per_threshold tuple of 10, mean). Raises UndefinedMetricError
    when the ground-truth set is empty.
    """
    classes = _classes_in_gts(samples)
    if not classes:
        raise UndefinedMetricError("mAP undefined: ground-truth set is empty")
    per_threshold = []
    for t in MAP_IOU_THRESHOLDS:
        aps = [
            dataset_average_precision(_filter_class(samples, c), t) for c in classes
        ]
        per_threshold.append(sum(aps) / len(aps))
    return tuple(per_threshold), sum(per_threshold) / len(per_threshold)


@dataclass(frozen=True)
class ClassEval:
    """Metrics for one class (or the aggregate row named "all")."""

    class_id: int  # -1 for the aggregate
    class_name: str
    ap_per_iou: tuple  # 10 APs at MAP_IOU_THRESHOLDS
    map_50_95: float
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalReport:
    classes: tuple
    aggregate: ClassEval
    confidence_threshold: float


def build_eval_report(
    samples,
    class_map: ClassMap | None = None,
    confidence_threshold: float = 0.25,
) -> EvalReport:
    """Full evaluation over per-image (predictions, ground-truths) samples.

    AP/mAP use every prediction; the reported precision/recall/F1 use only
    predictions at or above confidence_threshold, matched at IoU 0.50.
    """
    classes = _classes_in_gts(samples)
    if not classes:
        raise UndefinedMetricError("evaluation undefined: ground-truth set is empty")
    confident = [
        ([d for d in preds if d.confidence >= confidence_threshold], gts)
        for preds, gts in samples
    ]
    rows = []
    agg_tp = agg_fp = agg_fn = 0
    for c in classes:
        class_samples = _filter_class(samples, c)
        ap_per_iou = tuple(
            dataset_average_precision(class_samples, t) for t in MAP_IOU_THRESHOLDS
        )
        tp = fp = fn = 0
        for preds, gts in _filter_class(confident, c):
            outcome = match_predictions(preds, gts, REPORT_IOU_THRESHOLD)
            tp += outcome.tp
            fp += outcome.fp
            fn += outcome.fn
        agg_tp, agg_fp, agg_fn = agg_tp + tp, agg_fp + fp, agg_fn + fn
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        rows.append(
            ClassEval(
                class_id=c,
                class_name=class_map.name_of(c) if class_map else str(c),
                ap_per_iou=ap_per_iou,
                map_50_95=sum(ap_per_iou) / len(ap_per_iou),
                precision=p,
                recall=r,
                f1=f1(p, r),
            )
        )
    agg_ap = tuple(
        sum(row.ap_per_iou[i] for row in rows) / len(rows)
        for i in range(len(MAP_IOU_THRESHOLDS))
    )
    agg_p = agg_tp / (agg_tp + agg_fp) if agg_tp + agg_fp else 0.0
    agg_r = agg_tp / (agg_tp + agg_fn) if agg_tp + agg_fn else 0.0
    aggregate = ClassEval(
        class_id=-1,
        class_name=AGGREGATE_CLASS_NAME,
        ap_per_iou=agg_ap,
        map_50_95=sum(agg_ap) / len(agg_ap),
        precision=agg_p,
        recall=agg_r,
        f1=f1(agg_p, agg_r),
    )
    return EvalReport(tuple(rows), aggregate, confidence_threshold)


def serialize_report(report: EvalReport) -> str:
    """Key-value text document, one metric per line."""
    lines = [f"confidence_threshold {report.confidence_threshold:.6f}"]
    for row in (report.aggregate, *report.classes):
        key = "aggregate" if row.class_id == -1 else f"class.{row.class_id}"
        if row.class_id != -1:
            lines.append(f"{key}.name {row.class_name}")
        lines.append(f"{key}.map_50_95 {row.map_50_95:.6f}")
        lines.append(f"{key}.precision {row.precision:.6f}")
        lines.append(f"{key}.recall {row.recall:.6f}")
        lines.append(f"{key}.f1 {row.f1:.6f}")
    return "\n".join(lines) + "\n"


def report_csv(report: EvalReport) -> str:
    """CSV rows (class, iou_thresh, ap) for external plotting."""
    lines = ["class,iou_thresh,ap"]
    for row in (*report.classes, report.aggregate):
        name = AGGREGATE_CLASS_NAME if row.class_id == -1 else str(row.class_id)
        for t, ap in zip(MAP_IOU_THRESHOLDS, row.ap_per_iou):
            lines.append(f"{name},{t:.2f},{ap:.6f}")
    return "\n".join(lines) + "\n"
