"""Evaluation metrics: greedy matching, PR sweeps, 101-point AP, mAP@50-95,
and report serialization — all checked against from-scratch oracle
implementations and hand-derived worked values."""

from __future__ import annotations

import numpy as np
import pytest

from fieldlabel.detect import Detection
from fieldlabel.labels import ClassMap, NormalizedBox
from fieldlabel.metrics import (
    AGGREGATE_CLASS_NAME,
    MAP_IOU_THRESHOLDS,
    RECALL_GRID,
    REPORT_IOU_THRESHOLD,
    UndefinedMetricError,
    average_precision,
    build_eval_report,
    dataset_average_precision,
    dataset_map_50_95,
    f1,
    map_50_95,
    match_predictions,
    pr_curve,
    precision_of,
    recall_of,
    report_csv,
    serialize_report,
)
from oracles import ap_reference, match_reference


def gt(class_id, cx, cy, w, h) -> NormalizedBox:
    return NormalizedBox(class_id, cx, cy, w, h)


def pred(class_id, cx, cy, w, h, conf) -> Detection:
    return Detection(NormalizedBox(class_id, cx, cy, w, h), conf)


def perturbed_instance(rng, n_gt: int, class_count: int = 3):
    """Ground truths plus predictions that hover near them: jittered copies
    (rich tp/fp structure) and a few stray boxes."""
    gts, preds = [], []
    for _ in range(n_gt):
        w = float(rng.uniform(0.1, 0.3))
        h = float(rng.uniform(0.1, 0.3))
        cx = float(rng.uniform(0.2, 0.8))
        cy = float(rng.uniform(0.2, 0.8))
        cls = int(rng.integers(0, class_count))
        gts.append(gt(cls, cx, cy, w, h))
        for _ in range(int(rng.integers(0, 3))):
            jit = lambda v, lo, hi: float(np.clip(v + rng.uniform(-0.04, 0.04), lo, hi))
            pw, ph = w * float(rng.uniform(0.8, 1.2)), h * float(rng.uniform(0.8, 1.2))
            pcx = jit(cx, pw / 2, 1 - pw / 2)
            pcy = jit(cy, ph / 2, 1 - ph / 2)
            pcls = cls if rng.random() < 0.85 else int(rng.integers(0, class_count))
            preds.append(pred(pcls, pcx, pcy, pw, ph, float(rng.uniform(0.05, 1.0))))
    for _ in range(int(rng.integers(0, 3))):
        preds.append(
            pred(
                int(rng.integers(0, class_count)),
                float(rng.uniform(0.3, 0.7)),
                float(rng.uniform(0.3, 0.7)),
                0.1,
                0.1,
                float(rng.uniform(0.05, 1.0)),
            )
        )
    return preds, gts


class TestConstants:
    def test_map_thresholds(self):
        assert MAP_IOU_THRESHOLDS == (
            0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95,
        )

    def test_recall_grid(self):
        assert len(RECALL_GRID) == 101
        assert RECALL_GRID[0] == 0.0
        assert RECALL_GRID[-1] == 1.0
        assert RECALL_GRID[50] == 0.5

    def test_report_threshold(self):
        assert REPORT_IOU_THRESHOLD == 0.50


class TestMatching:
    def test_obvious_assignment(self):
        gts = [gt(0, 0.3, 0.3, 0.2, 0.2), gt(0, 0.7, 0.7, 0.2, 0.2)]
        preds = [
            pred(0, 0.3, 0.3, 0.2, 0.2, 0.9),
            pred(0, 0.7, 0.7, 0.2, 0.2, 0.8),
        ]
        outcome = match_predictions(preds, gts, 0.5)
        assert outcome.matched_gt == (0, 1)
        assert outcome.gt_matched == (True, True)
        assert (outcome.tp, outcome.fp, outcome.fn) == (2, 0, 0)

    def test_higher_confidence_wins_contested_gt(self):
        g = [gt(0, 0.5, 0.5, 0.2, 0.2)]
        preds = [
            pred(0, 0.5, 0.5, 0.2, 0.2, 0.6),
            pred(0, 0.5, 0.5, 0.2, 0.2, 0.9),
        ]
        outcome = match_predictions(preds, g, 0.5)
        assert outcome.matched_gt == (None, 0)

    def test_equal_confidence_higher_iou_processed_first(self):
        g = [gt(0, 0.5, 0.5, 0.5, 0.5)]
        worse = pred(0, 0.5, 0.5, 0.5, 0.3125, 0.7)   # IoU 0.625
        better = pred(0, 0.5, 0.5, 0.5, 0.4375, 0.7)  # IoU 0.875
        outcome = match_predictions([worse, better], g, 0.5)
        assert outcome.matched_gt == (None, 0)

    def test_iou_tie_takes_smaller_gt_index(self):
        gts = [gt(0, 0.3, 0.5, 0.25, 0.25), gt(0, 0.7, 0.5, 0.25, 0.25)]
        centered = pred(0, 0.5, 0.5, 0.75, 0.25, 0.9)  # equal overlap with both
        outcome = match_predictions([centered, centered], gts, 0.05)
        assert outcome.matched_gt[0] == 0 or outcome.matched_gt[1] == 0

    def test_each_gt_matched_at_most_once(self):
        g = [gt(0, 0.5, 0.5, 0.2, 0.2)]
        preds = [pred(0, 0.5, 0.5, 0.2, 0.2, c) for c in (0.9, 0.8, 0.7)]
        outcome = match_predictions(preds, g, 0.5)
        assert outcome.matched_gt == (0, None, None)
        assert (outcome.tp, outcome.fp, outcome.fn) == (1, 2, 0)

    def test_class_mismatch_never_matches(self):
        g = [gt(1, 0.5, 0.5, 0.2, 0.2)]
        outcome = match_predictions([pred(0, 0.5, 0.5, 0.2, 0.2, 0.9)], g, 0.5)
        assert outcome.matched_gt == (None,)
        assert outcome.fn == 1

    def test_threshold_boundary_inclusive(self):
        g = [gt(0, 0.5, 0.5, 0.5, 0.5)]
        exact = pred(0, 0.5, 0.5, 0.5, 0.375, 0.9)  # IoU exactly 0.75
        assert match_predictions([exact], g, 0.75).tp == 1
        assert match_predictions([exact], g, 0.7500001).tp == 0

    def test_prediction_takes_best_available_gt(self):
        gts = [gt(0, 0.5, 0.5, 0.5, 0.5), gt(0, 0.5, 0.5, 0.5, 0.375)]
        p = pred(0, 0.5, 0.5, 0.5, 0.375, 0.9)  # IoU 0.75 with gt0, 1.0 with gt1
        outcome = match_predictions([p], gts, 0.5)
        assert outcome.matched_gt == (1,)

    def test_empty_inputs(self):
        outcome = match_predictions([], [], 0.5)
        assert (outcome.tp, outcome.fp, outcome.fn) == (0, 0, 0)
        assert precision_of(outcome) == 0.0
        assert recall_of(outcome) == 0.0

    def test_threshold_validated(self):
        with pytest.raises(ValueError):
            match_predictions([], [], 0.0)

    def test_matches_candidate_table_oracle(self, rng):
        for _ in range(200):
            preds, gts = perturbed_instance(rng, int(rng.integers(1, 6)))
            threshold = float(rng.uniform(0.3, 0.8))
            outcome = match_predictions(preds, gts, threshold)
            _, assigned = match_reference(preds, gts, threshold)
            assert list(outcome.matched_gt) == assigned


class TestPrecisionRecallF1:
    def test_counts_to_rates(self):
        gts = [gt(0, 0.3, 0.3, 0.2, 0.2), gt(0, 0.7, 0.7, 0.2, 0.2)]
        preds = [
            pred(0, 0.3, 0.3, 0.2, 0.2, 0.9),
            pred(0, 0.1, 0.9, 0.1, 0.1, 0.8),
        ]
        outcome = match_predictions(preds, gts, 0.5)
        assert precision_of(outcome) == 0.5
        assert recall_of(outcome) == 0.5

    def test_f1_worked_value(self):
        assert f1(0.6, 0.8) == pytest.approx(0.6857142857142857, abs=1e-15)

    def test_f1_zero_convention(self):
        assert f1(0.0, 0.0) == 0.0

    def test_f1_of_equal_rates_is_the_rate(self):
        assert f1(0.7, 0.7) == pytest.approx(0.7)

    def test_f1_validates_inputs(self):
        with pytest.raises(ValueError):
            f1(1.2, 0.5)
        with pytest.raises(ValueError):
            f1(0.5, -0.1)


class TestAveragePrecision:
    def test_perfect_single_detection(self):
        g = [gt(0, 0.5, 0.5, 0.2, 0.2)]
        assert average_precision([pred(0, 0.5, 0.5, 0.2, 0.2, 0.9)], g, 0.5) == 1.0

    def test_no_predictions_gives_zero(self):
        assert average_precision([], [gt(0, 0.5, 0.5, 0.2, 0.2)], 0.5) == 0.0

    def test_one_tp_one_fp_over_two_gts_gives_51_of_101(self):
        # TP first (recall 0.5, precision 1.0), FP second: interpolated
        # precision is 1.0 on the 51 grid points up to recall 0.50, then 0.
        gts = [gt(0, 0.3, 0.3, 0.2, 0.2), gt(0, 0.7, 0.7, 0.2, 0.2)]
        preds = [
            pred(0, 0.3, 0.3, 0.2, 0.2, 0.9),
            pred(0, 0.1, 0.9, 0.1, 0.1, 0.8),
        ]
        ap = average_precision(preds, gts, 0.5)
        assert ap == pytest.approx(51 / 101, abs=1e-12)

    def test_equal_confidence_ties_ranked_by_iou(self):
        # The true positive sorts ahead of the confidence-tied false
        # positive (higher IoU key), so interpolated precision stays 1.0.
        g = [gt(0, 0.5, 0.5, 0.2, 0.2)]
        preds = [
            pred(0, 0.1, 0.1, 0.1, 0.1, 0.7),
            pred(0, 0.5, 0.5, 0.2, 0.2, 0.7),
        ]
        assert average_precision(preds, g, 0.5) == 1.0

    def test_input_order_invariance_with_duplicate_confidences(self, rng):
        preds, gts = perturbed_instance(rng, 4)
        preds = [Detection(p.box, round(p.confidence * 4) / 4) for p in preds]
        baseline = average_precision(preds, gts, 0.5)
        for _ in range(5):
            shuffled = list(preds)
            rng.shuffle(shuffled)
            assert average_precision(shuffled, gts, 0.5) == baseline

    def test_matches_per_prefix_oracle(self, rng):
        for _ in range(200):
            preds, gts = perturbed_instance(rng, int(rng.integers(1, 6)))
            threshold = float(rng.uniform(0.3, 0.8))
            assert average_precision(preds, gts, threshold) == pytest.approx(
                ap_reference(preds, gts, threshold), abs=1e-9
            )

    def test_per_image_matching_is_isolated(self):
        # Two images, one gt each; both predictions sit in image one, so the
        # second can never claim image two's gt even though it overlaps it
        # in normalized coordinates.
        g = gt(0, 0.5, 0.5, 0.2, 0.2)
        samples = [
            ([pred(0, 0.5, 0.5, 0.2, 0.2, 0.9), pred(0, 0.5, 0.5, 0.2, 0.2, 0.8)], [g]),
            ([], [g]),
        ]
        assert dataset_average_precision(samples, 0.5) == pytest.approx(51 / 101)


class TestPrCurve:
    def test_point_per_prediction(self, rng):
        preds, gts = perturbed_instance(rng, 4)
        curve = pr_curve([(preds, gts)], 0.5)
        assert len(curve.points) == len(preds)

    def test_recall_is_monotone_and_bounded(self, rng):
        for _ in range(20):
            preds, gts = perturbed_instance(rng, 5)
            curve = pr_curve([(preds, gts)], 0.5)
            recalls = [r for r, _ in curve.points]
            assert recalls == sorted(recalls)
            for r, p in curve.points:
                assert 0.0 <= r <= 1.0
                assert 0.0 <= p <= 1.0


class TestMap5095:
    def test_self_evaluation_is_perfect(self, rng):
        preds, gts = [], []
        for _ in range(20):
            g = gt(int(rng.integers(0, 3)), 0.5, 0.5, 0.2, 0.2)
            g = NormalizedBox(
                g.class_id,
                float(rng.uniform(0.2, 0.8)),
                float(rng.uniform(0.2, 0.8)),
                float(rng.uniform(0.05, 0.3)),
                float(rng.uniform(0.05, 0.3)),
            )
            gts.append(g)
            preds.append(Detection(g, 1.0))
        per_iou, mean = map_50_95(preds, gts)
        assert per_iou == tuple([1.0] * 10)
        assert mean == 1.0

    def test_iou_quality_determines_threshold_cutoff(self):
        # Single prediction with IoU exactly 0.71875 against its gt: a true
        # positive at thresholds 0.50-0.70, a false positive from 0.75 up,
        # so exactly half the thresholds score 1.0.
        g = [gt(0, 0.5, 0.5, 0.5, 0.5)]
        p = [pred(0, 0.5, 0.5, 0.5, 0.359375, 0.9)]
        per_iou, mean = map_50_95(p, g)
        assert per_iou == (1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        assert mean == 0.5

    def test_classes_averaged_before_thresholds(self):
        # Class 0: one gt, found perfectly (AP 1). Class 1: three gts, all
        # missed (AP 0). Macro averaging gives 0.5 regardless of gt counts.
        samples = [
            (
                [pred(0, 0.5, 0.5, 0.2, 0.2, 0.9)],
                [
                    gt(0, 0.5, 0.5, 0.2, 0.2),
                    gt(1, 0.2, 0.2, 0.1, 0.1),
                    gt(1, 0.5, 0.8, 0.1, 0.1),
                    gt(1, 0.8, 0.2, 0.1, 0.1),
                ],
            )
        ]
        per_iou, mean = dataset_map_50_95(samples)
        assert mean == pytest.approx(0.5)

    def test_empty_ground_truth_is_undefined(self):
        with pytest.raises(UndefinedMetricError):
            map_50_95([pred(0, 0.5, 0.5, 0.2, 0.2, 0.9)], [])

    def test_stray_class_predictions_ignored(self):
        g = [gt(0, 0.5, 0.5, 0.2, 0.2)]
        base = [pred(0, 0.5, 0.5, 0.2, 0.2, 0.9)]
        with_stray = base + [pred(7, 0.3, 0.3, 0.1, 0.1, 0.95)]
        assert map_50_95(base, g) == map_50_95(with_stray, g)


class TestEvalReport:
    def make_samples(self, rng, n_images=5):
        return [(p, g) for p, g in (perturbed_instance(rng, 3) for _ in range(n_images))]

    def test_self_evaluation_report(self, rng):
        samples = []
        for _ in range(5):
            _, gts = perturbed_instance(rng, 3)
            samples.append(([Detection(g, 1.0) for g in gts], gts))
        report = build_eval_report(samples, confidence_threshold=0.25)
        assert report.aggregate.map_50_95 == 1.0
        assert report.aggregate.precision == 1.0
        assert report.aggregate.recall == 1.0
        assert report.aggregate.f1 == 1.0

    def test_low_confidence_counts_for_ap_not_reported_rates(self):
        g = [gt(0, 0.5, 0.5, 0.2, 0.2)]
        samples = [([pred(0, 0.5, 0.5, 0.2, 0.2, 0.2)], g)]
        report = build_eval_report(samples, confidence_threshold=0.25)
        assert report.aggregate.map_50_95 == 1.0  # sweep uses every prediction
        assert report.aggregate.recall == 0.0     # reported rates only >= 0.25
        assert report.aggregate.precision == 0.0

    def test_class_names_resolved(self, rng):
        samples = self.make_samples(rng)
        cmap = ClassMap(["alpha", "beta", "gamma"])
        report = build_eval_report(samples, class_map=cmap)
        for row in report.classes:
            assert row.class_name == cmap.name_of(row.class_id)
        assert report.aggregate.class_name == AGGREGATE_CLASS_NAME

    def test_aggregate_ap_is_class_mean(self, rng):
        report = build_eval_report(self.make_samples(rng))
        for i in range(10):
            expected = sum(row.ap_per_iou[i] for row in report.classes) / len(
                report.classes
            )
            assert report.aggregate.ap_per_iou[i] == pytest.approx(expected)

    def test_empty_ground_truth_rejected(self):
        with pytest.raises(UndefinedMetricError):
            build_eval_report([([pred(0, 0.5, 0.5, 0.2, 0.2, 0.9)], [])])

    def test_serialized_report_layout(self, rng):
        report = build_eval_report(self.make_samples(rng), confidence_threshold=0.25)
        text = serialize_report(report)
        lines = text.splitlines()
        assert lines[0] == "confidence_threshold 0.250000"
        assert lines[1].startswith("aggregate.map_50_95 ")
        assert text.endswith("\n")
        # Every value line parses back to a float.
        for line in lines:
            key, value = line.rsplit(" ", 1)
            if not key.endswith(".name"):
                float(value)

    def test_csv_has_ten_rows_per_class(self, rng):
        report = build_eval_report(self.make_samples(rng))
        lines = report_csv(report).splitlines()
        assert lines[0] == "class,iou_thresh,ap"
        assert len(lines) == 1 + 10 * (len(report.classes) + 1)
        last_class, thresh, ap = lines[-1].split(",")
        assert last_class == AGGREGATE_CLASS_NAME
        assert thresh == "0.95"
        float(ap)

    def test_serialized_values_match_report(self, rng):
        report = build_eval_report(self.make_samples(rng))
        text = serialize_report(report)
        assert f"aggregate.map_50_95 {report.aggregate.map_50_95:.6f}" in text
        assert f"aggregate.f1 {report.aggregate.f1:.6f}" in text
