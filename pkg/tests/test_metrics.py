import math

import numpy as np
import pytest

from notedetect import (
    DEFAULT_VARIANT_ROWS,
    BoundingBox,
    Detection,
    EvaluationError,
    GroundTruthObject,
    ImageRecord,
    InterchangeError,
    ModelVariantRow,
    TrainingLogRecord,
    average_precision,
    evaluate,
    iou,
    label_from_id,
    match_detections,
    mean_average_precision,
    precision_recall_curve,
    read_detections_file,
    read_training_log,
    read_variant_table,
    select_backend_variant,
    summarize_training_log,
    write_detections_file,
    write_report,
    write_training_log,
    write_variant_table,
)
from notedetect.metrics import report_to_dict
from notedetect.voc import dataset_from_records

from conftest import make_grid_record

LABEL = label_from_id(0)


def _box(rng, span=100.0, min_side=2.0, max_side=40.0) -> BoundingBox:
    width = float(rng.uniform(min_side, max_side))
    height = float(rng.uniform(min_side, max_side))
    xmin = float(rng.uniform(0, span - width))
    ymin = float(rng.uniform(0, span - height))
    return BoundingBox(xmin, ymin, xmin + width, ymin + height)


def _jittered(rng, box: BoundingBox, magnitude=6.0) -> BoundingBox:
    dx, dy = rng.uniform(-magnitude, magnitude, 2)
    return BoundingBox(
        max(0.0, box.xmin + dx), max(0.0, box.ymin + dy), box.xmax + dx, box.ymax + dy
    )


def test_iou_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(20, 20, 30, 30)) == 0.0
    assert abs(iou(a, BoundingBox(5, 0, 15, 10)) - 1 / 3) < 1e-12


def test_iou_symmetry_and_range():
    rng = np.random.default_rng(1)
    for _ in range(500):
        a, b = _box(rng), _box(rng)
        ab = iou(a, b)
        assert ab == iou(b, a)
        assert 0.0 <= ab <= 1.0


def _det(box, score, image_id="img", label=LABEL) -> Detection:
    return Detection(image_id=image_id, label=label, box=box, score=score)


def _gt(box, difficult=False) -> GroundTruthObject:
    return GroundTruthObject(label=LABEL, box=box, difficult=difficult)


def test_match_single_true_positive():
    gt = _gt(BoundingBox(0, 0, 10, 10))
    pred = _det(BoundingBox(1, 0, 11, 10), 0.9)  # IoU 9/11 over 0.5
    result = match_detections([pred], [gt], 0.5)
    assert result.flags == (True,)
    assert result.num_unmatched_ground_truths == 0


def test_match_duplicate_prediction_is_false_positive():
    gt = _gt(BoundingBox(0, 0, 10, 10))
    first = _det(BoundingBox(0, 0, 10, 10), 0.9)
    second = _det(BoundingBox(1, 0, 11, 10), 0.8)
    result = match_detections([second, first], [gt], 0.5)
    assert result.flags == (True, False)


def test_match_prefers_highest_iou_ground_truth():
    close = _gt(BoundingBox(0, 0, 10, 10))
    farther = _gt(BoundingBox(8, 0, 18, 10))
    pred = _det(BoundingBox(1, 0, 11, 10), 0.9)  # IoU 0.818 vs 0.389
    result = match_detections([pred], [close, farther], 0.5)
    assert result.flags == (True,)
    assert result.num_unmatched_ground_truths == 1


def test_match_ignores_predictions_on_difficult_ground_truth():
    difficult = _gt(BoundingBox(0, 0, 10, 10), difficult=True)
    pred = _det(BoundingBox(0, 0, 10, 10), 0.9)
    result = match_detections([pred], [difficult], 0.5)
    assert result.flags == ()
    assert result.num_ignored == 1
    assert result.num_ground_truths == 0


def test_match_difficult_does_not_shadow_equal_normal_overlap():
    # identical boxes: the non-difficult ground truth wins the tie
    box = BoundingBox(0, 0, 10, 10)
    result = match_detections([_det(box, 0.9)], [_gt(box), _gt(box, difficult=True)], 0.5)
    assert result.flags == (True,)
    assert result.num_ignored == 0


def test_match_conservation_properties():
    rng = np.random.default_rng(2)
    for _ in range(300):
        gts = [_gt(_box(rng), difficult=bool(rng.random() < 0.2)) for _ in range(rng.integers(0, 5))]
        preds = []
        for _ in range(rng.integers(0, 7)):
            base = gts[int(rng.integers(len(gts)))].box if gts and rng.random() < 0.6 else _box(rng)
            preds.append(_det(_jittered(rng, base), float(rng.random())))
        result = match_detections(preds, gts, 0.5)
        true_positives = sum(result.flags)
        assert len(result.considered) + result.num_ignored == len(preds)
        assert true_positives <= result.num_ground_truths
        assert true_positives + result.num_unmatched_ground_truths == result.num_ground_truths


def test_curve_single_true_positive():
    curve = precision_recall_curve([True], 1)
    assert curve.points == ((1.0, 1.0),)
    assert all(value == 1.0 for value in curve.envelope)
    assert average_precision(curve) == 1.0


def test_curve_true_then_false_positive():
    curve = precision_recall_curve([True, False], 2)
    assert curve.points == ((0.5, 1.0), (0.5, 0.5))
    assert curve.envelope[50] == 1.0
    assert curve.envelope[51] == 0.0
    assert abs(average_precision(curve) - 51 / 101) < 1e-12


def test_curve_without_detections_scores_zero():
    curve = precision_recall_curve([], 2)
    assert average_precision(curve) == 0.0


def test_curve_with_no_ground_truth_is_undefined():
    curve = precision_recall_curve([], 0)
    assert not curve.defined
    assert average_precision(curve) is None


def test_curve_shape_invariants():
    rng = np.random.default_rng(3)
    for _ in range(200):
        num_gt = int(rng.integers(1, 6))
        flags = [bool(rng.random() < 0.5) for _ in range(rng.integers(0, 10))]
        while sum(flags) > num_gt:
            flags[flags.index(True)] = False
        curve = precision_recall_curve(flags, num_gt)
        recalls = [r for r, _ in curve.points]
        assert recalls == sorted(recalls)
        assert all(curve.envelope[i] >= curve.envelope[i + 1] for i in range(100))


def test_mean_average_precision_examples():
    assert mean_average_precision([1.0, 1.0]) == 1.0
    assert mean_average_precision([0.0, 1.0]) == 0.5
    table = [0.9893, 0.9790, 0.9906, 0.9807, 0.9907, 0.9778]
    assert abs(mean_average_precision(table) - 0.9847) <= 0.00005
    assert mean_average_precision([None, 0.75, None]) == 0.75
    assert mean_average_precision([None, None]) is None


def test_mean_average_precision_of_constant_list():
    rng = np.random.default_rng(4)
    for _ in range(50):
        c = float(rng.random())
        assert abs(mean_average_precision([c] * int(rng.integers(1, 9))) - c) < 1e-12


def _perfect_detections(dataset) -> list[Detection]:
    return [
        Detection(image_id=record.image_id, label=obj.label, box=obj.box, score=1.0)
        for record in dataset.records
        for obj in record.objects
    ]


def test_evaluate_perfect_detector_scores_one():
    rng = np.random.default_rng(5)
    dataset = dataset_from_records(make_grid_record(rng, f"img{i}") for i in range(4))
    report = evaluate(dataset, _perfect_detections(dataset))
    assert report.ap == 1.0
    assert report.ap50 == 1.0
    assert report.ap75 == 1.0
    assert report.map == 1.0
    for name, value in report.per_class_ap.items():
        assert value is None or value == 1.0


def test_evaluate_without_detections_scores_zero():
    rng = np.random.default_rng(6)
    dataset = dataset_from_records(make_grid_record(rng, f"img{i}") for i in range(3))
    report = evaluate(dataset, [])
    assert report.ap == 0.0
    assert report.ap50 == 0.0
    assert report.num_detections == 0


def test_evaluate_rejects_unknown_image_and_bad_inputs():
    rng = np.random.default_rng(7)
    dataset = dataset_from_records([make_grid_record(rng, "known")])
    stray = _det(BoundingBox(0, 0, 5, 5), 0.5, image_id="mystery")
    with pytest.raises(EvaluationError, match="mystery"):
        evaluate(dataset, [stray])
    degenerate = _det(BoundingBox(5, 5, 5, 9), 0.5, image_id="known")
    with pytest.raises(EvaluationError, match="degenerate"):
        evaluate(dataset, [degenerate])
    overconfident = _det(BoundingBox(0, 0, 5, 5), 1.5, image_id="known")
    with pytest.raises(EvaluationError, match="score"):
        evaluate(dataset, [overconfident])


def _random_instance(rng):
    records = [make_grid_record(rng, f"img{i}") for i in range(int(rng.integers(1, 4)))]
    dataset = dataset_from_records(records)
    detections = []
    for record in records:
        for obj in record.objects:
            if rng.random() < 0.8:
                detections.append(
                    Detection(
                        image_id=record.image_id,
                        label=obj.label,
                        box=_jittered(rng, obj.box, magnitude=4.0),
                        score=float(rng.random()),
                    )
                )
    return dataset, detections


def test_evaluate_is_invariant_under_monotone_score_maps():
    rng = np.random.default_rng(8)
    for _ in range(20):
        dataset, detections = _random_instance(rng)
        base = evaluate(dataset, detections)
        for remap in (lambda s: s * s, lambda s: 0.3 + 0.6 * s):
            remapped = [
                Detection(d.image_id, d.label, d.box, remap(d.score)) for d in detections
            ]
            again = evaluate(dataset, remapped)
            assert again.per_class_ap == base.per_class_ap
            assert again.ap == base.ap


def _single_class_ap(gts, preds, threshold=0.5):
    result = match_detections(preds, gts, threshold)
    return average_precision(precision_recall_curve(result.flags, result.num_ground_truths))


def test_extra_true_positive_never_decreases_ap():
    rng = np.random.default_rng(9)
    checked = 0
    while checked < 100:
        gts = [_gt(_box(rng)) for _ in range(rng.integers(1, 5))]
        preds = [
            _det(_jittered(rng, g.box), float(rng.uniform(0.1, 1.0)))
            for g in gts
            if rng.random() < 0.5
        ]
        result = match_detections(preds, gts, 0.5)
        if result.num_unmatched_ground_truths == 0:
            continue
        # recover one never-overlapped ground truth and claim it with a low score
        unmatched = next(
            (g for g in gts if not any(iou(g.box, d.box) >= 0.5 for d in preds)), None
        )
        if unmatched is None:
            continue
        low_score = min((d.score for d in preds), default=0.2) / 2
        before = _single_class_ap(gts, preds)
        after = _single_class_ap(gts, preds + [_det(unmatched.box, low_score)])
        assert after >= before - 1e-12
        checked += 1


def test_trailing_false_positive_never_increases_ap():
    rng = np.random.default_rng(10)
    for _ in range(100):
        gts = [_gt(_box(rng)) for _ in range(rng.integers(1, 5))]
        preds = [
            _det(_jittered(rng, g.box), float(rng.uniform(0.1, 1.0)))
            for g in gts
            if rng.random() < 0.7
        ]
        far_away = BoundingBox(140.0, 140.0, 150.0, 150.0)
        low_score = min((d.score for d in preds), default=0.2) / 2
        before = _single_class_ap(gts, preds)
        after = _single_class_ap(gts, preds + [_det(far_away, low_score)])
        assert after <= before + 1e-12


def test_variant_selection_on_published_rows():
    assert select_backend_variant(DEFAULT_VARIANT_ROWS, 100).row.name == "EfficientDet-lite2"
    assert select_backend_variant(DEFAULT_VARIANT_ROWS, 36).row.name == "EfficientDet-lite0"
    fallback = select_backend_variant(DEFAULT_VARIANT_ROWS, 10)
    assert fallback.row.name == "EfficientDet-lite0"
    assert fallback.budget_exceeded


def test_variant_selection_breaks_accuracy_ties_by_latency():
    rows = [
        ModelVariantRow("slow", 40.0, 39.0, 5.0, 80.0),
        ModelVariantRow("fast", 40.0, 39.0, 5.0, 60.0),
    ]
    assert select_backend_variant(rows, 100).row.name == "fast"


def test_summarize_single_record_log():
    record = TrainingLogRecord(epoch=1, train_total=0.5, val_total=0.4)
    summary = summarize_training_log([record])
    assert summary.final == record
    assert summary.decreasing_fraction == 1.0


def test_summarize_reports_final_epoch_losses():
    records = [
        TrainingLogRecord(epoch=i + 1, train_total=1.0 / (i + 1), val_total=0.9 / (i + 1))
        for i in range(19)
    ]
    records.append(TrainingLogRecord(epoch=20, train_total=0.1572, val_total=0.1462))
    summary = summarize_training_log(records)
    assert summary.final.train_total == 0.1572
    assert summary.final.val_total == 0.1462


def test_summarize_trend_statistic():
    decreasing = [TrainingLogRecord(epoch=i + 1, train_total=2.0 - 0.05 * i) for i in range(20)]
    assert summarize_training_log(decreasing).decreasing_fraction == 1.0
    bumpy = [
        TrainingLogRecord(epoch=1, train_total=1.0),
        TrainingLogRecord(epoch=2, train_total=0.8),
        TrainingLogRecord(epoch=3, train_total=0.9),
        TrainingLogRecord(epoch=4, train_total=0.7),
    ]
    assert abs(summarize_training_log(bumpy).decreasing_fraction - 2 / 3) < 1e-12


def test_summarize_rejects_bad_logs():
    with pytest.raises(EvaluationError):
        summarize_training_log([])
    shuffled = [
        TrainingLogRecord(epoch=2, train_total=1.0),
        TrainingLogRecord(epoch=2, train_total=0.9),
    ]
    with pytest.raises(EvaluationError, match="increasing"):
        summarize_training_log(shuffled)


def test_detections_file_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    detections = [
        _det(_box(rng), float(rng.random()), image_id=f"img{i}", label=label_from_id(i % 6))
        for i in range(10)
    ]
    path = tmp_path / "detections.tsv"
    write_detections_file(path, detections)
    assert read_detections_file(path) == detections


def test_detections_file_parse_errors(tmp_path):
    path = tmp_path / "detections.tsv"
    path.write_text("img\t100 Rupees\t0.5\t1\t2\t3\n")
    with pytest.raises(InterchangeError, match=":1"):
        read_detections_file(path)
    path.write_text("img\t10 Rupees\t0.5\t1\t2\t3\t4\n")
    with pytest.raises(InterchangeError, match="10 Rupees"):
        read_detections_file(path)
    path.write_text("img\t100 Rupees\t1.5\t1\t2\t3\t4\n")
    with pytest.raises(InterchangeError, match="score"):
        read_detections_file(path)


def test_training_log_round_trip_preserves_blanks(tmp_path):
    records = [
        TrainingLogRecord(epoch=1, train_total=0.9, val_total=None, det_loss=0.3),
        TrainingLogRecord(epoch=2, train_total=0.7, val_total=0.6, cls_loss=0.2, box_loss=0.1),
    ]
    path = tmp_path / "log.csv"
    write_training_log(path, records)
    assert read_training_log(path) == records


def test_training_log_rejects_wrong_header(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text("epoch,total\n1,0.5\n")
    with pytest.raises(InterchangeError, match="header"):
        read_training_log(path)


def test_variant_table_round_trip(tmp_path):
    path = tmp_path / "variants.csv"
    write_variant_table(path, DEFAULT_VARIANT_ROWS)
    assert read_variant_table(path) == list(DEFAULT_VARIANT_ROWS)


def test_report_json_shape(tmp_path):
    rng = np.random.default_rng(12)
    dataset = dataset_from_records([make_grid_record(rng, "img0")])
    report = evaluate(dataset, _perfect_detections(dataset))
    payload = report_to_dict(report)
    assert payload["map"] == payload["ap"]
    assert set(payload["counts"]) == {"images", "ground_truths", "detections"}
    present = {name for name, value in payload["per_class_ap"].items() if value is not None}
    for name in present:
        envelopes = payload["envelopes"][name]
        assert len(envelopes) == 10
        assert all(len(env) == 101 for env in envelopes.values())
    absent = set(payload["per_class_ap"]) - present
    for name in absent:
        assert all(env is None for env in payload["envelopes"][name].values())
    write_report(tmp_path / "report.json", report)
    assert (tmp_path / "report.json").read_text().startswith("{")
