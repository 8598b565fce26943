"""Detection quality metrics: IoU, matching, PR curves, AP, and report I/O.

AP for one class is the mean of the interpolated precision envelope sampled
on a 101-point recall grid, and the headline numbers average that over IoU
thresholds 0.50 to 0.95 in steps of 0.05. Matching is greedy by descending
score with single-use ground truths; `difficult` ground truths never count
toward recall and absorb predictions that overlap them best.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .ioutil import atomic_write_text
from .voc import BoundingBox, ClassLabel, Dataset, GroundTruthObject, label_from_name

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_GRID = tuple(i / 100 for i in range(101))


class MetricsError(ValueError):
    """Base class for metric computation and interchange failures."""


class EvaluationError(MetricsError):
    """Evaluation input that violates a precondition (unknown image, bad box)."""


class InterchangeError(MetricsError):
    """Malformed detections file, training log, or variant table."""


@dataclass(frozen=True)
class Detection:
    image_id: str
    label: ClassLabel
    box: BoundingBox
    score: float


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one image/class worth of predictions at one IoU.

    `considered` holds the predictions in rank order minus any that were
    ignored for overlapping a difficult ground truth; `flags` marks each as
    true positive (True) or false positive (False).
    """

    considered: tuple[Detection, ...]
    flags: tuple[bool, ...]
    num_ignored: int
    num_ground_truths: int
    num_unmatched_ground_truths: int


@dataclass(frozen=True)
class PRCurve:
    """Per-rank (recall, precision) points plus the 101-sample envelope."""

    points: tuple[tuple[float, float], ...]
    envelope: tuple[float, ...]
    num_ground_truths: int

    @property
    def defined(self) -> bool:
        return self.num_ground_truths > 0


@dataclass(frozen=True)
class EvaluationReport:
    """Per-class and aggregate AP values; None marks classes with no ground truth.

    `map` is emitted as a synonym of `ap`: the source tables report a mAP
    column (0.9877) that does not equal the mean of their per-class APs
    (0.9847), and the averaging convention behind it is undocumented, so no
    separate definition is attempted.
    """

    per_class_ap: Mapping[str, float | None]
    ap: float | None
    ap50: float | None
    ap75: float | None
    num_images: int
    num_ground_truths: int
    num_detections: int
    curves: Mapping[str, Mapping[float, PRCurve]]

    @property
    def map(self) -> float | None:
        return self.ap


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area; 0.0 for disjoint boxes."""
    ix = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    iy = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    intersection = ix * iy
    return intersection / (a.area + b.area - intersection)


def _rank_key(det: Detection) -> tuple[float, float, float]:
    return (-det.score, det.box.xmin, det.box.ymin)


def match_detections(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    iou_threshold: float,
) -> MatchResult:
    """Greedily match predictions of one image/class against its ground truths.

    Predictions are visited by descending score (ties by xmin, then ymin) and
    claim the unmatched non-difficult ground truth with the highest IoU at or
    above the threshold. A prediction whose best overlap is a difficult ground
    truth (strictly better than any unmatched non-difficult one) is ignored.
    """
    normal = [g for g in gts if not g.difficult]
    difficult = [g for g in gts if g.difficult]
    claimed = [False] * len(normal)
    considered: list[Detection] = []
    flags: list[bool] = []
    num_ignored = 0

    for det in sorted(preds, key=_rank_key):
        best_iou = 0.0
        best_index = None
        for index, gt in enumerate(normal):
            if claimed[index]:
                continue
            overlap = iou(det.box, gt.box)
            if overlap > best_iou:
                best_iou = overlap
                best_index = index
        best_difficult = max((iou(det.box, g.box) for g in difficult), default=0.0)
        if best_difficult >= iou_threshold and best_difficult > best_iou:
            num_ignored += 1
            continue
        if best_index is not None and best_iou >= iou_threshold:
            claimed[best_index] = True
            flags.append(True)
        else:
            flags.append(False)
        considered.append(det)

    return MatchResult(
        considered=tuple(considered),
        flags=tuple(flags),
        num_ignored=num_ignored,
        num_ground_truths=len(normal),
        num_unmatched_ground_truths=claimed.count(False),
    )


def precision_recall_curve(flags: Sequence[bool], num_ground_truths: int) -> PRCurve:
    """Per-rank curve from pooled, score-ranked TP/FP flags of one class.

    With zero ground truths the curve is empty and flagged undefined; its AP
    is excluded from class means downstream.
    """
    if num_ground_truths < 0:
        raise EvaluationError(f"num_ground_truths must be >= 0, got {num_ground_truths}")
    if num_ground_truths == 0:
        return PRCurve(points=(), envelope=(), num_ground_truths=0)

    points = []
    true_positives = 0
    for rank, flag in enumerate(flags, start=1):
        if flag:
            true_positives += 1
        points.append((true_positives / num_ground_truths, true_positives / rank))

    envelope = []
    for grid_recall in RECALL_GRID:
        best = 0.0
        for recall, precision in points:
            if recall >= grid_recall and precision > best:
                best = precision
        envelope.append(best)
    return PRCurve(points=tuple(points), envelope=tuple(envelope), num_ground_truths=num_ground_truths)


def average_precision(curve: PRCurve) -> float | None:
    """Mean of the interpolated envelope over the recall grid; None if undefined."""
    if not curve.defined:
        return None
    return math.fsum(curve.envelope) / len(RECALL_GRID)


def mean_average_precision(per_class: Iterable[float | None]) -> float | None:
    """Arithmetic mean of the defined per-class APs; None when all are undefined."""
    defined = [value for value in per_class if value is not None]
    if not defined:
        return None
    return math.fsum(defined) / len(defined)


def _pooled_flags(
    per_image: Iterable[MatchResult],
) -> list[bool]:
    pairs: list[tuple[Detection, bool]] = []
    for result in per_image:
        pairs.extend(zip(result.considered, result.flags))
    pairs.sort(key=lambda pair: (-pair[0].score, pair[0].image_id, pair[0].box.xmin, pair[0].box.ymin))
    return [flag for _, flag in pairs]


def evaluate(
    ground_truth: Dataset,
    detections: Sequence[Detection],
    iou_thresholds: Sequence[float] = IOU_THRESHOLDS,
) -> EvaluationReport:
    """Score detections against a dataset, pooling matches per class.

    For every class and IoU threshold the per-image matches are pooled in
    global rank order into one curve; per-class AP averages over thresholds
    and the headline ap/ap50/ap75 are class means. Classes without ground
    truth stay undefined (None) instead of dragging the means to zero.
    """
    known_ids = ground_truth.image_ids()
    for det in detections:
        if det.image_id not in known_ids:
            raise EvaluationError(f"detection references unknown image_id '{det.image_id}'")
        if not det.box.is_well_formed():
            raise EvaluationError(f"detection on '{det.image_id}' has a degenerate box")
        if not 0.0 <= det.score <= 1.0:
            raise EvaluationError(f"detection on '{det.image_id}' has score {det.score} outside [0, 1]")

    gts_by_image_class: dict[tuple[str, int], list[GroundTruthObject]] = {}
    num_ground_truths = 0
    for record in ground_truth.records:
        for obj in record.objects:
            gts_by_image_class.setdefault((record.image_id, obj.label.class_id), []).append(obj)
            num_ground_truths += 1
    dets_by_image_class: dict[tuple[str, int], list[Detection]] = {}
    for det in detections:
        dets_by_image_class.setdefault((det.image_id, det.label.class_id), []).append(det)

    image_ids = sorted(known_ids)
    per_class_ap: dict[str, float | None] = {}
    per_class_fixed: dict[float, dict[str, float | None]] = {t: {} for t in iou_thresholds}
    curves: dict[str, dict[float, PRCurve]] = {}

    for label in ground_truth.class_set:
        class_curves: dict[float, PRCurve] = {}
        threshold_aps: list[float | None] = []
        num_gt = sum(
            sum(1 for g in gts_by_image_class.get((image_id, label.class_id), ()) if not g.difficult)
            for image_id in image_ids
        )
        for threshold in iou_thresholds:
            matches = [
                match_detections(
                    dets_by_image_class.get((image_id, label.class_id), ()),
                    gts_by_image_class.get((image_id, label.class_id), ()),
                    threshold,
                )
                for image_id in image_ids
            ]
            curve = precision_recall_curve(_pooled_flags(matches), num_gt)
            class_curves[threshold] = curve
            threshold_aps.append(average_precision(curve))
            per_class_fixed[threshold][label.name] = threshold_aps[-1]
        curves[label.name] = class_curves
        per_class_ap[label.name] = mean_average_precision(threshold_aps) if num_gt else None

    def class_mean(values: Mapping[str, float | None]) -> float | None:
        return mean_average_precision(values.values())

    return EvaluationReport(
        per_class_ap=per_class_ap,
        ap=class_mean(per_class_ap),
        ap50=class_mean(per_class_fixed[0.5]) if 0.5 in per_class_fixed else None,
        ap75=class_mean(per_class_fixed[0.75]) if 0.75 in per_class_fixed else None,
        num_images=len(ground_truth.records),
        num_ground_truths=num_ground_truths,
        num_detections=len(detections),
        curves=curves,
    )


@dataclass(frozen=True)
class ModelVariantRow:
    name: str
    map_float: float
    map_quantized_int8: float
    parameter_count_m: float
    mobile_latency_ms: float


# Published benchmark figures for the EfficientDet-lite family
# (float/int8 mAP %, parameters in millions, Pixel 4 latency in ms).
DEFAULT_VARIANT_ROWS = (
    ModelVariantRow("EfficientDet-lite0", 26.41, 26.10, 3.2, 36.0),
    ModelVariantRow("EfficientDet-lite1", 31.50, 31.12, 4.2, 49.0),
    ModelVariantRow("EfficientDet-lite2", 35.06, 34.69, 5.3, 69.0),
    ModelVariantRow("EfficientDet-lite3", 38.77, 38.42, 8.4, 116.0),
    ModelVariantRow("EfficientDet-lite3x", 42.64, 41.87, 9.3, 208.0),
    ModelVariantRow("EfficientDet-lite4", 43.18, 42.83, 15.1, 260.0),
)


@dataclass(frozen=True)
class VariantSelection:
    row: ModelVariantRow
    budget_exceeded: bool


def select_backend_variant(
    rows: Sequence[ModelVariantRow], latency_budget_ms: float
) -> VariantSelection:
    """Pick the most accurate variant within a latency budget.

    Within budget the highest float mAP wins (latency breaks ties); when
    nothing fits, the fastest row is returned flagged budget_exceeded.
    """
    if not rows:
        raise ValueError("select_backend_variant needs at least one row")
    qualifying = [row for row in rows if row.mobile_latency_ms <= latency_budget_ms]
    if qualifying:
        best = max(qualifying, key=lambda row: (row.map_float, -row.mobile_latency_ms))
        return VariantSelection(row=best, budget_exceeded=False)
    fallback = min(rows, key=lambda row: (row.mobile_latency_ms, -row.map_float))
    return VariantSelection(row=fallback, budget_exceeded=True)


@dataclass(frozen=True)
class TrainingLogRecord:
    epoch: int
    train_total: float
    val_total: float | None = None
    det_loss: float | None = None
    cls_loss: float | None = None
    box_loss: float | None = None


@dataclass(frozen=True)
class TrainingSummary:
    """Final-epoch losses plus the per-epoch series for curve plotting."""

    final: TrainingLogRecord
    records: tuple[TrainingLogRecord, ...]
    decreasing_fraction: float


def summarize_training_log(records: Sequence[TrainingLogRecord]) -> TrainingSummary:
    """Summarize a training log: finals, the full series, and a trend statistic.

    The trend statistic is the fraction of epoch transitions where the
    training total loss decreased; a single-record log scores 1.0.
    """
    if not records:
        raise EvaluationError("training log is empty")
    for previous, current in zip(records, records[1:]):
        if current.epoch <= previous.epoch:
            raise EvaluationError(
                f"epochs must be strictly increasing, got {previous.epoch} then {current.epoch}"
            )
    if len(records) == 1:
        decreasing = 1.0
    else:
        drops = sum(
            1 for previous, current in zip(records, records[1:]) if current.train_total < previous.train_total
        )
        decreasing = drops / (len(records) - 1)
    return TrainingSummary(final=records[-1], records=tuple(records), decreasing_fraction=decreasing)


# --- interchange files ---

def format_detection_line(det: Detection) -> str:
    return "\t".join(
        (
            det.image_id,
            det.label.name,
            repr(det.score),
            repr(det.box.xmin),
            repr(det.box.ymin),
            repr(det.box.xmax),
            repr(det.box.ymax),
        )
    )


def write_detections_file(path: Path | str, detections: Iterable[Detection]) -> None:
    lines = [format_detection_line(det) for det in detections]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_detections_file(path: Path | str) -> list[Detection]:
    """Parse the one-record-per-line detections interchange file."""
    detections = []
    text = Path(path).read_text(encoding="utf-8")
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 7:
            raise InterchangeError(f"{path}:{number}: expected 7 tab-separated fields, got {len(parts)}")
        try:
            label = label_from_name(parts[1])
            score = float(parts[2])
            box = BoundingBox(*(float(v) for v in parts[3:7]))
        except ValueError as exc:
            raise InterchangeError(f"{path}:{number}: {exc}") from exc
        if not 0.0 <= score <= 1.0:
            raise InterchangeError(f"{path}:{number}: score {score} outside [0, 1]")
        detections.append(Detection(image_id=parts[0], label=label, box=box, score=score))
    return detections


TRAINING_LOG_COLUMNS = ("epoch", "train_total", "val_total", "det_loss", "cls_loss", "box_loss")


def read_training_log(path: Path | str) -> list[TrainingLogRecord]:
    """Parse the training-log CSV; blank cells mean the value was not logged."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows or tuple(cell.strip() for cell in rows[0]) != TRAINING_LOG_COLUMNS:
        raise InterchangeError(f"{path}: expected header {','.join(TRAINING_LOG_COLUMNS)}")
    records = []
    for number, row in enumerate(rows[1:], start=2):
        if len(row) != len(TRAINING_LOG_COLUMNS):
            raise InterchangeError(f"{path}:{number}: expected {len(TRAINING_LOG_COLUMNS)} columns")
        try:
            optional = [float(cell) if cell.strip() else None for cell in row[1:]]
            if optional[0] is None:
                raise ValueError("train_total is required")
            records.append(TrainingLogRecord(int(row[0]), optional[0], *optional[1:]))
        except ValueError as exc:
            raise InterchangeError(f"{path}:{number}: {exc}") from exc
    return records


def write_training_log(path: Path | str, records: Iterable[TrainingLogRecord]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TRAINING_LOG_COLUMNS)
    for record in records:
        cells = [record.train_total, record.val_total, record.det_loss, record.cls_loss, record.box_loss]
        writer.writerow([record.epoch] + ["" if c is None else repr(c) for c in cells])
    atomic_write_text(path, buffer.getvalue())


VARIANT_TABLE_COLUMNS = ("name", "map_float", "map_int8", "params_m", "latency_ms")


def read_variant_table(path: Path | str) -> list[ModelVariantRow]:
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows or tuple(cell.strip() for cell in rows[0]) != VARIANT_TABLE_COLUMNS:
        raise InterchangeError(f"{path}: expected header {','.join(VARIANT_TABLE_COLUMNS)}")
    variants = []
    for number, row in enumerate(rows[1:], start=2):
        if len(row) != len(VARIANT_TABLE_COLUMNS):
            raise InterchangeError(f"{path}:{number}: expected {len(VARIANT_TABLE_COLUMNS)} columns")
        try:
            variants.append(ModelVariantRow(row[0], *(float(cell) for cell in row[1:])))
        except ValueError as exc:
            raise InterchangeError(f"{path}:{number}: {exc}") from exc
    return variants


def write_variant_table(path: Path | str, rows: Iterable[ModelVariantRow]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(VARIANT_TABLE_COLUMNS)
    for row in rows:
        writer.writerow(
            [row.name, row.map_float, row.map_quantized_int8, row.parameter_count_m, row.mobile_latency_ms]
        )
    atomic_write_text(path, buffer.getvalue())


def report_to_dict(report: EvaluationReport) -> dict:
    """JSON-ready view of a report, including per-class envelopes per IoU."""
    return {
        "per_class_ap": dict(report.per_class_ap),
        "ap": report.ap,
        "ap50": report.ap50,
        "ap75": report.ap75,
        "map": report.map,
        "counts": {
            "images": report.num_images,
            "ground_truths": report.num_ground_truths,
            "detections": report.num_detections,
        },
        "envelopes": {
            name: {repr(threshold): list(curve.envelope) if curve.defined else None for threshold, curve in by_threshold.items()}
            for name, by_threshold in report.curves.items()
        },
    }


def write_report(path: Path | str, report: EvaluationReport) -> None:
    atomic_write_text(path, json.dumps(report_to_dict(report), indent=2) + "\n")


def summary_to_dict(summary: TrainingSummary) -> dict:
    def record_to_dict(record: TrainingLogRecord) -> dict:
        return {
            "epoch": record.epoch,
            "train_total": record.train_total,
            "val_total": record.val_total,
            "det_loss": record.det_loss,
            "cls_loss": record.cls_loss,
            "box_loss": record.box_loss,
        }

    return {
        "final": record_to_dict(summary.final),
        "decreasing_fraction": summary.decreasing_fraction,
        "epochs": [record_to_dict(record) for record in summary.records],
    }
