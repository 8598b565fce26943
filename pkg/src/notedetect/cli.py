"""Command-line entry point: augment, split, validate, evaluate, infer,
report, select-model, serve.

Exit codes follow the sysexits convention where it matters downstream:
64 for usage errors, 74 for I/O and input-format failures, 2 for dataset
validation findings. Seeds are mandatory wherever randomness is involved
so no run depends on hidden state.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Callable, Sequence

from . import augment as aug
from . import detector as det
from . import metrics as met
from . import voc
from .ioutil import atomic_write_text, load_image

EX_OK = 0
EX_VIOLATIONS = 2
EX_USAGE = 64
EX_IOERR = 74

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _bounded_float(
    low: float, high: float, *, low_open: bool = False, high_open: bool = False
) -> Callable[[str], float]:
    def parse(text: str) -> float:
        try:
            value = float(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"'{text}' is not a number") from exc
        outside = (
            value < low
            or value > high
            or (low_open and value == low)
            or (high_open and value == high)
        )
        if outside:
            bounds = f"{'(' if low_open else '['}{low}, {high}{')' if high_open else ']'}"
            raise argparse.ArgumentTypeError(f"{value} is outside {bounds}")
        return value

    return parse


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"'{text}' is not an integer") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"{value} is not positive")
    return value


def _nonnegative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"'{text}' is not an integer") from exc
    if value < 0:
        raise argparse.ArgumentTypeError(f"{value} is negative")
    return value


def _iou_threshold_list(text: str) -> tuple[float, ...]:
    values = []
    for part in text.split(","):
        try:
            value = float(part)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"'{part}' is not a number") from exc
        if not 0.0 < value <= 1.0:
            raise argparse.ArgumentTypeError(f"IoU threshold {value} is outside (0, 1]")
        values.append(value)
    if not values:
        raise argparse.ArgumentTypeError("expected at least one IoU threshold")
    return tuple(values)


def _fmt(value: float | None) -> str:
    return "undefined" if value is None else f"{value:.4f}"


def _load_dataset_dir(root: Path) -> voc.Dataset:
    return voc.load_dataset(root / "annotations", root / "images")


def _cmd_augment(args: argparse.Namespace) -> int:
    low, high = args.zoom
    if not 0.0 < low <= high:
        print(
            f"notedetect augment: error: --zoom must satisfy 0 < LOW <= HIGH, got {low} {high}",
            file=sys.stderr,
        )
        return EX_USAGE
    dataset = _load_dataset_dir(args.dataset)
    spec = aug.AugmentationSpec(
        seed=args.seed,
        rotation_range=args.rotation,
        shear_range=args.shear,
        zoom_range=(args.zoom[0], args.zoom[1]),
        horizontal_flip_prob=args.flip_h,
        vertical_flip_prob=args.flip_v,
        copies_per_image=args.copies,
        min_visibility=args.min_visibility,
    )
    result = aug.augment_dataset(dataset, spec)
    generated = {item.record.image_id: item.image for item in result.augmented}
    voc.save_dataset(result.dataset, args.out, images=generated)
    aug.write_provenance(args.out / "provenance.tsv", result.provenance)
    print(f"input records: {len(dataset)}")
    print(f"output records: {len(result.dataset)}")
    return EX_OK


def _cmd_split(args: argparse.Namespace) -> int:
    dataset = _load_dataset_dir(args.dataset)
    train, validation = voc.split_dataset(dataset, args.train_fraction, args.seed)
    voc.save_dataset(train, args.out / "train")
    voc.save_dataset(validation, args.out / "val")
    print(f"train records: {len(train)}")
    print(f"val records: {len(validation)}")
    return EX_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    dataset, violations = voc.scan_dataset(
        args.dataset / "annotations", args.dataset / "images"
    )
    if not violations:
        print(f"{len(dataset)} records ok")
        return EX_OK
    for violation in violations:
        print(f"{violation.kind}\t{violation.image_id}\t{violation.message}")
    return EX_VIOLATIONS


def _cmd_evaluate(args: argparse.Namespace) -> int:
    dataset = _load_dataset_dir(args.dataset)
    detections = met.read_detections_file(args.detections)
    thresholds = args.iou_thresholds or met.IOU_THRESHOLDS
    report = met.evaluate(dataset, detections, iou_thresholds=thresholds)
    if args.out is not None:
        met.write_report(args.out, report)
    print(f"AP {_fmt(report.ap)}")
    print(f"AP50 {_fmt(report.ap50)}")
    print(f"AP75 {_fmt(report.ap75)}")
    print(f"mAP {_fmt(report.map)}")
    return EX_OK


def _iter_image_paths(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
    return [path]


def _cmd_infer(args: argparse.Namespace) -> int:
    if args.stub_fixture is not None:
        backend: det.DetectorBackend = det.StubBackend.from_file(args.stub_fixture)
    else:
        backend = det.TFLiteBackend(args.model)
    detections: list[met.Detection] = []
    for image_path in _iter_image_paths(args.input):
        image_id = image_path.stem
        result = det.infer(
            backend,
            load_image(image_path),
            score_threshold=args.score_threshold,
            nms_iou=args.nms_iou,
            image_id=image_id,
        )
        detections.extend(result.detections)
        if args.speak_text:
            if result.detections:
                text = "; ".join(det.label_to_phrase(d.label) for d in result.detections)
            else:
                text = result.empty_message
            print(f"{image_id}\t{text}")
    met.write_detections_file(args.out, detections)
    print(f"detections written: {len(detections)}")
    return EX_OK


def _cmd_report(args: argparse.Namespace) -> int:
    records = met.read_training_log(args.log)
    summary = met.summarize_training_log(records)
    if args.out is not None:
        atomic_write_text(args.out, json.dumps(met.summary_to_dict(summary), indent=2) + "\n")
    final = summary.final
    print(f"final train_total {_fmt(final.train_total)}")
    print(f"final val_total {_fmt(final.val_total)}")
    print(f"final det_loss {_fmt(final.det_loss)}")
    print(f"final cls_loss {_fmt(final.cls_loss)}")
    print(f"final box_loss {_fmt(final.box_loss)}")
    print(f"decreasing_fraction {_fmt(summary.decreasing_fraction)}")
    print("epoch\ttrain_total\tval_total\tdet_loss\tcls_loss\tbox_loss")
    for record in summary.records:
        cells = (record.train_total, record.val_total, record.det_loss, record.cls_loss, record.box_loss)
        print(str(record.epoch) + "\t" + "\t".join("" if c is None else f"{c:.4f}" for c in cells))
    return EX_OK


def _cmd_select_model(args: argparse.Namespace) -> int:
    rows = met.read_variant_table(args.table) if args.table is not None else list(met.DEFAULT_VARIANT_ROWS)
    selection = met.select_backend_variant(rows, args.budget_ms)
    row = selection.row
    print(
        f"{row.name} map_float={row.map_float:g} map_int8={row.map_quantized_int8:g} "
        f"params_m={row.parameter_count_m:g} latency_ms={row.mobile_latency_ms:g}"
    )
    if selection.budget_exceeded:
        print("budget exceeded")
    return EX_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    from . import service

    if args.stub_fixture is not None:
        fixture = det.load_stub_fixture(args.stub_fixture)
        factory: Callable[[], det.DetectorBackend] = lambda: det.StubBackend(fixture)
    elif args.model is not None:
        model_path = args.model
        factory = lambda: det.TFLiteBackend(model_path)
    else:
        raise det.InferenceError("no model configured; pass --model/--stub-fixture or set NOTEDETECT_MODEL")
    pool = det.BackendPool(factory, size=args.pool)
    app = service.create_app(
        pool,
        score_threshold=args.score_threshold,
        nms_iou=args.nms_iou,
        allowed_origins=args.allow_origin or ("*",),
    )

    import uvicorn

    uvicorn.run(app, host=args.addr, port=args.port)
    return EX_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="notedetect", description=__doc__)
    subparsers = parser.add_subparsers(dest="command", required=True)

    p_augment = subparsers.add_parser("augment", help="expand a dataset with seeded geometric transforms")
    p_augment.add_argument("--dataset", type=Path, required=True, help="dataset directory (annotations/ + images/)")
    p_augment.add_argument("--out", type=Path, required=True, help="output dataset directory")
    p_augment.add_argument("--seed", type=int, required=True, help="random seed (mandatory, no default)")
    p_augment.add_argument("--copies", type=_nonnegative_int, default=4, help="augmented copies per record")
    p_augment.add_argument(
        "--rotation", type=_bounded_float(0.0, 90.0, high_open=True), default=30.0, help="max rotation, degrees"
    )
    p_augment.add_argument(
        "--shear", type=_bounded_float(0.0, 45.0, high_open=True), default=15.0, help="max shear, degrees"
    )
    p_augment.add_argument("--zoom", type=float, nargs=2, default=(0.8, 1.2), metavar=("LOW", "HIGH"))
    p_augment.add_argument("--flip-h", type=_bounded_float(0.0, 1.0), default=0.5, help="horizontal flip probability")
    p_augment.add_argument("--flip-v", type=_bounded_float(0.0, 1.0), default=0.5, help="vertical flip probability")
    p_augment.add_argument("--min-visibility", type=_bounded_float(0.0, 1.0, low_open=True), default=0.25)
    p_augment.set_defaults(func=_cmd_augment)

    p_split = subparsers.add_parser("split", help="shuffle and split a dataset into train/ and val/")
    p_split.add_argument("--dataset", type=Path, required=True)
    p_split.add_argument("--out", type=Path, required=True, help="parent directory for train/ and val/")
    p_split.add_argument("--seed", type=int, required=True)
    p_split.add_argument("--train-fraction", type=_bounded_float(0.0, 1.0, low_open=True), default=0.8)
    p_split.set_defaults(func=_cmd_split)

    p_validate = subparsers.add_parser("validate", help="report dataset invariant violations")
    p_validate.add_argument("--dataset", type=Path, required=True)
    p_validate.set_defaults(func=_cmd_validate)

    p_evaluate = subparsers.add_parser("evaluate", help="score a detections file against ground truth")
    p_evaluate.add_argument("--dataset", type=Path, required=True)
    p_evaluate.add_argument("--detections", type=Path, required=True)
    p_evaluate.add_argument("--out", type=Path, default=None, help="write the JSON report here")
    p_evaluate.add_argument("--iou-thresholds", type=_iou_threshold_list, default=None, help="comma-separated list")
    p_evaluate.set_defaults(func=_cmd_evaluate)

    p_infer = subparsers.add_parser("infer", help="run detection over an image or directory")
    p_infer.add_argument("--input", type=Path, required=True, help="image file or directory")
    p_infer.add_argument("--out", type=Path, required=True, help="detections file to write")
    backend_group = p_infer.add_mutually_exclusive_group(required=True)
    backend_group.add_argument("--model", type=Path, help="model file for the neural backend")
    backend_group.add_argument("--stub-fixture", type=Path, help="fixture table for the stub backend")
    p_infer.add_argument("--score-threshold", type=_bounded_float(0.0, 1.0), default=det.DEFAULT_SCORE_THRESHOLD)
    p_infer.add_argument("--nms-iou", type=_bounded_float(0.0, 1.0), default=det.DEFAULT_NMS_IOU)
    p_infer.add_argument("--speak-text", action="store_true", help="also print the spoken phrase per image")
    p_infer.set_defaults(func=_cmd_infer)

    p_report = subparsers.add_parser("report", help="summarize a training log CSV")
    p_report.add_argument("--log", type=Path, required=True)
    p_report.add_argument("--out", type=Path, default=None, help="write the JSON summary here")
    p_report.set_defaults(func=_cmd_report)

    p_select = subparsers.add_parser("select-model", help="pick a backend variant within a latency budget")
    p_select.add_argument("--table", type=Path, default=None, help="variant table CSV (default: built-in rows)")
    p_select.add_argument("--budget-ms", type=float, required=True)
    p_select.set_defaults(func=_cmd_select_model)

    p_serve = subparsers.add_parser("serve", help="run the HTTP detection service")
    p_serve.add_argument("--addr", default=os.environ.get("NOTEDETECT_ADDR", "127.0.0.1"))
    p_serve.add_argument("--port", type=_positive_int, default=8000)
    serve_backend = p_serve.add_mutually_exclusive_group()
    serve_backend.add_argument("--model", type=Path, default=os.environ.get("NOTEDETECT_MODEL"))
    serve_backend.add_argument("--stub-fixture", type=Path)
    p_serve.add_argument("--pool", type=_positive_int, default=1, help="backend pool size")
    p_serve.add_argument("--score-threshold", type=_bounded_float(0.0, 1.0), default=det.DEFAULT_SCORE_THRESHOLD)
    p_serve.add_argument("--nms-iou", type=_bounded_float(0.0, 1.0), default=det.DEFAULT_NMS_IOU)
    p_serve.add_argument("--allow-origin", action="append", default=None, help="CORS origin, repeatable")
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        OSError,
        voc.VocError,
        met.MetricsError,
        det.FixtureError,
        det.InferenceError,
        aug.GenerationError,
        aug.DegenerateTransformError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_IOERR


if __name__ == "__main__":
    sys.exit(main())
