"""Image-to-detections pipeline around a pluggable inference backend.

A backend declares its square input size and pixel format and maps a
prepared buffer to normalized boxes, class ids, and scores. Everything
around it (resize, score filtering, coordinate mapping, per-class NMS,
empty-result message) lives here, so a fixture-driven stub and a real
model backend behave identically.
"""

from __future__ import annotations

import logging
import queue
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Mapping, Protocol, Sequence

import numpy as np
from PIL import Image

from .ioutil import atomic_write_text
from .metrics import Detection, iou
from .voc import BoundingBox, ClassLabel, Dataset, lookup_label

logger = logging.getLogger(__name__)

EMPTY_RESULT_MESSAGE = "No currency notes identified"

DEFAULT_SCORE_THRESHOLD = 0.5
DEFAULT_NMS_IOU = 0.5


class FixtureError(ValueError):
    """Malformed stub fixture file."""


class InferenceError(RuntimeError):
    """Backend failed or is unavailable; message carries the diagnostics."""


@dataclass(frozen=True)
class BackendInfo:
    name: str
    version: str


@dataclass(frozen=True)
class RawDetections:
    """Backend output: parallel tuples of normalized boxes, class ids, scores.

    Boxes are (ymin, xmin, ymax, xmax) fractions of the source image.
    """

    boxes: tuple[tuple[float, float, float, float], ...]
    class_ids: tuple[int, ...]
    scores: tuple[float, ...]

    def __post_init__(self) -> None:
        if not len(self.boxes) == len(self.class_ids) == len(self.scores):
            raise ValueError("boxes, class_ids, and scores must have equal lengths")


EMPTY_RAW_DETECTIONS = RawDetections(boxes=(), class_ids=(), scores=())


@dataclass(frozen=True)
class ScaleInfo:
    source_width: int
    source_height: int
    input_size: int


@dataclass(frozen=True)
class InferenceTiming:
    preprocess_s: float
    inference_s: float
    postprocess_s: float


@dataclass(frozen=True)
class DetectionResult:
    """Detections in pixel space, sorted by descending score.

    empty_message is present exactly when detections is empty.
    """

    detections: tuple[Detection, ...]
    empty_message: str | None
    timing: InferenceTiming


class DetectorBackend(Protocol):
    @property
    def input_size(self) -> int: ...

    @property
    def pixel_format(self) -> str:
        """Either "rgb8" (uint8) or "float01" (float32 scaled to [0, 1])."""
        ...

    @property
    def info(self) -> BackendInfo: ...

    def raw_detect(self, inputs: np.ndarray, image_id: str | None = None) -> RawDetections:
        """Run the model on one prepared buffer. Exclusive use per instance."""
        ...


def preprocess(
    image: np.ndarray, input_size: int, pixel_format: str = "rgb8"
) -> tuple[np.ndarray, ScaleInfo]:
    """Resize to the backend's square input and convert the pixel format.

    Plain bilinear resize with no aspect preservation; the source dimensions
    survive in ScaleInfo so detections can be mapped back.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 image, got shape {image.shape}")
    height, width = image.shape[:2]
    if height == 0 or width == 0:
        raise ValueError("image has a zero dimension")

    if (height, width) == (input_size, input_size):
        resized = np.array(image, dtype=np.uint8, copy=True)
    else:
        pil = Image.fromarray(np.ascontiguousarray(image.astype(np.uint8)))
        resized = np.asarray(pil.resize((input_size, input_size), Image.BILINEAR))

    if pixel_format == "rgb8":
        buffer = resized.astype(np.uint8)
    elif pixel_format == "float01":
        buffer = resized.astype(np.float32) / 255.0
    else:
        raise ValueError(f"unknown pixel format '{pixel_format}'")
    return buffer, ScaleInfo(source_width=width, source_height=height, input_size=input_size)


def nms(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy non-maximum suppression over detections of one class.

    Keeps the highest-scored remaining detection (ties by xmin, then ymin)
    and discards the rest that overlap it with IoU strictly above the
    threshold.
    """
    remaining = sorted(dets, key=lambda d: (-d.score, d.box.xmin, d.box.ymin))
    kept: list[Detection] = []
    while remaining:
        best = remaining.pop(0)
        kept.append(best)
        remaining = [d for d in remaining if iou(best.box, d.box) <= iou_threshold]
    return kept


def postprocess(
    raw: RawDetections,
    scale: ScaleInfo,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
    nms_iou: float = DEFAULT_NMS_IOU,
    image_id: str = "",
) -> list[Detection]:
    """Filter, scale to source pixels, suppress per class, and sort.

    Unknown class ids are dropped (counted in one warning); boxes that
    collapse to zero area after clamping are dropped silently.
    """
    width, height = scale.source_width, scale.source_height
    by_class: dict[int, list[Detection]] = {}
    unknown = 0
    for (ymin, xmin, ymax, xmax), class_id, score in zip(raw.boxes, raw.class_ids, raw.scores):
        if score < score_threshold:
            continue
        label = lookup_label(class_id)
        if label is None:
            unknown += 1
            continue
        box = BoundingBox(
            xmin=min(max(xmin * width, 0.0), float(width)),
            ymin=min(max(ymin * height, 0.0), float(height)),
            xmax=min(max(xmax * width, 0.0), float(width)),
            ymax=min(max(ymax * height, 0.0), float(height)),
        )
        if not box.is_well_formed():
            continue
        by_class.setdefault(class_id, []).append(
            Detection(image_id=image_id, label=label, box=box, score=score)
        )
    if unknown:
        logger.warning("dropped %d detections with unknown class ids", unknown)

    survivors: list[Detection] = []
    for class_id in sorted(by_class):
        survivors.extend(nms(by_class[class_id], nms_iou))
    survivors.sort(key=lambda d: (-d.score, d.box.xmin, d.box.ymin))
    return survivors


def infer(
    backend: DetectorBackend,
    image: np.ndarray,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
    nms_iou: float = DEFAULT_NMS_IOU,
    image_id: str = "",
) -> DetectionResult:
    """Full pipeline: preprocess, backend raw_detect, postprocess.

    Deterministic for a fixed backend and image; timings are wall-clock and
    excluded from any equality contract.
    """
    started = time.perf_counter()
    buffer, scale = preprocess(image, backend.input_size, backend.pixel_format)
    preprocessed = time.perf_counter()
    try:
        raw = backend.raw_detect(buffer, image_id=image_id or None)
    except Exception as exc:
        raise InferenceError(f"backend '{backend.info.name}' failed: {exc}") from exc
    inferred = time.perf_counter()
    detections = postprocess(raw, scale, score_threshold, nms_iou, image_id=image_id)
    done = time.perf_counter()

    return DetectionResult(
        detections=tuple(detections),
        empty_message=None if detections else EMPTY_RESULT_MESSAGE,
        timing=InferenceTiming(
            preprocess_s=preprocessed - started,
            inference_s=inferred - preprocessed,
            postprocess_s=done - inferred,
        ),
    )


def label_to_phrase(label: ClassLabel) -> str:
    """Spoken-output contract: the utterance is the label name verbatim."""
    return label.name


# --- stub backend and fixtures ---

Fixture = Mapping[str, RawDetections]


def stub_detect(fixture: Fixture, image_id: str | None) -> RawDetections:
    """Rows recorded for image_id, in file order; absent ids yield no rows."""
    if image_id is None:
        return EMPTY_RAW_DETECTIONS
    return fixture.get(image_id, EMPTY_RAW_DETECTIONS)


def load_stub_fixture(path: Path | str) -> dict[str, RawDetections]:
    """Parse the stub fixture table (normalized ymin/xmin/ymax/xmax rows)."""
    rows: dict[str, list[tuple[tuple[float, float, float, float], int, float]]] = {}
    text = Path(path).read_text(encoding="utf-8")
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 7:
            raise FixtureError(f"{path}:{number}: expected 7 tab-separated fields, got {len(parts)}")
        try:
            class_id = int(parts[1])
            score = float(parts[2])
            ymin, xmin, ymax, xmax = (float(v) for v in parts[3:7])
        except ValueError as exc:
            raise FixtureError(f"{path}:{number}: {exc}") from exc
        if not 0.0 <= score <= 1.0:
            raise FixtureError(f"{path}:{number}: score {score} outside [0, 1]")
        coords = (ymin, xmin, ymax, xmax)
        if any(not 0.0 <= v <= 1.0 for v in coords):
            raise FixtureError(f"{path}:{number}: coordinates must be normalized to [0, 1]")
        if ymin > ymax or xmin > xmax:
            raise FixtureError(f"{path}:{number}: box has min > max")
        rows.setdefault(parts[0], []).append((coords, class_id, score))

    return {
        image_id: RawDetections(
            boxes=tuple(box for box, _, _ in entries),
            class_ids=tuple(class_id for _, class_id, _ in entries),
            scores=tuple(score for _, _, score in entries),
        )
        for image_id, entries in rows.items()
    }


def write_stub_fixture(path: Path | str, fixture: Fixture) -> None:
    lines = []
    for image_id in fixture:
        raw = fixture[image_id]
        for (ymin, xmin, ymax, xmax), class_id, score in zip(raw.boxes, raw.class_ids, raw.scores):
            lines.append(
                "\t".join(
                    (image_id, str(class_id), repr(score), repr(ymin), repr(xmin), repr(ymax), repr(xmax))
                )
            )
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def fixture_from_dataset(dataset: Dataset, score: float = 1.0) -> dict[str, RawDetections]:
    """Turn ground truth into a stub fixture (normalized, fixed score).

    Feeding this back through infer and evaluate closes the pipeline loop.
    """
    fixture = {}
    for record in dataset.records:
        boxes = []
        class_ids = []
        for obj in record.objects:
            boxes.append(
                (
                    obj.box.ymin / record.height,
                    obj.box.xmin / record.width,
                    obj.box.ymax / record.height,
                    obj.box.xmax / record.width,
                )
            )
            class_ids.append(obj.label.class_id)
        fixture[record.image_id] = RawDetections(
            boxes=tuple(boxes),
            class_ids=tuple(class_ids),
            scores=(score,) * len(boxes),
        )
    return fixture


class StubBackend:
    """Deterministic backend that replays fixture rows keyed by image_id."""

    def __init__(self, fixture: Fixture, input_size: int = 448):
        self._fixture = dict(fixture)
        self._input_size = input_size

    @property
    def input_size(self) -> int:
        return self._input_size

    @property
    def pixel_format(self) -> str:
        return "rgb8"

    @property
    def info(self) -> BackendInfo:
        return BackendInfo(name="stub", version="1")

    @classmethod
    def from_file(cls, path: Path | str, input_size: int = 448) -> "StubBackend":
        return cls(load_stub_fixture(path), input_size=input_size)

    def raw_detect(self, inputs: np.ndarray, image_id: str | None = None) -> RawDetections:
        return stub_detect(self._fixture, image_id)


class TFLiteBackend:
    """Backend over a .tflite detection model with the standard four outputs.

    The interpreter is injectable for tests; by default tflite_runtime is
    tried first, then the tensorflow fallback.
    """

    def __init__(self, model_path: Path | str, interpreter_factory: Callable | None = None):
        factory = interpreter_factory or _default_interpreter_factory()
        self._interpreter = factory(model_path=str(model_path))
        self._interpreter.allocate_tensors()
        input_details = self._interpreter.get_input_details()[0]
        shape = input_details["shape"]
        if len(shape) != 4 or shape[1] != shape[2]:
            raise InferenceError(f"expected a square NHWC input, got shape {list(shape)}")
        self._input_index = input_details["index"]
        self._input_size = int(shape[1])
        self._float_input = np.issubdtype(np.dtype(input_details["dtype"]), np.floating)
        self._model_name = Path(model_path).stem

    @property
    def input_size(self) -> int:
        return self._input_size

    @property
    def pixel_format(self) -> str:
        return "float01" if self._float_input else "rgb8"

    @property
    def info(self) -> BackendInfo:
        return BackendInfo(name=self._model_name, version="tflite")

    def raw_detect(self, inputs: np.ndarray, image_id: str | None = None) -> RawDetections:
        self._interpreter.set_tensor(self._input_index, inputs[None, ...])
        self._interpreter.invoke()
        outputs = self._interpreter.get_output_details()
        boxes = np.asarray(self._interpreter.get_tensor(outputs[0]["index"]))[0]
        class_ids = np.asarray(self._interpreter.get_tensor(outputs[1]["index"]))[0]
        scores = np.asarray(self._interpreter.get_tensor(outputs[2]["index"]))[0]
        count = int(np.asarray(self._interpreter.get_tensor(outputs[3]["index"])).reshape(-1)[0])
        return RawDetections(
            boxes=tuple(tuple(float(v) for v in box) for box in boxes[:count]),
            class_ids=tuple(int(c) for c in class_ids[:count]),
            scores=tuple(float(np.clip(s, 0.0, 1.0)) for s in scores[:count]),
        )


def _default_interpreter_factory() -> Callable:
    try:
        from tflite_runtime.interpreter import Interpreter

        return Interpreter
    except ImportError:
        pass
    try:
        from tensorflow.lite import Interpreter

        return Interpreter
    except ImportError as exc:
        raise InferenceError(
            "no TFLite runtime available; install tflite-runtime or tensorflow, "
            "or use a stub fixture"
        ) from exc


class BackendPool:
    """Fixed pool of backend instances handed out FIFO.

    Backends are single-request-at-a-time; the pool serializes concurrent
    callers without blocking unrelated work.
    """

    def __init__(self, factory: Callable[[], DetectorBackend], size: int = 1):
        if size < 1:
            raise ValueError(f"pool size must be >= 1, got {size}")
        self._queue: queue.Queue[DetectorBackend] = queue.Queue()
        for _ in range(size):
            self._queue.put(factory())
        self.size = size

    @contextmanager
    def acquire(self) -> Iterator[DetectorBackend]:
        backend = self._queue.get()
        try:
            yield backend
        finally:
            self._queue.put(backend)
