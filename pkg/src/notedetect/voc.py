"""Pascal VOC banknote dataset model: parsing, emitting, loading, splitting, validating.

Coordinate conventions: VOC XML stores 1-based inclusive integer pixel
coordinates. Internally every box is continuous and 0-based with exclusive
max edges, so a full-width object in a W-pixel image spans [0, W]. Parsing
converts via xmin-1 / ymin-1 (xmax, ymax unchanged); emitting inverts that
and rounds half-up back to integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping
from xml.etree import ElementTree as ET
from xml.sax.saxutils import escape

import numpy as np

from .ioutil import atomic_write_bytes, atomic_write_text, image_size, save_image


class VocError(ValueError):
    """Base class for annotation and dataset errors."""


class VocParseError(VocError):
    """Malformed or structurally incomplete VOC XML."""


class LabelError(VocError):
    """Class name outside the fixed banknote label set."""


class BoxValidationError(VocError):
    """Bounding box violating the geometry invariants."""


class DatasetError(VocError):
    """Dataset directory problems: missing files, inconsistent dimensions."""


CLASS_NAMES: tuple[str, ...] = (
    "20 Rupees",
    "50 Rupees",
    "100 Rupees",
    "500 Rupees",
    "1000 Rupees",
    "5000 Rupees",
)


@dataclass(frozen=True)
class ClassLabel:
    class_id: int
    name: str


CLASS_LABELS: tuple[ClassLabel, ...] = tuple(
    ClassLabel(i, name) for i, name in enumerate(CLASS_NAMES)
)
_LABELS_BY_NAME: Mapping[str, ClassLabel] = {label.name: label for label in CLASS_LABELS}
_LABELS_BY_ID: Mapping[int, ClassLabel] = {label.class_id: label for label in CLASS_LABELS}


def label_from_name(name: str) -> ClassLabel:
    try:
        return _LABELS_BY_NAME[name]
    except KeyError:
        raise LabelError(f"unknown class name {name!r}; expected one of {list(CLASS_NAMES)}") from None


def label_from_id(class_id: int) -> ClassLabel:
    try:
        return _LABELS_BY_ID[class_id]
    except KeyError:
        raise LabelError(f"unknown class id {class_id}; expected 0..{len(CLASS_LABELS) - 1}") from None


def lookup_label(class_id: int) -> ClassLabel | None:
    return _LABELS_BY_ID.get(class_id)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in continuous 0-based pixel coordinates, max edges exclusive."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def is_well_formed(self) -> bool:
        return self.xmin < self.xmax and self.ymin < self.ymax

    def within(self, width: float, height: float) -> bool:
        return (
            self.is_well_formed()
            and 0.0 <= self.xmin
            and self.xmax <= width
            and 0.0 <= self.ymin
            and self.ymax <= height
        )


@dataclass(frozen=True)
class GroundTruthObject:
    label: ClassLabel
    box: BoundingBox
    difficult: bool = False


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: int
    height: int
    depth: int
    objects: tuple[GroundTruthObject, ...]
    image_path: Path | None = None

    @property
    def filename(self) -> str:
        if self.image_path is None:
            return f"{self.image_id}.png"
        return Path(self.image_path).name


@dataclass(frozen=True)
class Dataset:
    records: tuple[ImageRecord, ...]
    class_set: tuple[ClassLabel, ...] = CLASS_LABELS

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def image_ids(self) -> set[str]:
        return {record.image_id for record in self.records}


@dataclass(frozen=True)
class Violation:
    kind: str  # duplicate-id | out-of-bounds-box | zero-area-box
    image_id: str
    message: str


def _round_half_up(value: float) -> int:
    return math.floor(value + 0.5)


def _required_text(parent: ET.Element, tag: str) -> str:
    node = parent.find(tag)
    if node is None or node.text is None:
        raise VocParseError(f"missing required element <{tag}> under <{parent.tag}>")
    return node.text.strip()


def parse_voc_annotation(xml_text: str) -> ImageRecord:
    """Parse one VOC annotation document into a validated ImageRecord.

    Raises VocParseError on malformed XML or missing elements, LabelError on
    names outside the banknote class set, BoxValidationError on degenerate or
    out-of-bounds boxes.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line, column = exc.position
        raise VocParseError(f"malformed XML (line {line}, column {column}): {exc}") from exc
    if root.tag != "annotation":
        raise VocParseError(f"expected <annotation> root, got <{root.tag}>")

    filename = _required_text(root, "filename")
    size = root.find("size")
    if size is None:
        raise VocParseError("missing required element <size>")
    width = int(float(_required_text(size, "width")))
    height = int(float(_required_text(size, "height")))
    depth = int(float(_required_text(size, "depth")))
    if width < 1 or height < 1:
        raise VocParseError(f"non-positive image size {width}x{height}")

    objects: list[GroundTruthObject] = []
    for obj in root.findall("object"):
        label = label_from_name(_required_text(obj, "name"))
        difficult_text = obj.findtext("difficult")
        difficult = difficult_text is not None and difficult_text.strip() not in ("", "0")
        bndbox = obj.find("bndbox")
        if bndbox is None:
            raise VocParseError("missing required element <bndbox> under <object>")
        voc_xmin = float(_required_text(bndbox, "xmin"))
        voc_ymin = float(_required_text(bndbox, "ymin"))
        voc_xmax = float(_required_text(bndbox, "xmax"))
        voc_ymax = float(_required_text(bndbox, "ymax"))
        box = BoundingBox(voc_xmin - 1.0, voc_ymin - 1.0, voc_xmax, voc_ymax)
        if not box.within(width, height):
            raise BoxValidationError(
                f"box ({box.xmin}, {box.ymin}, {box.xmax}, {box.ymax}) "
                f"invalid for a {width}x{height} image"
            )
        objects.append(GroundTruthObject(label, box, difficult))

    return ImageRecord(
        image_id=Path(filename).stem,
        width=width,
        height=height,
        depth=depth,
        objects=tuple(objects),
        image_path=Path(filename),
    )


def emit_voc_annotation(record: ImageRecord) -> str:
    """Serialize a record to canonical VOC XML (fixed order, 2-space indent, integer boxes)."""
    lines = [
        "<annotation>",
        f"  <filename>{escape(record.filename)}</filename>",
        "  <size>",
        f"    <width>{record.width}</width>",
        f"    <height>{record.height}</height>",
        f"    <depth>{record.depth}</depth>",
        "  </size>",
    ]
    for obj in record.objects:
        box = obj.box
        lines += [
            "  <object>",
            f"    <name>{escape(obj.label.name)}</name>",
            f"    <difficult>{1 if obj.difficult else 0}</difficult>",
            "    <bndbox>",
            f"      <xmin>{_round_half_up(box.xmin + 1.0)}</xmin>",
            f"      <ymin>{_round_half_up(box.ymin + 1.0)}</ymin>",
            f"      <xmax>{_round_half_up(box.xmax)}</xmax>",
            f"      <ymax>{_round_half_up(box.ymax)}</ymax>",
            "    </bndbox>",
            "  </object>",
        ]
    lines.append("</annotation>")
    return "\n".join(lines) + "\n"


def _find_image(images_dir: Path, record: ImageRecord) -> Path:
    declared = images_dir / record.filename
    if declared.is_file():
        return declared
    candidates = sorted(
        path for path in images_dir.glob(f"{record.image_id}.*") if path.is_file()
    )
    if candidates:
        return candidates[0]
    raise DatasetError(f"no image file for annotation '{record.image_id}' in {images_dir}")


def _check_directories(annotations_dir: Path, images_dir: Path) -> None:
    if not annotations_dir.is_dir():
        raise DatasetError(f"annotations directory not found: {annotations_dir}")
    if not images_dir.is_dir():
        raise DatasetError(f"images directory not found: {images_dir}")


def _load_record(xml_path: Path, images_dir: Path) -> ImageRecord:
    record = parse_voc_annotation(xml_path.read_text(encoding="utf-8"))
    if record.image_id != xml_path.stem:
        raise DatasetError(
            f"annotation file '{xml_path.name}' declares filename "
            f"'{record.filename}' with a different stem"
        )
    image_path = _find_image(images_dir, record)
    actual = image_size(image_path)
    if actual != (record.width, record.height):
        raise DatasetError(
            f"'{record.image_id}': annotation says {record.width}x{record.height}, "
            f"image file is {actual[0]}x{actual[1]}"
        )
    return replace(record, image_path=image_path)


def load_dataset(annotations_dir: Path | str, images_dir: Path | str) -> Dataset:
    """Load a VOC dataset directory pair into memory, sorted by image_id.

    Cross-checks each annotation's declared size against the image file header.
    """
    annotations_dir = Path(annotations_dir)
    images_dir = Path(images_dir)
    _check_directories(annotations_dir, images_dir)
    records = [
        _load_record(xml_path, images_dir)
        for xml_path in sorted(annotations_dir.glob("*.xml"))
    ]
    records.sort(key=lambda r: r.image_id)
    return Dataset(records=tuple(records))


def scan_dataset(
    annotations_dir: Path | str, images_dir: Path | str
) -> tuple[Dataset, list[Violation]]:
    """Lenient companion to load_dataset for auditing a directory.

    Files that fail to load are reported as 'invalid-annotation' violations
    instead of aborting the scan; the loadable remainder is additionally run
    through validate_dataset.
    """
    annotations_dir = Path(annotations_dir)
    images_dir = Path(images_dir)
    _check_directories(annotations_dir, images_dir)
    records = []
    violations: list[Violation] = []
    for xml_path in sorted(annotations_dir.glob("*.xml")):
        try:
            records.append(_load_record(xml_path, images_dir))
        except VocError as exc:
            violations.append(Violation("invalid-annotation", xml_path.stem, str(exc)))
    records.sort(key=lambda r: r.image_id)
    dataset = Dataset(records=tuple(records))
    return dataset, violations + validate_dataset(dataset)


def save_dataset(
    dataset: Dataset,
    out_dir: Path | str,
    images: Mapping[str, np.ndarray] | None = None,
) -> Dataset:
    """Write `annotations/*.xml` and `images/*` under out_dir.

    Records whose image_id appears in `images` get their pixels encoded as PNG;
    all others have their existing image file copied verbatim. Returns the
    dataset re-rooted at the written paths.
    """
    out_dir = Path(out_dir)
    annotations_dir = out_dir / "annotations"
    images_dir = out_dir / "images"
    annotations_dir.mkdir(parents=True, exist_ok=True)
    images_dir.mkdir(parents=True, exist_ok=True)

    written = []
    for record in dataset.records:
        if images is not None and record.image_id in images:
            image_path = images_dir / f"{record.image_id}.png"
            save_image(image_path, images[record.image_id])
        else:
            image_path = images_dir / record.filename
            atomic_write_bytes(image_path, Path(record.image_path).read_bytes())
        rerooted = replace(record, image_path=image_path)
        atomic_write_text(annotations_dir / f"{record.image_id}.xml", emit_voc_annotation(rerooted))
        written.append(rerooted)
    return Dataset(records=tuple(written), class_set=dataset.class_set)


def split_dataset(
    dataset: Dataset, train_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Deterministically shuffle and split into (train, validation) datasets."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if not dataset.records:
        raise ValueError("cannot split an empty dataset")

    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    order = rng.permutation(len(dataset.records))
    shuffled = [dataset.records[i] for i in order]
    # tolerance absorbs float noise in n * fraction so e.g. 10 * 0.8 stays at 8
    n_train = math.ceil(len(shuffled) * train_fraction - 1e-9)
    train = Dataset(records=tuple(shuffled[:n_train]), class_set=dataset.class_set)
    validation = Dataset(records=tuple(shuffled[n_train:]), class_set=dataset.class_set)
    return train, validation


def validate_dataset(dataset: Dataset) -> list[Violation]:
    """Collect every invariant violation; an empty list means the dataset is valid."""
    violations: list[Violation] = []
    seen: set[str] = set()
    for record in dataset.records:
        if record.image_id in seen:
            violations.append(
                Violation("duplicate-id", record.image_id, f"image_id '{record.image_id}' appears more than once")
            )
        seen.add(record.image_id)
        for obj in record.objects:
            box = obj.box
            coords = f"({box.xmin}, {box.ymin}, {box.xmax}, {box.ymax})"
            if not box.is_well_formed():
                violations.append(
                    Violation("zero-area-box", record.image_id, f"box {coords} has no area")
                )
            elif not box.within(record.width, record.height):
                violations.append(
                    Violation(
                        "out-of-bounds-box",
                        record.image_id,
                        f"box {coords} exceeds the {record.width}x{record.height} image",
                    )
                )
    return violations


def dataset_from_records(records: Iterable[ImageRecord]) -> Dataset:
    return Dataset(records=tuple(records))
