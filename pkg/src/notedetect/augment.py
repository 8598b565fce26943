"""Box-aware geometric dataset augmentation: rotation, flips, shear, zoom.

Every transform is expressed as a 2x3 affine matrix mapping source point
(x, y) to (a*x + b*y + tx, c*x + d*y + ty). Images are warped by inverse
mapping with bilinear interpolation; boxes follow their transformed corner
hull, clipped to the output canvas, and are dropped when too little of the
hull stays visible.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ioutil import atomic_write_text, load_image
from .voc import BoundingBox, Dataset, GroundTruthObject, ImageRecord

_MIN_DETERMINANT = 1e-9


class DegenerateTransformError(ValueError):
    """Affine transform with a determinant too close to zero to invert."""


class GenerationError(ValueError):
    """Augmented image ids collide with existing dataset records."""


# cos/sin kept exact at quarter turns so axis-aligned boxes stay axis-aligned
_QUARTER_TURN_TRIG = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}


def _cos_sin_deg(theta_deg: float) -> tuple[float, float]:
    exact = _QUARTER_TURN_TRIG.get(theta_deg % 360.0)
    if exact is not None:
        return exact
    radians = math.radians(theta_deg)
    return math.cos(radians), math.sin(radians)


@dataclass(frozen=True)
class AffineTransform:
    """2x3 planar transform: (x, y) -> (a*x + b*y + tx, c*x + d*y + ty)."""

    a: float
    b: float
    tx: float
    c: float
    d: float
    ty: float

    @property
    def determinant(self) -> float:
        return self.a * self.d - self.b * self.c

    def apply(self, x: float, y: float) -> tuple[float, float]:
        return self.a * x + self.b * y + self.tx, self.c * x + self.d * y + self.ty

    def invert(self) -> AffineTransform:
        det = self.determinant
        if abs(det) < _MIN_DETERMINANT:
            raise DegenerateTransformError(f"determinant {det} below {_MIN_DETERMINANT}")
        ia, ib = self.d / det, -self.b / det
        ic, id_ = -self.c / det, self.a / det
        return AffineTransform(
            ia, ib, -(ia * self.tx + ib * self.ty),
            ic, id_, -(ic * self.tx + id_ * self.ty),
        )

    @staticmethod
    def identity() -> AffineTransform:
        return AffineTransform(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    @staticmethod
    def rotation(theta_deg: float, cx: float, cy: float) -> AffineTransform:
        """Rotate by theta degrees about (cx, cy); +90 maps rightward to upward."""
        cos, sin = _cos_sin_deg(theta_deg)
        return AffineTransform(
            cos, sin, cx - cos * cx - sin * cy,
            -sin, cos, cy + sin * cx - cos * cy,
        )

    @staticmethod
    def shear_x(phi_deg: float, cy: float) -> AffineTransform:
        """Shear along x by phi degrees about the horizontal line y = cy."""
        t = math.tan(math.radians(phi_deg))
        return AffineTransform(1.0, t, -t * cy, 0.0, 1.0, 0.0)

    @staticmethod
    def scaling(k: float, cx: float, cy: float) -> AffineTransform:
        return AffineTransform(k, 0.0, cx * (1.0 - k), 0.0, k, cy * (1.0 - k))

    @staticmethod
    def stretch(kx: float, ky: float) -> AffineTransform:
        """Axis-aligned scale about the origin (used for plain resizes)."""
        return AffineTransform(kx, 0.0, 0.0, 0.0, ky, 0.0)

    @staticmethod
    def flip_horizontal(width: float) -> AffineTransform:
        return AffineTransform(-1.0, 0.0, width, 0.0, 1.0, 0.0)

    @staticmethod
    def flip_vertical(height: float) -> AffineTransform:
        return AffineTransform(1.0, 0.0, 0.0, 0.0, -1.0, height)

    @staticmethod
    def translation(dx: float, dy: float) -> AffineTransform:
        return AffineTransform(1.0, 0.0, dx, 0.0, 1.0, dy)


def compose_affine(primitives: Sequence[AffineTransform]) -> AffineTransform:
    """Combine primitives applied left-to-right into a single transform."""
    if not primitives:
        raise ValueError("compose_affine needs at least one primitive")
    combined = primitives[0]
    for nxt in primitives[1:]:
        combined = AffineTransform(
            nxt.a * combined.a + nxt.b * combined.c,
            nxt.a * combined.b + nxt.b * combined.d,
            nxt.a * combined.tx + nxt.b * combined.ty + nxt.tx,
            nxt.c * combined.a + nxt.d * combined.c,
            nxt.c * combined.b + nxt.d * combined.d,
            nxt.c * combined.tx + nxt.d * combined.ty + nxt.ty,
        )
    if abs(combined.determinant) < _MIN_DETERMINANT:
        raise DegenerateTransformError(
            f"composed determinant {combined.determinant} below {_MIN_DETERMINANT}"
        )
    return combined


def transform_box(
    transform: AffineTransform,
    box: BoundingBox,
    out_width: float,
    out_height: float,
    min_visibility: float,
) -> BoundingBox | None:
    """Map a box through an affine transform.

    Transforms the four corners, takes their axis-aligned hull, clips to the
    output canvas. Returns None ("dropped") when the clipped box is degenerate
    or keeps less than min_visibility of the hull area.
    """
    corners = (
        transform.apply(box.xmin, box.ymin),
        transform.apply(box.xmax, box.ymin),
        transform.apply(box.xmin, box.ymax),
        transform.apply(box.xmax, box.ymax),
    )
    xs = [p[0] for p in corners]
    ys = [p[1] for p in corners]
    hull = BoundingBox(min(xs), min(ys), max(xs), max(ys))

    clipped = BoundingBox(
        max(hull.xmin, 0.0),
        max(hull.ymin, 0.0),
        min(hull.xmax, out_width),
        min(hull.ymax, out_height),
    )
    if not clipped.is_well_formed():
        return None
    if clipped.area < min_visibility * hull.area:
        return None
    return clipped


def resample_image(
    src: np.ndarray, transform: AffineTransform, out_width: int, out_height: int
) -> np.ndarray:
    """Warp an image through an affine transform by inverse bilinear sampling.

    Each output pixel center (x + 0.5, y + 0.5) is pulled back through the
    inverse transform and interpolated from the source; samples outside the
    source take fill value 0 per channel.
    """
    inverse = transform.invert()
    squeeze = src.ndim == 2
    pixels = src[:, :, None] if squeeze else src
    src_h, src_w = pixels.shape[:2]

    xs = np.arange(out_width, dtype=np.float64) + 0.5
    ys = np.arange(out_height, dtype=np.float64) + 0.5
    grid_x, grid_y = np.meshgrid(xs, ys)
    source_x = inverse.a * grid_x + inverse.b * grid_y + inverse.tx
    source_y = inverse.c * grid_x + inverse.d * grid_y + inverse.ty

    fx = source_x - 0.5
    fy = source_y - 0.5
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    wx = fx - x0
    wy = fy - y0

    def gather(yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
        valid = (xx >= 0) & (xx < src_w) & (yy >= 0) & (yy < src_h)
        values = pixels[yy.clip(0, src_h - 1), xx.clip(0, src_w - 1)].astype(np.float64)
        values[~valid] = 0.0
        return values

    w00 = ((1.0 - wx) * (1.0 - wy))[:, :, None]
    w01 = (wx * (1.0 - wy))[:, :, None]
    w10 = ((1.0 - wx) * wy)[:, :, None]
    w11 = (wx * wy)[:, :, None]
    out = (
        w00 * gather(y0, x0)
        + w01 * gather(y0, x0 + 1)
        + w10 * gather(y0 + 1, x0)
        + w11 * gather(y0 + 1, x0 + 1)
    )

    if np.issubdtype(src.dtype, np.integer):
        info = np.iinfo(src.dtype)
        out = np.rint(out).clip(info.min, info.max)
    result = out.astype(src.dtype)
    return result[:, :, 0] if squeeze else result


@dataclass(frozen=True)
class AugmentationSpec:
    """Sampling ranges for one augmentation pass; seed is always explicit."""

    seed: int
    rotation_range: float = 30.0
    shear_range: float = 15.0
    zoom_range: tuple[float, float] = (0.8, 1.2)
    horizontal_flip_prob: float = 0.5
    vertical_flip_prob: float = 0.5
    copies_per_image: int = 4
    min_visibility: float = 0.25

    def __post_init__(self) -> None:
        if not 0.0 <= self.rotation_range < 90.0:
            raise ValueError(f"rotation_range must be in [0, 90), got {self.rotation_range}")
        if not 0.0 <= self.shear_range < 45.0:
            raise ValueError(f"shear_range must be in [0, 45), got {self.shear_range}")
        low, high = self.zoom_range
        if not 0.0 < low <= high:
            raise ValueError(f"zoom_range must satisfy 0 < low <= high, got {self.zoom_range}")
        for name in ("horizontal_flip_prob", "vertical_flip_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.copies_per_image < 0:
            raise ValueError(f"copies_per_image must be >= 0, got {self.copies_per_image}")
        if not 0.0 < self.min_visibility <= 1.0:
            raise ValueError(f"min_visibility must be in (0, 1], got {self.min_visibility}")


@dataclass(frozen=True)
class Provenance:
    """Sampled parameters that fully determine one augmented copy."""

    image_id: str
    source_id: str
    rotation_deg: float
    shear_deg: float
    zoom: float
    flip_horizontal: bool
    flip_vertical: bool
    all_boxes_dropped: bool = False


@dataclass(frozen=True, eq=False)
class AugmentedRecord:
    record: ImageRecord
    image: np.ndarray
    provenance: Provenance


@dataclass(frozen=True, eq=False)
class AugmentedDataset:
    """Originals plus generated records, with the generated pixel buffers attached."""

    dataset: Dataset
    augmented: tuple[AugmentedRecord, ...]

    @property
    def provenance(self) -> tuple[Provenance, ...]:
        return tuple(item.provenance for item in self.augmented)


def record_stream(seed: int, image_id: str) -> np.random.Generator:
    """Per-record random stream derived from (seed, image_id), order-independent."""
    digest = hashlib.sha256(image_id.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 8], "little") for i in (0, 8, 16, 24)]
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *words]))


def _sample_parameters(spec: AugmentationSpec, rng: np.random.Generator) -> tuple[float, float, float, bool, bool]:
    theta = float(rng.uniform(-spec.rotation_range, spec.rotation_range))
    phi = float(rng.uniform(-spec.shear_range, spec.shear_range))
    zoom = float(rng.uniform(spec.zoom_range[0], spec.zoom_range[1]))
    flip_h = bool(rng.random() < spec.horizontal_flip_prob)
    flip_v = bool(rng.random() < spec.vertical_flip_prob)
    return theta, phi, zoom, flip_h, flip_v


def _build_transform(
    theta: float, phi: float, zoom: float, flip_h: bool, flip_v: bool, width: int, height: int
) -> AffineTransform:
    cx, cy = width / 2.0, height / 2.0
    primitives = [
        AffineTransform.rotation(theta, cx, cy),
        AffineTransform.shear_x(phi, cy),
        AffineTransform.scaling(zoom, cx, cy),
    ]
    if flip_h:
        primitives.append(AffineTransform.flip_horizontal(width))
    if flip_v:
        primitives.append(AffineTransform.flip_vertical(height))
    return compose_affine(primitives)


_MAX_SAMPLING_ATTEMPTS = 10


def augment_record(
    record: ImageRecord,
    spec: AugmentationSpec,
    rng: np.random.Generator,
    image: np.ndarray | None = None,
) -> list[AugmentedRecord]:
    """Produce spec.copies_per_image augmented copies of one record.

    Copies that lose every box are re-sampled up to 10 attempts, then emitted
    without boxes and flagged in provenance. Pass `image` to skip re-reading
    record.image_path from disk.
    """
    if image is None:
        image = load_image(record.image_path)

    copies: list[AugmentedRecord] = []
    for copy_index in range(spec.copies_per_image):
        all_dropped = True
        for attempt in range(_MAX_SAMPLING_ATTEMPTS):
            theta, phi, zoom, flip_h, flip_v = _sample_parameters(spec, rng)
            transform = _build_transform(theta, phi, zoom, flip_h, flip_v, record.width, record.height)
            objects = []
            for obj in record.objects:
                new_box = transform_box(
                    transform, obj.box, record.width, record.height, spec.min_visibility
                )
                if new_box is not None:
                    objects.append(GroundTruthObject(obj.label, new_box, obj.difficult))
            if objects or not record.objects:
                all_dropped = False
                break
        new_id = f"{record.image_id}_aug{copy_index}"
        if all_dropped:
            objects = []
        copies.append(
            AugmentedRecord(
                record=ImageRecord(
                    image_id=new_id,
                    width=record.width,
                    height=record.height,
                    depth=record.depth,
                    objects=tuple(objects),
                    image_path=Path(f"{new_id}.png"),
                ),
                image=resample_image(image, transform, record.width, record.height),
                provenance=Provenance(
                    image_id=new_id,
                    source_id=record.image_id,
                    rotation_deg=theta,
                    shear_deg=phi,
                    zoom=zoom,
                    flip_horizontal=flip_h,
                    flip_vertical=flip_v,
                    all_boxes_dropped=all_dropped,
                ),
            )
        )
    return copies


def augment_dataset(
    dataset: Dataset,
    spec: AugmentationSpec,
    images: Mapping[str, np.ndarray] | None = None,
) -> AugmentedDataset:
    """Expand a dataset with seeded augmented copies of every record.

    Each record draws from its own (seed, image_id) stream, so the result is
    the same multiset regardless of record order. Augmented ids follow
    `<source_id>_aug<k>`.
    """
    existing = dataset.image_ids()
    for record in dataset.records:
        for copy_index in range(spec.copies_per_image):
            candidate = f"{record.image_id}_aug{copy_index}"
            if candidate in existing:
                raise GenerationError(
                    f"augmented id '{candidate}' collides with an existing record"
                )

    augmented: list[AugmentedRecord] = []
    for record in dataset.records:
        rng = record_stream(spec.seed, record.image_id)
        source_image = images.get(record.image_id) if images is not None else None
        augmented.extend(augment_record(record, spec, rng, image=source_image))

    combined = Dataset(
        records=dataset.records + tuple(item.record for item in augmented),
        class_set=dataset.class_set,
    )
    return AugmentedDataset(dataset=combined, augmented=tuple(augmented))


PROVENANCE_COLUMNS = (
    "image_id",
    "source_id",
    "rotation_deg",
    "shear_deg",
    "zoom",
    "flip_horizontal",
    "flip_vertical",
    "all_boxes_dropped",
)


def write_provenance(path: Path | str, rows: Iterable[Provenance]) -> None:
    lines = ["\t".join(PROVENANCE_COLUMNS)]
    for row in rows:
        lines.append(
            "\t".join(
                (
                    row.image_id,
                    row.source_id,
                    repr(row.rotation_deg),
                    repr(row.shear_deg),
                    repr(row.zoom),
                    "1" if row.flip_horizontal else "0",
                    "1" if row.flip_vertical else "0",
                    "1" if row.all_boxes_dropped else "0",
                )
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_provenance(path: Path | str) -> list[Provenance]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [line for line in text.splitlines() if line]
    if not lines or tuple(lines[0].split("\t")) != PROVENANCE_COLUMNS:
        raise ValueError(f"{path}: missing or unexpected provenance header")
    rows = []
    for line in lines[1:]:
        parts = line.split("\t")
        if len(parts) != len(PROVENANCE_COLUMNS):
            raise ValueError(f"{path}: expected {len(PROVENANCE_COLUMNS)} columns, got {len(parts)}")
        rows.append(
            Provenance(
                image_id=parts[0],
                source_id=parts[1],
                rotation_deg=float(parts[2]),
                shear_deg=float(parts[3]),
                zoom=float(parts[4]),
                flip_horizontal=parts[5] == "1",
                flip_vertical=parts[6] == "1",
                all_boxes_dropped=parts[7] == "1",
            )
        )
    return rows
