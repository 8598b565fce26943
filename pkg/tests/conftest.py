"""Shared builders for the test modules.

Grid-placed records keep every box inside its own cell, so boxes never
overlap: the datasets survive NMS untouched and stub fixtures derived from
them reproduce the ground truth perfectly.
"""

from pathlib import Path

import numpy as np
import pytest

from notedetect import (
    BoundingBox,
    Dataset,
    GroundTruthObject,
    ImageRecord,
    emit_voc_annotation,
    label_from_id,
    load_dataset,
)
from notedetect.ioutil import atomic_write_text, save_image

GRID_IMAGE_SIZE = 128
_CELLS_PER_SIDE = 4
_CELL = GRID_IMAGE_SIZE // _CELLS_PER_SIDE


def make_grid_record(
    rng: np.random.Generator,
    image_id: str,
    min_boxes: int = 1,
    max_boxes: int = 4,
    difficult_prob: float = 0.0,
) -> ImageRecord:
    num_boxes = int(rng.integers(min_boxes, max_boxes + 1))
    cells = rng.choice(_CELLS_PER_SIDE**2, size=num_boxes, replace=False)
    objects = []
    for cell in cells:
        left = (int(cell) % _CELLS_PER_SIDE) * _CELL
        top = (int(cell) // _CELLS_PER_SIDE) * _CELL
        xmin = left + int(rng.integers(2, 8))
        ymin = top + int(rng.integers(2, 8))
        xmax = left + int(rng.integers(_CELL - 8, _CELL - 2))
        ymax = top + int(rng.integers(_CELL - 8, _CELL - 2))
        objects.append(
            GroundTruthObject(
                label=label_from_id(int(rng.integers(0, 6))),
                box=BoundingBox(float(xmin), float(ymin), float(xmax), float(ymax)),
                difficult=bool(rng.random() < difficult_prob),
            )
        )
    return ImageRecord(
        image_id=image_id,
        width=GRID_IMAGE_SIZE,
        height=GRID_IMAGE_SIZE,
        depth=3,
        objects=tuple(objects),
        image_path=None,
    )


def write_disk_dataset(root: Path, records, rng: np.random.Generator) -> Dataset:
    """Materialize records as annotations/*.xml plus random PNGs, then reload."""
    annotations = root / "annotations"
    images = root / "images"
    annotations.mkdir(parents=True)
    images.mkdir(parents=True)
    for record in records:
        pixels = rng.integers(0, 256, size=(record.height, record.width, 3), dtype=np.uint8)
        save_image(images / f"{record.image_id}.png", pixels)
        atomic_write_text(annotations / f"{record.image_id}.xml", emit_voc_annotation(record))
    return load_dataset(annotations, images)


@pytest.fixture
def disk_dataset_factory(tmp_path):
    counter = {"n": 0}

    def build(num_images: int = 4, seed: int = 7, **record_kwargs) -> tuple[Path, Dataset]:
        rng = np.random.default_rng(seed)
        records = [
            make_grid_record(rng, f"img{i:03d}", **record_kwargs) for i in range(num_images)
        ]
        counter["n"] += 1
        root = tmp_path / f"dataset{counter['n']}"
        return root, write_disk_dataset(root, records, rng)

    return build
