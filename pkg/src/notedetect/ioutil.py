"""Small file and image helpers shared across the toolkit."""

from __future__ import annotations

import io
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image


def atomic_write_bytes(path: Path | str, data: bytes) -> None:
    """Write `data` to `path` via a temp file + rename so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def atomic_write_text(path: Path | str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def image_size(path: Path | str) -> tuple[int, int]:
    """Read (width, height) from an image file header without decoding pixels."""
    with Image.open(path) as img:
        return img.size


def load_image(path: Path | str) -> np.ndarray:
    """Decode an image file into an (H, W, 3) uint8 RGB array."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def decode_image_bytes(data: bytes) -> np.ndarray:
    """Decode raw JPEG/PNG bytes into an (H, W, 3) uint8 RGB array."""
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("RGB"))


def save_image(path: Path | str, pixels: np.ndarray) -> None:
    """Encode an (H, W, 3) uint8 array to `path`; the extension picks the format."""
    suffix = Path(path).suffix.lower()
    fmt = {".jpg": "JPEG", ".jpeg": "JPEG", ".png": "PNG"}.get(suffix, "PNG")
    buffer = io.BytesIO()
    Image.fromarray(pixels).save(buffer, format=fmt)
    atomic_write_bytes(path, buffer.getvalue())
