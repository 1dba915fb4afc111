"""Frame files: 8-bit PGM (P5) and PNG, named frame_000001.<ext>."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ImageFormatError

FRAME_PATTERN = re.compile(r"^frame_(\d{6})\.(pgm|png)$")
FORMATS = ("pgm", "png")


def frame_name(number: int, fmt: str = "pgm") -> str:
    if fmt not in FORMATS:
        raise ValueError(f"frame format must be one of {FORMATS}")
    return f"frame_{number:06d}.{fmt}"


def read_gray(path) -> np.ndarray:
    """Load an image file as a 2D uint8 array, converting color to luminance."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("L", "P", "RGB", "RGBA", "I;16", "I"):
                raise ImageFormatError(f"{path}: unsupported image mode {im.mode}")
            if im.mode in ("I;16", "I"):
                arr = np.asarray(im, dtype=np.float64)
                arr = np.clip(arr * (255.0 / max(arr.max(), 1.0)), 0, 255).astype(np.uint8)
                return arr
            return np.asarray(im.convert("L"), dtype=np.uint8).copy()
    except (OSError, SyntaxError) as exc:
        raise ImageFormatError(f"{path}: {exc}") from None


def write_gray(path, img: np.ndarray) -> None:
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValueError("expected a 2D uint8 array")
    path = Path(path)
    fmt = path.suffix.lower().lstrip(".")
    if fmt not in FORMATS:
        raise ValueError(f"unsupported frame extension {path.suffix!r}")
    Image.fromarray(arr, mode="L").save(path, format="PPM" if fmt == "pgm" else "PNG")


def write_rgb(path, img: np.ndarray) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def list_frames(directory) -> list[tuple[int, Path]]:
    """``(frame number, path)`` for every frame file in ``directory``, in frame order.

    Raises FileNotFoundError if the directory is missing and ImageFormatError
    if two files share a frame number.
    """
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"frames directory not found: {d}")
    found = {}
    for p in d.iterdir():
        m = FRAME_PATTERN.match(p.name)
        if not m:
            continue
        n = int(m.group(1))
        if n in found:
            raise ImageFormatError(f"duplicate frame number {n}: {found[n].name}, {p.name}")
        found[n] = p
    return sorted(found.items())
