"""PPM/PGM image interchange: P6 for 8-bit RGB renders, P5 for binary masks.

Internal computation stays in floating point; these codecs only quantize at
the file boundary.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ValidationError


def quantize(image: np.ndarray) -> np.ndarray:
    """Map float [0,1] pixels to uint8 with round-half-away behavior."""
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    """Write an HxWx3 float image in [0,1] (or uint8) as binary PPM (P6)."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError(f"write_ppm expects HxWx3, got {img.shape}")
    if img.dtype != np.uint8:
        img = quantize(img)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def write_pgm(path: str | Path, mask: np.ndarray) -> None:
    """Write an HxW boolean (or 0/1) mask as binary PGM (P5), 255 = set."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValidationError(f"write_pgm expects HxW, got {m.shape}")
    data = np.where(m.astype(bool), 255, 0).astype(np.uint8)
    h, w = m.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def _read_header(fh, magic: bytes, path) -> tuple[int, int, int]:
    if fh.read(2) != magic:
        raise ValidationError(f"{path}: not a {magic.decode()} file")
    fields = []
    while len(fields) < 3:
        line = fh.readline()
        if not line:
            raise ValidationError(f"{path}: truncated header")
        line = line.split(b"#", 1)[0]
        fields.extend(line.split())
    w, h, maxval = (int(v) for v in fields[:3])
    if maxval != 255:
        raise ValidationError(f"{path}: only 8-bit images supported (maxval {maxval})")
    return w, h, maxval


def read_ppm(path: str | Path) -> np.ndarray:
    """Read a binary PPM (P6) into an HxWx3 float64 image in [0,1]."""
    with open(path, "rb") as fh:
        w, h, _ = _read_header(fh, b"P6", path)
        raw = fh.read(w * h * 3)
    if len(raw) != w * h * 3:
        raise ValidationError(f"{path}: truncated pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).astype(np.float64) / 255.0


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5) into an HxW boolean mask (nonzero = set)."""
    with open(path, "rb") as fh:
        w, h, _ = _read_header(fh, b"P5", path)
        raw = fh.read(w * h)
    if len(raw) != w * h:
        raise ValidationError(f"{path}: truncated pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w) > 127
