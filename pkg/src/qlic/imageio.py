"""Image file I/O. Binary PPM (P6, 8-bit) is the native format and is
bit-exact both ways; PNG reading works when Pillow is installed."""

from __future__ import annotations

import os
import tempfile

import numpy as np


class ImageIOError(ValueError):
    pass


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    """Next whitespace-delimited token, skipping '#' comments."""
    while pos < len(data):
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ImageIOError("truncated PPM header")
    return data[start:pos], pos


def read_ppm(path: str) -> np.ndarray:
    """Read a binary P6 PPM into float32 (H, W, 3) in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P6":
        raise ImageIOError(f"{path}: not a binary PPM (P6) file")
    pos = 2
    fields = []
    for _ in range(3):
        token, pos = _read_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError as exc:
            raise ImageIOError(f"{path}: bad PPM header token {token!r}") from exc
    width, height, maxval = fields
    if maxval != 255:
        raise ImageIOError(f"{path}: only maxval 255 supported, got {maxval}")
    if width <= 0 or height <= 0:
        raise ImageIOError(f"{path}: bad extents {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    payload = data[pos : pos + expected]
    if len(payload) != expected:
        raise ImageIOError(f"{path}: expected {expected} pixel bytes, "
                           f"got {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return pixels.astype(np.float32) / 255.0


def write_ppm(path: str, image: np.ndarray) -> None:
    """Write float [0, 1] (H, W, 3) as binary P6; atomic replace."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ImageIOError(f"expected (H, W, 3) image, got {image.shape}")
    quantized = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    h, w = quantized.shape[:2]
    payload = b"P6\n%d %d\n255\n" % (w, h) + quantized.tobytes()
    atomic_write(path, payload)


def atomic_write(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def have_png_support() -> bool:
    try:
        import PIL.Image  # noqa: F401
    except ImportError:
        return False
    return True


def read_image(path: str, allow_png: bool = True) -> np.ndarray:
    """Read PPM always; PNG too if Pillow is available and allowed."""
    lower = path.lower()
    if lower.endswith(".ppm"):
        return read_ppm(path)
    if lower.endswith(".png"):
        if not allow_png:
            raise ImageIOError("PNG input disabled; convert to PPM")
        if not have_png_support():
            raise ImageIOError("PNG support requires Pillow (pip install Pillow)")
        import PIL.Image
        with PIL.Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
        return rgb.astype(np.float32) / 255.0
    raise ImageIOError(f"unsupported image extension: {path}")
