"""Image decoding, encoding and raster primitives.

Images are plain 2-D ``float64`` numpy arrays indexed ``[y, x]`` with samples
in ``[0, 1]``. :func:`check_gray` validates that contract.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DimensionError

# 2-D float array, row-major, samples in [0, 1]
GrayImage = np.ndarray

Color = tuple[int, int, int]

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def check_gray(img, name="img"):
    """Return ``img`` as a float64 2-D array, raising if it breaks the GrayImage contract."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be at least 1x1, got {arr.shape}")
    if arr.size and (np.nanmin(arr) < 0.0 or np.nanmax(arr) > 1.0 or np.isnan(arr).any()):
        raise ValueError(f"{name} samples must lie in [0, 1]")
    return arr


def to_grayscale(r, g, b):
    """Rec.601 luminance. Works on scalars or broadcastable arrays."""
    wr, wg, wb = LUMA_WEIGHTS
    return wr * r + wg * g + wb * b


def load_image(path) -> GrayImage:
    """Decode a PGM or PNG file into a grayscale image in ``[0, 1]``.

    Raises ``OSError`` (e.g. ``FileNotFoundError``) for unreadable paths and
    :class:`DecodeError` for unsupported or corrupt contents.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"P5":
        return _decode_pgm(raw, path)
    try:
        with Image.open(io.BytesIO(raw)) as im:
            if im.format != "PNG":
                raise DecodeError(path, f"unsupported format {im.format}")
            im.load()
            return _pil_to_gray(im, path)
    except UnidentifiedImageError as exc:
        raise DecodeError(path, "not a PGM or PNG image") from exc
    except (OSError, SyntaxError) as exc:
        raise DecodeError(path, f"corrupt image data ({exc})") from exc


def _decode_pgm(raw: bytes, path) -> GrayImage:
    # header: magic, width, height, maxval separated by whitespace, '#' comments allowed
    tokens = []
    pos = 2
    n = len(raw)
    while len(tokens) < 3:
        while pos < n and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos : pos + 1] == b"#":
            while pos < n and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DecodeError(path, "truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace byte before the raster
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise DecodeError(path, "malformed PGM header") from exc
    if width < 1 or height < 1:
        raise DecodeError(path, "PGM dimensions must be positive")
    if maxval != 255:
        raise DecodeError(path, f"only maxval 255 is supported, got {maxval}")
    body = raw[pos : pos + width * height]
    if len(body) != width * height:
        raise DecodeError(path, "truncated PGM raster")
    data = np.frombuffer(body, dtype=np.uint8).reshape(height, width)
    return data.astype(np.float64) / 255.0


def _pil_to_gray(im: Image.Image, path) -> GrayImage:
    mode = im.mode
    if mode in ("1", "L", "P", "LA", "PA"):
        if mode in ("P", "PA"):
            im = im.convert("RGB")
            return _rgb_to_gray(np.asarray(im), path)
        arr = np.asarray(im.convert("L"), dtype=np.float64)
        return arr / 255.0
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(im, dtype=np.float64)
        return np.clip(arr / 65535.0, 0.0, 1.0)
    if mode in ("RGB", "RGBA"):
        return _rgb_to_gray(np.asarray(im.convert("RGB")), path)
    raise DecodeError(path, f"unsupported pixel mode {mode}")


def _rgb_to_gray(rgb: np.ndarray, path) -> GrayImage:
    chans = rgb.astype(np.float64) / 255.0
    gray = to_grayscale(chans[..., 0], chans[..., 1], chans[..., 2])
    return np.clip(gray, 0.0, 1.0)


def downsample_half(img: GrayImage) -> GrayImage:
    """Keep every second sample along both axes, starting at index 0."""
    arr = np.asarray(img)
    h, w = arr.shape
    if h < 2 or w < 2:
        raise DimensionError(f"cannot halve a {w}x{h} image")
    return arr[0 : 2 * (h // 2) : 2, 0 : 2 * (w // 2) : 2].copy()


def upsample_double(img: GrayImage) -> GrayImage:
    """Bilinear 2x enlargement; sample ``(2i, 2j)`` equals input sample ``(i, j)``."""
    arr = np.asarray(img, dtype=np.float64)
    h, w = arr.shape
    ys = np.arange(2 * h) / 2.0
    xs = np.arange(2 * w) / 2.0
    y0 = np.minimum(np.floor(ys).astype(int), h - 1)
    x0 = np.minimum(np.floor(xs).astype(int), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bot = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


# --- annotation -------------------------------------------------------------


@dataclass(frozen=True)
class Circle:
    cx: int
    cy: int
    radius: int
    color: Color = (255, 0, 0)


@dataclass(frozen=True)
class Line:
    x0: int
    y0: int
    x1: int
    y1: int
    color: Color = (0, 255, 0)


Overlay = Union[Circle, Line]


def circle_pixels(cx: int, cy: int, radius: int) -> set[tuple[int, int]]:
    """Midpoint circle rasterization, returning ``(x, y)`` pixel positions."""
    pts: set[tuple[int, int]] = set()
    if radius <= 0:
        pts.add((cx, cy))
        return pts
    x, y = radius, 0
    err = 1 - radius
    while x >= y:
        for px, py in ((x, y), (y, x), (-y, x), (-x, y), (-x, -y), (-y, -x), (y, -x), (x, -y)):
            pts.add((cx + px, cy + py))
        y += 1
        if err < 0:
            err += 2 * y + 1
        else:
            x -= 1
            err += 2 * (y - x) + 1
    return pts


def line_pixels(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Bresenham line including both end points."""
    pts = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        pts.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return pts


def render_overlays(img: GrayImage, overlays: Sequence[Overlay]) -> np.ndarray:
    """Return an 8-bit RGB raster of ``img`` with overlays stroked on top (clipped)."""
    gray = np.rint(np.clip(np.asarray(img, dtype=np.float64), 0, 1) * 255).astype(np.uint8)
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    h, w = gray.shape
    for ov in overlays:
        if isinstance(ov, Circle):
            pts = circle_pixels(int(ov.cx), int(ov.cy), int(ov.radius))
        elif isinstance(ov, Line):
            pts = line_pixels(int(ov.x0), int(ov.y0), int(ov.x1), int(ov.y1))
        else:
            raise TypeError(f"unknown overlay {ov!r}")
        for x, y in pts:
            if 0 <= x < w and 0 <= y < h:
                rgb[y, x] = ov.color
    return rgb


def encode_png(img: GrayImage, overlays: Sequence[Overlay], path) -> None:
    """Write ``img`` as an 8-bit PNG: grayscale when there are no overlays, RGB otherwise."""
    arr = np.asarray(img, dtype=np.float64)
    if overlays:
        Image.fromarray(render_overlays(arr, overlays), mode="RGB").save(path, format="PNG")
    else:
        gray = np.rint(np.clip(arr, 0, 1) * 255).astype(np.uint8)
        Image.fromarray(gray, mode="L").save(path, format="PNG")
