"""Seeded synthetic images for tests, calibration and demos."""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage


def gaussian_blob(size: int, sigma: float, center=None, amplitude: float = 1.0) -> np.ndarray:
    """A single bright Gaussian spot on a black ``size x size`` background."""
    c = (size - 1) / 2.0 if center is None else center
    cx, cy = (c, c) if np.isscalar(c) else c
    yy, xx = np.mgrid[:size, :size]
    return amplitude * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * sigma * sigma))


def step_edge(size: int, edge_x: float, low: float = 0.2, high: float = 0.8) -> np.ndarray:
    """Vertical step: columns left of ``edge_x`` are ``low``, the rest ``high``."""
    img = np.full((size, size), low)
    img[:, int(math.ceil(edge_x)) :] = high
    return img


def blob_texture(seed: int, size: int = 160, n_blobs: int | None = None) -> np.ndarray:
    """Random superposition of isotropic and elongated Gaussian spots, scaled to ``[0, 1]``.

    Stands in for a radiograph: many well-localized structures of mixed scale
    and orientation, different for every seed.
    """
    rng = np.random.default_rng(seed)
    n_blobs = n_blobs if n_blobs is not None else size * size // 90
    yy, xx = np.mgrid[:size, :size].astype(np.float64)
    img = np.zeros((size, size))
    for _ in range(n_blobs):
        cx, cy = rng.uniform(-8, size + 8, 2)
        s1 = rng.uniform(1.5, 6.0)
        s2 = s1 * rng.uniform(0.35, 1.0)
        ang = rng.uniform(0, math.pi)
        amp = rng.uniform(-1.0, 1.0)
        r = max(s1, s2) * 4
        x0, x1 = int(max(cx - r, 0)), int(min(cx + r + 1, size))
        y0, y1 = int(max(cy - r, 0)), int(min(cy + r + 1, size))
        if x0 >= x1 or y0 >= y1:
            continue
        dx = xx[y0:y1, x0:x1] - cx
        dy = yy[y0:y1, x0:x1] - cy
        u = dx * math.cos(ang) + dy * math.sin(ang)
        v = -dx * math.sin(ang) + dy * math.cos(ang)
        img[y0:y1, x0:x1] += amp * np.exp(-(u * u) / (2 * s1 * s1) - (v * v) / (2 * s2 * s2))
    img = (img - img.mean()) / img.std()
    return 0.5 + 0.5 * np.tanh(0.8 * img)


def noise_image(seed: int, size: int = 128, high: float = 0.02) -> np.ndarray:
    """Uniform white noise in ``[0, high]``."""
    return np.random.default_rng(seed).uniform(0.0, high, (size, size))


def warp(img: np.ndarray, angle_deg: float = 0.0, scale: float = 1.0) -> np.ndarray:
    """Rotate by ``angle_deg`` and zoom by ``scale`` about the image centre (same output size)."""
    arr = np.asarray(img, dtype=np.float64)
    h, w = arr.shape
    c = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    a = math.radians(angle_deg)
    # output (row, col) -> input (row, col)
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]]) / scale
    offset = c - rot @ c
    out = ndimage.affine_transform(arr, rot, offset=offset, order=3, mode="reflect")
    return np.clip(out, 0.0, 1.0)
