"""Orientation assignment and 128-d gradient-histogram descriptors."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .detector import Keypoint, detect_in_pyramid
from .imgio import GrayImage
from .scalespace import GaussianPyramid, PyramidParams, build_dog_pyramid, build_gaussian_pyramid

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
ORI_BINS = 36
ORI_SIGMA_FACTOR = 1.5
ORI_RADIUS_FACTOR = 3.0
ORI_PEAK_RATIO = 0.8

DESC_WIDTH = 4  # sub-blocks per side
DESC_BINS = 8
DESC_SAMPLES = 16  # samples per side of the grid
DESC_BIN_SCALE = 3.0  # sub-block width in units of keypoint scale
DESC_LEN = DESC_WIDTH * DESC_WIDTH * DESC_BINS


@dataclass(frozen=True)
class GradientField:
    """Gradient magnitude/orientation of one pyramid level.

    ``scale`` is the number of original-image pixels per pixel of this level,
    used to map keypoint coordinates into the field.
    """

    magnitude: np.ndarray
    orientation: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    scale: float = 1.0

    @property
    def shape(self):
        return self.magnitude.shape


def compute_gradients(level: GrayImage, scale: float = 1.0) -> GradientField:
    """Central differences inside, one-sided at the border; angle on ``[0, 2pi)``."""
    arr = np.asarray(level, dtype=np.float64)
    dy, dx = np.gradient(arr)
    mag = np.hypot(dx, dy)
    ori = np.mod(np.arctan2(dy, dx), TWO_PI)
    ori[(ori >= TWO_PI) | (mag == 0)] = 0.0
    return GradientField(mag, ori, dx, dy, scale)


def orientation_histogram(kp: Keypoint, gfield: GradientField) -> np.ndarray | None:
    """36-bin Gaussian-weighted histogram of gradient angles around ``kp``."""
    cx, cy = kp.x / gfield.scale, kp.y / gfield.scale
    sigma_w = ORI_SIGMA_FACTOR * kp.sigma / gfield.scale
    radius = int(math.ceil(ORI_RADIUS_FACTOR * sigma_w))
    h, w = gfield.shape
    y0, y1 = max(int(round(cy)) - radius, 0), min(int(round(cy)) + radius, h - 1)
    x0, x1 = max(int(round(cx)) - radius, 0), min(int(round(cx)) + radius, w - 1)
    if y0 > y1 or x0 > x1:
        return None
    yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    d2 = (xx - cx) ** 2 + (yy - cy) ** 2
    inside = d2 <= radius * radius
    if not inside.any():
        return None
    weight = np.exp(-d2[inside] / (2.0 * sigma_w * sigma_w)) * gfield.magnitude[y0 : y1 + 1, x0 : x1 + 1][inside]
    bins = (gfield.orientation[y0 : y1 + 1, x0 : x1 + 1][inside] * (ORI_BINS / TWO_PI)).astype(np.intp) % ORI_BINS
    return np.bincount(bins, weights=weight, minlength=ORI_BINS)


def _peak_angle(hist: np.ndarray, b: int) -> float:
    left, mid, right = hist[(b - 1) % ORI_BINS], hist[b], hist[(b + 1) % ORI_BINS]
    denom = left - 2.0 * mid + right
    delta = 0.5 * (left - right) / denom if denom < 0 else 0.0
    return ((b + 0.5 + delta) * TWO_PI / ORI_BINS) % TWO_PI


def assign_orientation(kp: Keypoint, gfield: GradientField) -> Keypoint | None:
    """Set ``kp.orientation`` to the dominant gradient direction, or ``None`` if there is none."""
    hist = orientation_histogram(kp, gfield)
    if hist is None or not hist.max() > 0:
        return None
    return replace(kp, orientation=_peak_angle(hist, int(np.argmax(hist))))


def assign_orientations(kp: Keypoint, gfield: GradientField, peak_ratio: float = ORI_PEAK_RATIO) -> list[Keypoint]:
    """One keypoint per local histogram peak within ``peak_ratio`` of the maximum."""
    hist = orientation_histogram(kp, gfield)
    if hist is None or not hist.max() > 0:
        return []
    top = hist.max()
    peaks = [
        b
        for b in range(ORI_BINS)
        if hist[b] >= peak_ratio * top and hist[b] > hist[b - 1] and hist[b] > hist[(b + 1) % ORI_BINS]
    ]
    if not peaks:
        peaks = [int(np.argmax(hist))]
    return [replace(kp, orientation=_peak_angle(hist, b)) for b in peaks]


# --- descriptor -----------------------------------------------------------------

_grid = (np.arange(DESC_SAMPLES) - (DESC_SAMPLES - 1) / 2.0)
_GV, _GU = np.meshgrid(_grid, _grid, indexing="ij")  # v: rows, u: columns
_GU, _GV = _GU.ravel(), _GV.ravel()
_SAMPLE_WEIGHT = np.exp(-(_GU**2 + _GV**2) / (2.0 * (DESC_SAMPLES / 2.0) ** 2))
# continuous sub-block coordinate of every grid sample
_ROWBIN = (_GV + DESC_SAMPLES / 2.0) / (DESC_SAMPLES / DESC_WIDTH) - 0.5
_COLBIN = (_GU + DESC_SAMPLES / 2.0) / (DESC_SAMPLES / DESC_WIDTH) - 0.5


def _bilinear(arr: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    h, w = arr.shape
    x0 = np.clip(np.floor(px).astype(np.intp), 0, w - 2)
    y0 = np.clip(np.floor(py).astype(np.intp), 0, h - 2)
    fx, fy = px - x0, py - y0
    return (
        arr[y0, x0] * (1 - fx) * (1 - fy)
        + arr[y0, x0 + 1] * fx * (1 - fy)
        + arr[y0 + 1, x0] * (1 - fx) * fy
        + arr[y0 + 1, x0 + 1] * fx * fy
    )


def raw_descriptors(kps: list[Keypoint], gfield: GradientField) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized 128-d histograms for keypoints sharing ``gfield``.

    Returns ``(hist, valid)``; rows whose sampling window leaves the field are
    zero and flagged invalid.
    """
    n = len(kps)
    if n == 0:
        return np.zeros((0, DESC_LEN)), np.zeros(0, dtype=bool)
    cx = np.array([k.x for k in kps]) / gfield.scale
    cy = np.array([k.y for k in kps]) / gfield.scale
    spacing = DESC_BIN_SCALE * np.array([k.sigma for k in kps]) / gfield.scale / (DESC_SAMPLES / DESC_WIDTH)
    theta = np.array([k.orientation for k in kps])
    cos_t, sin_t = np.cos(theta)[:, None], np.sin(theta)[:, None]
    u = _GU[None, :] * spacing[:, None]
    v = _GV[None, :] * spacing[:, None]
    px = cx[:, None] + cos_t * u - sin_t * v
    py = cy[:, None] + sin_t * u + cos_t * v

    h, w = gfield.shape
    valid = (px.min(1) >= 0) & (px.max(1) <= w - 1) & (py.min(1) >= 0) & (py.max(1) <= h - 1)
    hist = np.zeros((n, DESC_WIDTH + 2, DESC_WIDTH + 2, DESC_BINS))
    if not valid.any():
        return hist[:, 1:-1, 1:-1].reshape(n, DESC_LEN), valid
    idx = np.flatnonzero(valid)
    px, py = px[idx], py[idx]
    gx = _bilinear(gfield.dx, px, py)
    gy = _bilinear(gfield.dy, px, py)
    mag = np.hypot(gx, gy) * _SAMPLE_WEIGHT[None, :]
    rel = np.mod(np.arctan2(gy, gx) - theta[idx, None], TWO_PI)
    obin = rel * (DESC_BINS / TWO_PI)

    r0 = np.floor(_ROWBIN).astype(np.intp)
    c0 = np.floor(_COLBIN).astype(np.intp)
    fr = _ROWBIN - r0
    fc = _COLBIN - c0
    o0 = np.floor(obin).astype(np.intp)
    fo = obin - o0
    kk = np.broadcast_to(idx[:, None], mag.shape)
    for dr, wr in ((0, 1 - fr), (1, fr)):
        for dc, wc in ((0, 1 - fc), (1, fc)):
            for do, wo in ((0, 1 - fo), (1, fo)):
                np.add.at(
                    hist,
                    (kk, np.broadcast_to(r0 + 1 + dr, mag.shape), np.broadcast_to(c0 + 1 + dc, mag.shape), (o0 + do) % DESC_BINS),
                    mag * wr * wc * wo,
                )
    return hist[:, 1:-1, 1:-1].reshape(n, DESC_LEN), valid


def clamp_stage(vec: np.ndarray, clamp: float = 0.2) -> np.ndarray:
    """First L2 normalization followed by clamping; zero rows stay zero."""
    v = np.asarray(vec, dtype=np.float64)
    # rescale by the max first so tiny histograms do not underflow when squared
    peak = np.abs(v).max(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(peak > 0, v / peak, 0.0)
        norm = np.linalg.norm(v, axis=-1, keepdims=True)
        v = np.where(norm > 0, v / norm, 0.0)
    return np.minimum(v, clamp)


def normalize_descriptor(vec: np.ndarray, clamp: float = 0.2) -> np.ndarray:
    """Normalize, clamp at ``clamp``, renormalize."""
    v = clamp_stage(vec, clamp)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(norm > 0, v / norm, 0.0)


def compute_descriptor(kp: Keypoint, gfield: GradientField, clamp: float = 0.2) -> np.ndarray | None:
    """128-d descriptor of one oriented keypoint; ``None`` if its window leaves the image."""
    hist, valid = raw_descriptors([kp], gfield)
    if not valid[0]:
        return None
    return normalize_descriptor(hist[0], clamp)


def root_normalize(d: np.ndarray) -> np.ndarray:
    """L1-normalize then take elementwise square roots (Hellinger embedding).

    All-zero rows are returned unchanged.
    """
    v = np.asarray(d, dtype=np.float64)
    l1 = np.abs(v).sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(l1 > 0, np.sqrt(np.abs(v) / l1), v)


# --- pipeline ----------------------------------------------------------------------


def _nearest_level(gp: GaussianPyramid, kp: Keypoint) -> int:
    return int(np.clip(round(kp.level), 0, gp.octaves[kp.octave].shape[0] - 1))


def describe_in_pyramid(gp: GaussianPyramid, kps: list[Keypoint], p: PyramidParams):
    """Orient and describe ``kps`` using the Gaussian level nearest each keypoint's scale.

    Keypoints that cannot be oriented or whose window leaves the image are dropped.
    Output order follows the input order.
    """
    fields: dict[tuple[int, int], GradientField] = {}

    def field_for(kp):
        key = (kp.octave, _nearest_level(gp, kp))
        if key not in fields:
            fields[key] = compute_gradients(gp.octaves[key[0]][key[1]], gp.octave_scale(key[0]))
        return key, fields[key]

    oriented: list[tuple[tuple[int, int], Keypoint]] = []
    for kp in kps:
        key, gf = field_for(kp)
        if p.multi_orientation:
            oriented.extend((key, k) for k in assign_orientations(kp, gf))
        else:
            k = assign_orientation(kp, gf)
            if k is not None:
                oriented.append((key, k))

    out_kps = [k for _, k in oriented]
    raw = np.zeros((len(oriented), DESC_LEN))
    ok = np.zeros(len(oriented), dtype=bool)
    groups: dict[tuple[int, int], list[int]] = {}
    for i, (key, _) in enumerate(oriented):
        groups.setdefault(key, []).append(i)
    for key, members in groups.items():
        hist, valid = raw_descriptors([out_kps[i] for i in members], fields[key])
        raw[members] = hist
        ok[members] = valid
    desc = normalize_descriptor(raw, p.descriptor_clamp)
    ok &= np.linalg.norm(desc, axis=1) > 0
    if not ok.all():
        logger.debug("dropped %d keypoints at the border or without gradient", int((~ok).sum()))
    keep = np.flatnonzero(ok)
    return [out_kps[i] for i in keep], desc[keep].astype(np.float32)


def describe(img: GrayImage, p: PyramidParams | None = None):
    """Detect, orient and describe keypoints.

    Returns ``(keypoints, descriptors)`` with descriptors as an ``(n, 128)``
    float32 array aligned with ``keypoints``.
    """
    p = p or PyramidParams()
    gp = build_gaussian_pyramid(img, p)
    kps = detect_in_pyramid(gp, build_dog_pyramid(gp), p)
    return describe_in_pyramid(gp, kps, p)
