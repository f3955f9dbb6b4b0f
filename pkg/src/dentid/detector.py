"""Scale-space extremum detection, subpixel refinement and keypoint filtering."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .imgio import GrayImage
from .scalespace import (
    DoGPyramid,
    GaussianPyramid,
    PyramidParams,
    build_dog_pyramid,
    build_gaussian_pyramid,
)

MAX_REFINE_ITERATIONS = 5
MIN_HESSIAN_DET = 1e-10

_NEIGHBOURS = [
    (dl, dy, dx)
    for dl in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dx in (-1, 0, 1)
    if (dl, dy, dx) != (0, 0, 0)
]


@dataclass(frozen=True)
class RawExtremum:
    octave: int
    level: int
    x: int
    y: int
    is_max: bool


@dataclass(frozen=True)
class Refined:
    """A refined extremum: final sample, offset ``(dx, dy, dlevel)`` and interpolated DoG value."""

    extremum: RawExtremum
    offset: np.ndarray
    value: float


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    sigma: float
    octave: int
    level: float
    response: float
    orientation: float = 0.0


# --- extremum scan ------------------------------------------------------------


def _scan_octave(dog: np.ndarray):
    """Index arrays ``(level, y, x, is_max)`` of strict 26-neighbour extrema."""
    n_lv, h, w = dog.shape
    if n_lv < 3 or h < 3 or w < 3:
        empty = np.zeros(0, dtype=np.intp)
        return empty, empty, empty, np.zeros(0, dtype=bool)
    centre = dog[1:-1, 1:-1, 1:-1]
    is_max = np.ones(centre.shape, dtype=bool)
    is_min = np.ones(centre.shape, dtype=bool)
    for dl, dy, dx in _NEIGHBOURS:
        nb = dog[1 + dl : n_lv - 1 + dl, 1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx]
        is_max &= centre > nb
        is_min &= centre < nb
    lv, ys, xs = np.nonzero(is_max | is_min)
    return lv + 1, ys + 1, xs + 1, is_max[lv, ys, xs]


def scan_extrema(dog: DoGPyramid) -> list[RawExtremum]:
    """Every interior sample strictly above or strictly below all 26 neighbours.

    Ordered by octave, level, y, x.
    """
    out = []
    for o, stack in enumerate(dog.octaves):
        lv, ys, xs, mx = _scan_octave(stack)
        out.extend(
            RawExtremum(o, int(l), int(x), int(y), bool(m)) for l, y, x, m in zip(lv, ys, xs, mx)
        )
    return out


# --- subpixel refinement ------------------------------------------------------


def _derivatives(dog: np.ndarray, lv, ys, xs):
    """Central-difference gradient ``(n, 3)`` and Hessian ``(n, 3, 3)`` in (x, y, level) order."""
    c = dog[lv, ys, xs]
    dx = 0.5 * (dog[lv, ys, xs + 1] - dog[lv, ys, xs - 1])
    dy = 0.5 * (dog[lv, ys + 1, xs] - dog[lv, ys - 1, xs])
    ds = 0.5 * (dog[lv + 1, ys, xs] - dog[lv - 1, ys, xs])
    dxx = dog[lv, ys, xs + 1] - 2 * c + dog[lv, ys, xs - 1]
    dyy = dog[lv, ys + 1, xs] - 2 * c + dog[lv, ys - 1, xs]
    dss = dog[lv + 1, ys, xs] - 2 * c + dog[lv - 1, ys, xs]
    dxy = 0.25 * (
        dog[lv, ys + 1, xs + 1] - dog[lv, ys + 1, xs - 1] - dog[lv, ys - 1, xs + 1] + dog[lv, ys - 1, xs - 1]
    )
    dxs = 0.25 * (
        dog[lv + 1, ys, xs + 1] - dog[lv + 1, ys, xs - 1] - dog[lv - 1, ys, xs + 1] + dog[lv - 1, ys, xs - 1]
    )
    dys = 0.25 * (
        dog[lv + 1, ys + 1, xs] - dog[lv + 1, ys - 1, xs] - dog[lv - 1, ys + 1, xs] + dog[lv - 1, ys - 1, xs]
    )
    grad = np.stack([dx, dy, ds], axis=-1)
    hess = np.stack(
        [
            np.stack([dxx, dxy, dxs], axis=-1),
            np.stack([dxy, dyy, dys], axis=-1),
            np.stack([dxs, dys, dss], axis=-1),
        ],
        axis=-2,
    )
    return c, grad, hess


def _refine_octave(dog: np.ndarray, lv, ys, xs):
    """Batched Newton refinement on one DoG octave.

    Returns ``(keep, lv, ys, xs, offset, value)`` where ``keep`` flags entries that
    converged; the position arrays hold each entry's final sample.
    """
    n_lv, h, w = dog.shape
    lv = np.array(lv, dtype=np.intp)
    ys = np.array(ys, dtype=np.intp)
    xs = np.array(xs, dtype=np.intp)
    n = len(lv)
    offset = np.zeros((n, 3))
    value = np.zeros(n)
    keep = np.zeros(n, dtype=bool)
    active = np.arange(n)

    for it in range(MAX_REFINE_ITERATIONS):
        if active.size == 0:
            break
        a_lv, a_y, a_x = lv[active], ys[active], xs[active]
        c, grad, hess = _derivatives(dog, a_lv, a_y, a_x)
        ok = np.abs(np.linalg.det(hess)) >= MIN_HESSIAN_DET
        active, c, grad, hess = active[ok], c[ok], grad[ok], hess[ok]
        if active.size == 0:
            break
        off = -np.linalg.solve(hess, grad[..., None])[..., 0]
        done = np.all(np.abs(off) <= 0.5, axis=1)

        fin = active[done]
        offset[fin] = off[done]
        value[fin] = c[done] + 0.5 * np.einsum("ij,ij->i", grad[done], off[done])
        keep[fin] = True

        if it == MAX_REFINE_ITERATIONS - 1:
            break
        moving = active[~done]
        step = np.rint(off[~done]).astype(np.intp)
        nx = xs[moving] + step[:, 0]
        ny = ys[moving] + step[:, 1]
        nl = lv[moving] + step[:, 2]
        inside = (nx >= 1) & (nx <= w - 2) & (ny >= 1) & (ny <= h - 2) & (nl >= 1) & (nl <= n_lv - 2)
        moving = moving[inside]
        xs[moving], ys[moving], lv[moving] = nx[inside], ny[inside], nl[inside]
        active = moving
    return keep, lv, ys, xs, offset, value


def refine_subpixel(dog: DoGPyramid, e: RawExtremum) -> Refined | None:
    """Newton-step subpixel refinement of one extremum; ``None`` means rejected.

    Solves ``H @ offset = -grad`` on central differences, re-centring on the
    neighbouring sample while any offset component exceeds 0.5 (at most five
    solves). The refined value is ``D + 0.5 * grad @ offset``.
    """
    stack = dog.octaves[e.octave]
    keep, lv, ys, xs, off, val = _refine_octave(stack, [e.level], [e.y], [e.x])
    if not keep[0]:
        return None
    final = RawExtremum(e.octave, int(lv[0]), int(xs[0]), int(ys[0]), e.is_max)
    return Refined(final, off[0].copy(), float(val[0]))


# --- filters --------------------------------------------------------------------


def filter_contrast(kps: Sequence[Refined], threshold: float) -> list[Refined]:
    return [k for k in kps if abs(k.value) >= threshold]


def _edge_ok(dog: np.ndarray, lv, ys, xs, r: float) -> np.ndarray:
    c = dog[lv, ys, xs]
    dxx = dog[lv, ys, xs + 1] - 2 * c + dog[lv, ys, xs - 1]
    dyy = dog[lv, ys + 1, xs] - 2 * c + dog[lv, ys - 1, xs]
    dxy = 0.25 * (
        dog[lv, ys + 1, xs + 1] - dog[lv, ys + 1, xs - 1] - dog[lv, ys - 1, xs + 1] + dog[lv, ys - 1, xs - 1]
    )
    tr = dxx + dyy
    det = dxx * dyy - dxy * dxy
    with np.errstate(divide="ignore", invalid="ignore"):
        return (det > 0) & (tr * tr / det < (r + 1) ** 2 / r)


def filter_edges(dog: DoGPyramid, kps: Sequence[Refined], r: float) -> list[Refined]:
    """Keep entries whose 2x2 spatial Hessian has ``det > 0`` and ``tr^2/det < (r+1)^2/r``."""
    out = []
    for k in kps:
        e = k.extremum
        if _edge_ok(dog.octaves[e.octave], e.level, e.y, e.x, r):
            out.append(k)
    return out


# --- full detector ------------------------------------------------------------------


def _keypoint_sigma(gp: GaussianPyramid, octave: int, level: np.ndarray) -> np.ndarray:
    # log-linear interpolation of the blur each level actually carries
    eff = np.log(gp.effective_sigmas[octave])
    return gp.octave_scale(octave) * np.exp(np.interp(level, np.arange(len(eff)), eff))


def detect_in_pyramid(gp: GaussianPyramid, dog: DoGPyramid, p: PyramidParams) -> list[Keypoint]:
    cols = {k: [] for k in ("x", "y", "sigma", "octave", "level", "response")}
    for o, stack in enumerate(dog.octaves):
        lv, ys, xs, _ = _scan_octave(stack)
        if lv.size == 0:
            continue
        keep, lv, ys, xs, off, val = _refine_octave(stack, lv, ys, xs)
        keep &= np.abs(val) >= p.contrast_threshold
        idx = np.flatnonzero(keep)
        # several raw extrema can walk onto the same sample; keep the first
        _, first = np.unique(np.ravel_multi_index((lv[idx], ys[idx], xs[idx]), stack.shape), return_index=True)
        idx = idx[np.sort(first)]
        idx = idx[_edge_ok(stack, lv[idx], ys[idx], xs[idx], p.edge_r)]
        scale = gp.octave_scale(o)
        level = lv[idx] + off[idx, 2]
        cols["x"].append((xs[idx] + off[idx, 0]) * scale)
        cols["y"].append((ys[idx] + off[idx, 1]) * scale)
        cols["sigma"].append(_keypoint_sigma(gp, o, level))
        cols["octave"].append(np.full(idx.size, o))
        cols["level"].append(level)
        cols["response"].append(np.abs(val[idx]))
    if not cols["x"]:
        return []
    arr = {k: np.concatenate(v) for k, v in cols.items()}
    # descending response; ties resolved by octave, level, y, x
    order = np.lexsort((arr["x"], arr["y"], arr["level"], arr["octave"], -arr["response"]))
    if p.max_keypoints is not None:
        order = order[: p.max_keypoints]
    return [
        Keypoint(
            float(arr["x"][i]),
            float(arr["y"][i]),
            float(arr["sigma"][i]),
            int(arr["octave"][i]),
            float(arr["level"][i]),
            float(arr["response"][i]),
        )
        for i in order
    ]


def detect(img: GrayImage, p: PyramidParams | None = None) -> list[Keypoint]:
    """Keypoints of ``img`` sorted by descending response."""
    p = p or PyramidParams()
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or min(arr.shape) < 8:
        raise DimensionError(f"image must be at least 8x8, got {arr.shape}")
    gp = build_gaussian_pyramid(arr, p)
    return detect_in_pyramid(gp, build_dog_pyramid(gp), p)
