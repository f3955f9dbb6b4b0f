"""Gaussian and difference-of-Gaussians pyramids."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError
from .imgio import GrayImage, downsample_half, upsample_double

MIN_OCTAVE_SIDE = 8


@dataclass(frozen=True)
class PyramidParams:
    """Every tunable of the detect/describe/match pipeline.

    ``s`` is the number of intervals per octave; each Gaussian octave then
    holds ``s + 3`` levels and each DoG octave ``s + 2``.
    """

    num_octaves: int = 4
    s: int = 3
    base_sigma: float = 1.6
    contrast_threshold: float = 0.03
    edge_r: float = 10.0
    ratio_threshold: float = 0.7
    # pyramid construction
    upsample: bool = False
    downsample_from: str = "double"  # "double" (level s, exactly 2x base blur) or "top" (level s+2)
    # detector / descriptor
    max_keypoints: int | None = None
    multi_orientation: bool = False
    descriptor_clamp: float = 0.2
    # matching
    root_kernel: bool = True
    cross_check: bool = True
    matcher: str = "brute"  # "brute" or "approx"
    leaf_budget: int = 200

    def __post_init__(self):
        if self.num_octaves < 1:
            raise ParameterError("num_octaves must be >= 1")
        if self.s < 1:
            raise ParameterError("s must be >= 1")
        if not self.base_sigma > 0:
            raise ParameterError("base_sigma must be > 0")
        if not 0 < self.ratio_threshold < 1:
            raise ParameterError("ratio_threshold must lie in (0, 1)")
        if self.edge_r < 1:
            raise ParameterError("edge_r must be >= 1")
        if self.contrast_threshold < 0:
            raise ParameterError("contrast_threshold must be >= 0")
        if self.downsample_from not in ("top", "double"):
            raise ParameterError("downsample_from must be 'top' or 'double'")
        if self.matcher not in ("brute", "approx"):
            raise ParameterError("matcher must be 'brute' or 'approx'")
        if self.max_keypoints is not None and self.max_keypoints < 0:
            raise ParameterError("max_keypoints must be >= 0")
        if not self.descriptor_clamp > 0:
            raise ParameterError("descriptor_clamp must be > 0")
        if self.leaf_budget < 1:
            raise ParameterError("leaf_budget must be >= 1")

    @property
    def k(self) -> float:
        return 2.0 ** (1.0 / self.s)

    def level_sigmas(self) -> np.ndarray:
        """Nominal blur of each Gaussian level relative to the octave's own pixel grid."""
        return self.base_sigma * 2.0 ** (np.arange(self.s + 3) / self.s)

    def increments(self) -> np.ndarray:
        """Blur added to go from level ``i`` to level ``i + 1``."""
        i = np.arange(self.s + 2)
        return self.base_sigma * 2.0 ** (i / self.s) * math.sqrt(2.0 ** (2.0 / self.s) - 1.0)


@dataclass
class GaussianPyramid:
    """Per-octave stacks of blurred images.

    ``octaves[o]`` has shape ``(s + 3, h_o, w_o)``. ``sigmas`` holds the nominal
    level blurs ``base_sigma * 2**(i/s)``; ``effective_sigmas[o]`` the blur each
    level actually carries in octave pixels (they differ from the nominal ones
    for ``o >= 1`` when octaves are seeded from the top level).
    """

    octaves: list[np.ndarray]
    sigmas: np.ndarray
    effective_sigmas: list[np.ndarray]
    params: PyramidParams
    # original-image pixels per octave-0 pixel (0.5 when the input was upsampled)
    base_scale: float = 1.0

    def octave_scale(self, octave: int) -> float:
        """Original-image pixels per pixel of ``octave``."""
        return self.base_scale * 2.0**octave


@dataclass
class DoGPyramid:
    """``octaves[o]`` has shape ``(s + 2, h_o, w_o)``; level i = gauss[i+1] - gauss[i]."""

    octaves: list[np.ndarray]
    params: PyramidParams = field(default_factory=PyramidParams)
    gaussian: GaussianPyramid | None = None


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled, unit-sum Gaussian of radius ``ceil(4 sigma)``."""
    radius = int(math.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _convolve_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(arr, pad, mode="symmetric")
    n = arr.shape[axis]
    out = np.zeros_like(arr)
    for j, w in enumerate(kernel):
        sl = [slice(None)] * arr.ndim
        sl[axis] = slice(j, j + n)
        out += w * padded[tuple(sl)]
    return out


def gaussian_blur(img: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian blur with reflected borders (rows first, then columns)."""
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    arr = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return arr.copy()
    kernel = gaussian_kernel(sigma)
    return _convolve_axis(_convolve_axis(arr, kernel, axis=1), kernel, axis=0)


def _max_octaves(h: int, w: int) -> int:
    n = 0
    while min(h, w) >= MIN_OCTAVE_SIDE:
        n += 1
        h, w = h // 2, w // 2
    return n


def build_gaussian_pyramid(img: GrayImage, p: PyramidParams | None = None) -> GaussianPyramid:
    p = p or PyramidParams()
    base = np.asarray(img, dtype=np.float64)
    if base.ndim != 2 or min(base.shape) < MIN_OCTAVE_SIDE:
        raise DimensionError(f"image must be at least {MIN_OCTAVE_SIDE}x{MIN_OCTAVE_SIDE}, got {base.shape}")
    base_scale = 1.0
    if p.upsample:
        base = upsample_double(base)
        base_scale = 0.5

    n_oct = min(p.num_octaves, _max_octaves(*base.shape))
    if n_oct < p.num_octaves:
        warnings.warn(
            f"image {base.shape[1]}x{base.shape[0]} supports only {n_oct} octaves of at least "
            f"{MIN_OCTAVE_SIDE}x{MIN_OCTAVE_SIDE}; clamping num_octaves from {p.num_octaves}",
            stacklevel=2,
        )

    nominal = p.level_sigmas()
    incs = p.increments()
    seed_level = p.s + 2 if p.downsample_from == "top" else p.s

    octaves = []
    effective = []
    current = gaussian_blur(base, p.base_sigma)
    current_sigma = p.base_sigma
    for o in range(n_oct):
        levels = [current]
        sig = [current_sigma]
        for inc in incs:
            levels.append(gaussian_blur(levels[-1], inc))
            sig.append(math.hypot(sig[-1], inc))
        octaves.append(np.stack(levels))
        effective.append(np.array(sig))
        if o + 1 < n_oct:
            current = downsample_half(levels[seed_level])
            current_sigma = sig[seed_level] / 2.0
    return GaussianPyramid(octaves, nominal, effective, p, base_scale)


def build_dog_pyramid(gp: GaussianPyramid) -> DoGPyramid:
    return DoGPyramid([np.diff(stack, axis=0) for stack in gp.octaves], gp.params, gp)
