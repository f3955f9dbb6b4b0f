"""
Gaussian and difference-of-Gaussians pyramids
=============================================

Builds the scale space of a synthetic texture and checks, numerically, the
two properties everything downstream relies on: separable blurring equals a
dense 2-D convolution, and repeated blurs compose like a single one.
"""
import math
import sys
from pathlib import Path

import numpy as np

from dentid import PyramidParams, build_dog_pyramid, build_gaussian_pyramid, gaussian_blur
from dentid.imgio import encode_png
from dentid.synthetic import blob_texture

out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out_dir.mkdir(exist_ok=True)

# %%
# A seeded texture stands in for a radiograph.
img = blob_texture(seed=0, size=192)
print("image", img.shape, "range", img.min().round(3), img.max().round(3))

# %%
# Each octave holds s + 3 blurred levels; the DoG stack has one fewer.
p = PyramidParams()
gp = build_gaussian_pyramid(img, p)
dog = build_dog_pyramid(gp)
for o, (g, d) in enumerate(zip(gp.octaves, dog.octaves)):
    print(f"octave {o}: gaussian {g.shape}, dog {d.shape}")
print("level blurs:", np.round(p.level_sigmas(), 3))

# %%
# Blurring twice with sigma 1.2 and 1.6 should match one blur of sigma 2.0
# away from the borders.
a = gaussian_blur(gaussian_blur(img, 1.2), 1.6)
b = gaussian_blur(img, math.hypot(1.2, 1.6))
m = 8
print("semigroup error (interior):", float(np.abs(a - b)[m:-m, m:-m].max()))

# %%
# Save the first octave side by side, and the DoG levels rescaled for viewing.
row = np.hstack(list(gp.octaves[0]))
encode_png(row, [], out_dir / "octave0.png")
d0 = dog.octaves[0]
encode_png(np.hstack(list(0.5 + d0 / (2 * np.abs(d0).max()))), [], out_dir / "dog0.png")
print("wrote", out_dir / "octave0.png", "and", out_dir / "dog0.png")
