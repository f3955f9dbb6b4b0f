"""
Keypoints, orientations and descriptors
=======================================

Detects keypoints on a texture, shows that a quarter turn of the image
rotates their orientations by exactly 90 degrees, and draws them.
"""
import math
import sys
from pathlib import Path

import numpy as np

from dentid import describe, detect
from dentid.imgio import Circle, Line, encode_png
from dentid.synthetic import blob_texture, gaussian_blob

out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out_dir.mkdir(exist_ok=True)

# %%
# A single Gaussian blob gives one keypoint at its centre, with a scale close
# to the blob's own.
for s in (3.0, 5.0):
    kps = detect(gaussian_blob(97, s, center=48))
    print(f"blob sigma {s}: " + ", ".join(f"({k.x:.2f}, {k.y:.2f}) sigma={k.sigma:.2f}" for k in kps))

# %%
# On a texture, keypoints come back sorted by |DoG| response.
img = blob_texture(seed=3, size=160)
kps, desc = describe(img)
print(f"{len(kps)} keypoints, descriptors {desc.shape} {desc.dtype}")
print("norms:", np.round(np.linalg.norm(desc, axis=1)[:5], 6), "...")

# %%
# Rotating by 90 degrees maps (x, y) to (y, w - 1 - x). Paired keypoints keep
# the same descriptor and their orientation drops by a quarter turn.
w = img.shape[1]
kr, dr = describe(np.rot90(img))
pos = np.array([[k.x, k.y] for k in kr])
shown = 0
for i, k in enumerate(kps):
    d = np.hypot(pos[:, 0] - k.y, pos[:, 1] - (w - 1 - k.x))
    j = int(np.argmin(d))
    if d[j] < 1e-3 and shown < 5:
        turn = math.degrees(k.orientation - kr[j].orientation) % 360
        print(f"kp {i}: orientation change {turn:.2f} deg, descriptor distance {np.linalg.norm(desc[i] - dr[j]):.2e}")
        shown += 1

# %%
# Circles scale with sigma; the tick marks the orientation.
overlays = []
for k in kps:
    r = max(2, round(2 * k.sigma))
    cx, cy = round(k.x), round(k.y)
    overlays.append(Circle(cx, cy, r))
    overlays.append(Line(cx, cy, round(cx + r * math.cos(k.orientation)), round(cy + r * math.sin(k.orientation))))
encode_png(img, overlays, out_dir / "keypoints.png")
print("wrote", out_dir / "keypoints.png")
