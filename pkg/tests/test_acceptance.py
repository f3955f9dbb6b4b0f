"""End-to-end acceptance checks, one test per criterion.

Every test records a ``PASS``/``FAIL`` line; the lines are printed at the end
of the pytest run (see ``conftest.py``) and when this file is executed
directly with ``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import io
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dentid import PyramidParams, describe, detect  # noqa: E402
from dentid.cli import build_config, cmd_identify  # noqa: E402
from dentid.descriptor import clamp_stage  # noqa: E402
import dentid.descriptor as descriptor_mod  # noqa: E402
from dentid.detector import RawExtremum, refine_subpixel  # noqa: E402
from dentid.errors import IndexFormatError  # noqa: E402
from dentid.gallery import GalleryEntry, GalleryIndex, evaluate, ingest, load_index, save_index  # noqa: E402
from dentid.imgio import encode_png  # noqa: E402
from dentid.matcher import approx_knn, brute_force_knn, lowe_similarity  # noqa: E402
from dentid.scalespace import DoGPyramid, build_dog_pyramid, build_gaussian_pyramid, gaussian_blur  # noqa: E402
from dentid.synthetic import blob_texture, gaussian_blob, step_edge, warp  # noqa: E402

from conftest import described, texture  # noqa: E402

RESULTS: dict[int, str] = {}


def record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {title} ({detail})"
    RESULTS[n] = line
    print(line)
    assert ok, line


def unit_rows(rng, n, d=128):
    a = np.abs(rng.normal(size=(n, d)))
    return a / np.linalg.norm(a, axis=1, keepdims=True)


# 1 ---------------------------------------------------------------------------------


def dense_blur(img, sigma):
    """Full 2-D kernel applied by summing every shifted copy of the mirrored image."""
    r = int(math.ceil(4 * sigma))
    x = np.arange(-r, r + 1)
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    k = np.outer(g, g)
    k /= k.sum()
    pad = np.pad(img, r, mode="symmetric")
    h, w = img.shape
    out = np.zeros_like(img)
    for j in range(2 * r + 1):
        for i in range(2 * r + 1):
            out += k[j, i] * pad[j : j + h, i : i + w]
    return out


def test_criterion_01_convolution_oracle():
    img = np.random.default_rng(1).uniform(size=(64, 64))
    worst = 0.0
    elapsed = 0.0
    for sigma in (0.5, 1.6, 3.2):
        t0 = time.perf_counter()
        fast = gaussian_blur(img, sigma)
        elapsed += time.perf_counter() - t0
        m = int(math.ceil(4 * sigma))
        worst = max(worst, float(np.max(np.abs(fast - dense_blur(img, sigma))[m:-m, m:-m])))
    record(1, "separable blur == dense 2-D convolution", worst <= 1e-5 and elapsed < 5,
           f"max interior error {worst:.2e}, blur time {elapsed:.3f}s")


# 2 ---------------------------------------------------------------------------------


def test_criterion_02_pyramid_shape_and_semigroup():
    img = np.random.default_rng(2).uniform(size=(96, 96))
    shapes_ok = True
    worst = 0.0
    for s in (2, 3, 5):
        p = PyramidParams(s=s, num_octaves=3)
        gp = build_gaussian_pyramid(img, p)
        dog = build_dog_pyramid(gp)
        shapes_ok &= all(g.shape[0] == s + 3 for g in gp.octaves)
        shapes_ok &= all(d.shape[0] == s + 2 for d in dog.octaves)
        for i, sig in enumerate(p.level_sigmas()):
            m = int(math.ceil(4 * sig))
            worst = max(worst, float(np.max(np.abs(gp.octaves[0][i] - gaussian_blur(img, sig))[m:-m, m:-m])))
    for s1, s2 in ((1.0, 1.0), (1.2, 2.0), (1.6, 2.5)):
        a = gaussian_blur(gaussian_blur(img, s1), s2)
        b = gaussian_blur(img, math.hypot(s1, s2))
        m = int(math.ceil(4 * math.hypot(s1, s2)))
        worst = max(worst, float(np.max(np.abs(a - b)[m:-m, m:-m])))
    record(2, "s+3 / s+2 levels for s in {2,3,5}; blur semigroup", shapes_ok and worst < 1e-4,
           f"shapes {'ok' if shapes_ok else 'wrong'}, semigroup error {worst:.2e}")


# 3 ---------------------------------------------------------------------------------


def test_criterion_03_subpixel_refinement():
    rng = np.random.default_rng(3)
    lv, yy, xx = np.mgrid[:5, :16, :16].astype(float)
    worst = 0.0
    failures = 0
    for _ in range(50):
        cx, cy = rng.uniform(3, 12, 2)
        cl = rng.uniform(1, 3)
        vol = 1 - (xx - cx) ** 2 - (yy - cy) ** 2 - (lv - cl) ** 2
        r = refine_subpixel(DoGPyramid([vol]), RawExtremum(0, round(cl), round(cx), round(cy), True))
        if r is None:
            failures += 1
            continue
        pos = np.array([r.extremum.x, r.extremum.y, r.extremum.level]) + r.offset
        worst = max(worst, float(np.max(np.abs(pos - [cx, cy, cl]))))
    singular = [
        1 - (yy - 8) ** 2 - (lv - 2) ** 2,
        np.zeros((5, 16, 16)),
        1 - (xx - 8) ** 2 - (yy - 8) ** 2,
    ]
    rejected = all(refine_subpixel(DoGPyramid([v]), RawExtremum(0, 2, 8, 8, True)) is None for v in singular)
    record(3, "subpixel refinement of sampled quadratics", failures == 0 and worst <= 1e-3 and rejected,
           f"50 volumes, max error {worst:.1e}, singular volumes rejected={rejected}")


# 4 ---------------------------------------------------------------------------------


def test_criterion_04_edge_rejection():
    near_edge = 0
    for seed in range(3):
        img = np.clip(step_edge(129, 64.0) + np.random.default_rng(seed).normal(0, 0.01, (129, 129)), 0, 1)
        near_edge += sum(abs(k.x - 63.5) <= 3 for k in detect(img, PyramidParams(num_octaves=3)))
    clean = sum(abs(k.x - 63.5) <= 3 for k in detect(step_edge(129, 64.0), PyramidParams(num_octaves=3)))
    blob = detect(gaussian_blob(97, 4.0, center=48), PyramidParams(num_octaves=3))
    centred = [k for k in blob if math.hypot(k.x - 48, k.y - 48) <= 1]
    ok = near_edge == 0 and clean == 0 and len(centred) >= 1
    record(4, "no keypoints within 3 px of a step edge; blob centre found", ok,
           f"edge keypoints {near_edge + clean}, centred blob keypoints {len(centred)}")


# 5 ---------------------------------------------------------------------------------


def test_criterion_05_descriptor_contract(monkeypatch):
    seen = []

    def spy(vec, clamp=0.2):
        out = clamp_stage(vec, clamp)
        seen.append(out)
        return out

    monkeypatch.setattr(descriptor_mod, "clamp_stage", spy)
    lengths = set()
    worst = 0.0
    count = 0
    for seed in range(5):
        _, desc = describe(texture(seed))
        lengths.add(desc.shape[1])
        count += len(desc)
        worst = max(worst, float(np.max(np.abs(np.linalg.norm(desc.astype(np.float64), axis=1) - 1))))
    peak = max(float(s.max()) for s in seen if s.size)
    ok = lengths == {128} and worst <= 1e-6 and peak <= 0.2
    record(5, "128 components, unit norm, clamp <= 0.2", ok,
           f"{count} descriptors, norm error {worst:.1e}, largest clamped value {peak:.4f}")


# 6 ---------------------------------------------------------------------------------


def test_criterion_06_rotation_invariance():
    mutual = total = 0
    worst_angle = 0.0
    for seed in range(3):
        img = texture(seed, 160)
        w = img.shape[1]
        ka, da = describe(img)
        kb, db = describe(np.rot90(img))
        pb = np.array([[k.x, k.y, k.sigma] for k in kb])
        dist = np.linalg.norm(da[:, None, :].astype(np.float64) - db[None, :, :], axis=2)
        for i, k in enumerate(ka):
            d = np.hypot(pb[:, 0] - k.y, pb[:, 1] - (w - 1 - k.x)) + np.abs(pb[:, 2] - k.sigma)
            j = int(np.argmin(d))
            if d[j] > 1e-3:
                continue
            total += 1
            mutual += int(dist[i].argmin() == j and dist[:, j].argmin() == i)
            diff = math.degrees(k.orientation - kb[j].orientation) % 360
            worst_angle = max(worst_angle, abs(diff - 90))
    rate = mutual / total
    record(6, "quarter-turn: mutual nearest neighbours, orientation +90", rate >= 0.9 and worst_angle <= 10,
           f"{mutual}/{total} pairs mutual ({rate:.1%}), max orientation error {worst_angle:.2f} deg")


# 7 ---------------------------------------------------------------------------------


def naive_knn(query, train):
    out = []
    for i in range(len(query)):
        b1 = b2 = math.inf
        j1 = -1
        for j in range(len(train)):
            d = float(np.sqrt(np.sum((train[j] - query[i]) ** 2)))
            if d < b1:
                b2, b1, j1 = b1, d, j
            elif d < b2:
                b2 = d
        out.append((i, j1, b1, b2))
    return out


def test_criterion_07_matching_oracle():
    rng = np.random.default_rng(7)
    q, t = unit_rows(rng, 200), unit_rows(rng, 200)
    got = [(m.query_idx, m.train_idx, m.dist_best, m.dist_second) for m in brute_force_knn(q, t)]
    identical = got == naive_knn(q, t)
    rng = np.random.default_rng(0)
    q, t = unit_rows(rng, 1000), unit_rows(rng, 1000)
    exact = np.array([m.train_idx for m in brute_force_knn(q, t)])
    approx = np.array([m.train_idx for m in approx_knn(q, t, leaf_budget=200)])
    agree = float(np.mean(exact == approx))
    record(7, "brute force == naive loop; approx agreement", identical and agree >= 0.95,
           f"bit-identical={identical}, approx agreement {agree:.1%} at 200 leaves")


# 8 ---------------------------------------------------------------------------------


def test_criterion_08_lowe_score_properties():
    self_ok = all(lowe_similarity(described(s)[1], described(s)[1]).value == 1.0 for s in range(5))
    blob_desc = describe(gaussian_blob(97, 4.0, center=48) * 0.6 + 0.3 * gaussian_blob(97, 6.0, center=(20, 70)))[1]
    if len(blob_desc) >= 2:
        self_ok &= lowe_similarity(blob_desc, blob_desc).value == 1.0
    sym = all(
        lowe_similarity(described(a)[1], described(b)[1]).value == lowe_similarity(described(b)[1], described(a)[1]).value
        for a, b in ((0, 1), (2, 3), (4, 5))
    )
    unrelated = [lowe_similarity(described(s)[1], described(s + 20)[1]).value for s in range(20)]
    worst = max(unrelated)
    record(8, "self score 1.0, symmetric, unrelated <= 0.1", self_ok and sym and worst <= 0.1,
           f"self={self_ok}, symmetric={sym}, max unrelated {worst:.3f} over 20 seeds")


# 9 ---------------------------------------------------------------------------------


def test_criterion_09_open_set_identification():
    t0 = time.perf_counter()
    gallery = [(blob_texture(s, 192), f"V{s:03d}") for s in range(20)]
    index = ingest(gallery)
    probes = [(warp(img, 10, 0.9), code) for img, code in gallery]
    probes += [(warp(blob_texture(100 + s, 192), 10, 0.9), "ABSENT") for s in range(10)]
    ev = evaluate(probes, index)
    elapsed = time.perf_counter() - t0
    ok = ev.precision is not None and ev.precision >= 0.9 and ev.recall >= 0.9 and elapsed < 120
    record(9, "open-set identification on warped synthetic corpus", ok,
           f"precision {ev.precision}, recall {ev.recall}, tp/fp/fn/tn {ev.tp}/{ev.fp}/{ev.fn}/{ev.tn}, {elapsed:.1f}s")


# 10 --------------------------------------------------------------------------------


def test_criterion_10_persistence(tmp_path):
    rng = np.random.default_rng(10)
    real = ingest([(texture(0), "R0"), (np.full((32, 32), 0.5), "BLANK")])
    synthetic = GalleryEntry("S", rng.normal(size=(3, 5)).astype(np.float32),
                             rng.uniform(size=(3, 128)).astype(np.float32), bytes(32))
    cases = {"empty": GalleryIndex(), "real+zero-keypoint": real, "synthetic": GalleryIndex([synthetic])}
    exact = True
    for name, idx in cases.items():
        p = tmp_path / f"{name}.idx"
        save_index(idx, p)
        back = load_index(p)
        exact &= back.entries == idx.entries
        save_index(back, tmp_path / "again.idx")
        exact &= (tmp_path / "again.idx").read_bytes() == p.read_bytes()
    raw = bytearray((tmp_path / "synthetic.idx").read_bytes())
    rejected = 0
    for patch in ((0, b"XDID"), (4, b"\x02\x00")):
        bad = bytearray(raw)
        bad[patch[0] : patch[0] + len(patch[1])] = patch[1]
        (tmp_path / "bad.idx").write_bytes(bytes(bad))
        try:
            load_index(tmp_path / "bad.idx")
        except IndexFormatError:
            rejected += 1
    record(10, "index round trip bit-exact; bad magic/version rejected", exact and rejected == 2,
           f"round trips exact={exact}, corrupt headers rejected {rejected}/2")


# 11 --------------------------------------------------------------------------------


def test_criterion_11_determinism(tmp_path):
    for s in range(3):
        encode_png(texture(s), [], tmp_path / f"g{s}.png")
    index = ingest([(tmp_path / f"g{s}.png", f"G{s}") for s in range(3)])
    save_index(index, tmp_path / "g.idx")
    encode_png(warp(texture(1), 10, 0.9), [], tmp_path / "probe.png")
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        cmd_identify(tmp_path / "probe.png", tmp_path / "g.idx", build_config({}), out=buf)
        outs.append(buf.getvalue().encode())
    record(11, "identify twice gives byte-identical JSON", outs[0] == outs[1] and len(outs[0]) > 0,
           f"{len(outs[0])} bytes, identical={outs[0] == outs[1]}")


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
