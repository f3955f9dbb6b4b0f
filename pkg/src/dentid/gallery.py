"""Identity-labelled descriptor galleries, open-set identification and evaluation."""
from __future__ import annotations

import hashlib
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .descriptor import DESC_LEN, describe
from .errors import DecodeError, DimensionError, IndexFormatError, UsageError
from .imgio import load_image
from .matcher import lowe_similarity
from .scalespace import PyramidParams

logger = logging.getLogger(__name__)

MAGIC = b"ODID"
VERSION = 1
ABSENT = "ABSENT"
# x, y, sigma, orientation, response
KEYPOINT_FIELDS = 5
_RECORD = KEYPOINT_FIELDS + DESC_LEN


@dataclass
class GalleryEntry:
    code: str
    keypoints: np.ndarray  # (n, 5) float32
    descriptors: np.ndarray  # (n, 128) float32
    source_digest: bytes

    @property
    def keypoint_count(self) -> int:
        return len(self.descriptors)

    def __eq__(self, other):
        if not isinstance(other, GalleryEntry):
            return NotImplemented
        return (
            self.code == other.code
            and self.source_digest == other.source_digest
            and self.keypoints.shape == other.keypoints.shape
            and self.descriptors.shape == other.descriptors.shape
            and self.keypoints.tobytes() == other.keypoints.tobytes()
            and self.descriptors.tobytes() == other.descriptors.tobytes()
        )


@dataclass
class GalleryIndex:
    entries: list[GalleryEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    @property
    def codes(self) -> list[str]:
        return [e.code for e in self.entries]


def digest_bytes(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def image_digest(img: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(img, dtype=np.float64)
    return digest_bytes(struct.pack("<II", *arr.shape) + arr.tobytes())


def _load_source(src):
    """``(image, digest)`` for a path or an in-memory image."""
    if isinstance(src, np.ndarray):
        return np.asarray(src, dtype=np.float64), image_digest(src)
    path = Path(src)
    img = load_image(path)
    return img, digest_bytes(path.read_bytes())


def make_entry(img: np.ndarray, code: str, p: PyramidParams, digest: bytes | None = None) -> GalleryEntry:
    kps, desc = describe(img, p)
    kp_arr = np.array([[k.x, k.y, k.sigma, k.orientation, k.response] for k in kps], dtype=np.float32).reshape(
        -1, KEYPOINT_FIELDS
    )
    return GalleryEntry(code, kp_arr, desc.astype(np.float32), digest if digest is not None else image_digest(img))


def ingest(items: Iterable[tuple[object, str]], p: PyramidParams | None = None) -> GalleryIndex:
    """Describe every ``(source, code)`` item; sources are paths or image arrays.

    Unreadable images are recorded in ``index.errors`` and skipped; images
    without keypoints are kept with empty descriptor sets and a warning.
    """
    p = p or PyramidParams()
    items = list(items)
    seen = set()
    for _, code in items:
        if not code:
            raise ValueError("identity codes must be non-empty")
        if code in seen:
            raise ValueError(f"duplicate identity code {code!r}")
        seen.add(code)

    index = GalleryIndex()
    for src, code in items:
        label = f"<array:{code}>" if isinstance(src, np.ndarray) else str(src)
        try:
            img, digest = _load_source(src)
            entry = make_entry(img, code, p, digest)
        except (OSError, DecodeError, DimensionError) as exc:
            logger.warning("skipping %s: %s", label, exc)
            index.errors.append((label, str(exc)))
            continue
        if entry.keypoint_count == 0:
            index.warnings.append(f"{label} ({code}): no keypoints")
        index.entries.append(entry)
    return index


# --- persistence ------------------------------------------------------------------


def save_index(index: GalleryIndex, path) -> None:
    """Write the binary little-endian index format."""
    parts = [MAGIC, struct.pack("<HI", VERSION, len(index.entries))]
    for e in index.entries:
        code = e.code.encode("utf-8")
        if len(e.source_digest) != 32:
            raise ValueError(f"entry {e.code!r}: digest must be 32 bytes")
        parts.append(struct.pack("<H", len(code)) + code + e.source_digest + struct.pack("<I", e.keypoint_count))
        block = np.hstack(
            [e.keypoints.reshape(-1, KEYPOINT_FIELDS), e.descriptors.reshape(-1, DESC_LEN)]
        ).astype("<f4")
        parts.append(block.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise IndexFormatError(f"truncated index while reading {what}", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_index(path) -> GalleryIndex:
    r = _Reader(Path(path).read_bytes())
    if r.take(4, "magic") != MAGIC:
        raise IndexFormatError("bad magic bytes", 0)
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise IndexFormatError(f"unsupported index version {version}", 4)
    (count,) = r.unpack("<I", "entry count")
    index = GalleryIndex()
    for _ in range(count):
        start = r.pos
        (code_len,) = r.unpack("<H", "code length")
        try:
            code = r.take(code_len, "code").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IndexFormatError("code is not valid UTF-8", start + 2) from exc
        digest = r.take(32, "source digest")
        (n,) = r.unpack("<I", "keypoint count")
        block = np.frombuffer(r.take(n * _RECORD * 4, "keypoint records"), dtype="<f4").reshape(n, _RECORD)
        index.entries.append(
            GalleryEntry(
                code,
                block[:, :KEYPOINT_FIELDS].astype(np.float32),
                block[:, KEYPOINT_FIELDS:].astype(np.float32),
                digest,
            )
        )
    if r.pos != len(r.data):
        raise IndexFormatError("trailing bytes after last entry", r.pos)
    return index


# --- identification -----------------------------------------------------------------


@dataclass(frozen=True)
class Gates:
    """Acceptance rule for the best-scoring gallery entry.

    ``zscore`` requires ``Phi(z_best) > quantile`` and ``raw_best >= abs_floor``
    (floor defaults to 0.08); ``absolute`` requires only ``raw_best >= abs_floor``
    and ``both`` the two tests with the floor defaulting to 0.66.
    """

    mode: str = "zscore"
    quantile: float = 0.66
    abs_floor: float | None = None

    def __post_init__(self):
        if self.mode not in ("zscore", "absolute", "both"):
            raise ValueError(f"unknown gate mode {self.mode!r}")
        if not 0 <= self.quantile <= 1:
            raise ValueError("quantile must lie in [0, 1]")

    @property
    def floor(self) -> float:
        if self.abs_floor is not None:
            return self.abs_floor
        return 0.08 if self.mode == "zscore" else 0.66


def normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


@dataclass(frozen=True)
class RankedScore:
    code: str
    score: float
    z: float


@dataclass
class IdentificationReport:
    probe_digest: bytes
    ranked: list[RankedScore]
    decision: str  # "identified" or "rejected"
    code: str | None
    gate: dict
    flags: list[str] = field(default_factory=list)

    @property
    def identified(self) -> bool:
        return self.decision == "identified"

    def to_dict(self) -> dict:
        out = {
            "decision": self.decision,
            "code": self.code,
            "probe_digest": self.probe_digest.hex(),
            "ranked": [{"code": r.code, "score": r.score, "z": r.z} for r in self.ranked],
            "gates": self.gate,
            "flags": list(self.flags),
        }
        return out


def score_gallery(probe_desc: np.ndarray, index: GalleryIndex, p: PyramidParams) -> list[float]:
    return [lowe_similarity(probe_desc, e.descriptors, p).value for e in index.entries]


def decide(raw: Sequence[float], codes: Sequence[str], gates: Gates, probe_digest: bytes = b"", flags=()) -> IdentificationReport:
    """Rank raw scores, z-score them over the gallery and apply ``gates``."""
    flags = list(flags)
    s = np.asarray(raw, dtype=np.float64)
    mu = float(s.mean())
    sd = float(s.std())  # population
    z = (s - mu) / sd if sd >= 1e-12 else np.zeros_like(s)
    order = sorted(range(len(s)), key=lambda i: (-s[i], codes[i]))
    ranked = [RankedScore(codes[i], float(s[i]), float(z[i])) for i in order]
    top = ranked[0]
    if len(ranked) > 1 and ranked[1].score == top.score:
        flags.append("tie_at_top")
    phi = normal_cdf(top.z)
    pass_z = phi > gates.quantile
    pass_abs = top.score >= gates.floor
    if gates.mode == "absolute":
        accepted = pass_abs
    else:
        accepted = pass_z and pass_abs
    if "probe_has_no_keypoints" in flags:
        accepted = False
    gate = {
        "mode": gates.mode,
        "quantile": gates.quantile,
        "abs_floor": gates.floor,
        "mean": mu,
        "std": sd,
        "best_z": top.z,
        "best_phi": phi,
        "passed_zscore": bool(pass_z),
        "passed_floor": bool(pass_abs),
    }
    return IdentificationReport(
        probe_digest,
        ranked,
        "identified" if accepted else "rejected",
        top.code if accepted else None,
        gate,
        flags,
    )


def identify(
    probe: np.ndarray,
    index: GalleryIndex,
    gates: Gates | None = None,
    p: PyramidParams | None = None,
    probe_digest: bytes | None = None,
) -> IdentificationReport:
    """Score ``probe`` against every gallery entry and accept or reject the best one."""
    gates = gates or Gates()
    p = p or PyramidParams()
    if len(index) == 0:
        raise UsageError("cannot identify against an empty gallery")
    _, desc = describe(probe, p)
    digest = probe_digest if probe_digest is not None else image_digest(probe)
    flags = []
    if len(desc) == 0:
        flags.append("probe_has_no_keypoints")
    empty = [e.code for e in index.entries if e.keypoint_count == 0]
    if empty:
        flags.append("entries_without_keypoints:" + ",".join(empty))
    return decide(score_gallery(desc, index, p), index.codes, gates, digest, flags)


# --- evaluation ------------------------------------------------------------------------


@dataclass
class Evaluation:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    errors: list[tuple[str, str]] = field(default_factory=list)
    reports: list[IdentificationReport] = field(default_factory=list)

    @property
    def precision(self) -> float | None:
        d = self.tp + self.fp
        return self.tp / d if d else None

    @property
    def recall(self) -> float | None:
        d = self.tp + self.fn
        return self.tp / d if d else None

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
        }


def evaluate(
    labeled_probes: Iterable[tuple[object, str | None]],
    index: GalleryIndex,
    gates: Gates | None = None,
    p: PyramidParams | None = None,
) -> Evaluation:
    """Open-set precision/recall over ``(source, true_code)`` probes.

    A true code of ``None`` or ``"ABSENT"`` (or one missing from the index)
    means the subject is not in the gallery. Undecodable probes are collected
    in ``errors`` and excluded from the counts.
    """
    gates = gates or Gates()
    p = p or PyramidParams()
    known = set(index.codes)
    ev = Evaluation()
    for src, truth in labeled_probes:
        label = "<array>" if isinstance(src, np.ndarray) else str(src)
        try:
            img, digest = _load_source(src)
            rep = identify(img, index, gates, p, probe_digest=digest)
        except (OSError, DecodeError, DimensionError) as exc:
            ev.errors.append((label, str(exc)))
            continue
        ev.reports.append(rep)
        present = truth is not None and truth != ABSENT and truth in known
        if rep.identified:
            if present and rep.code == truth:
                ev.tp += 1
            else:
                ev.fp += 1
        elif present:
            ev.fn += 1
        else:
            ev.tn += 1
    return ev
