"""Command-line interface: ``dentid index | identify | match | eval``.

Exit codes: 0 success (or identified), 1 error, 2 partial index, 3 rejected.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .descriptor import describe
from .errors import DecodeError, DimensionError, IndexFormatError, UsageError
from .gallery import (
    ABSENT,
    Gates,
    digest_bytes,
    evaluate,
    identify,
    ingest,
    load_index,
    save_index,
)
from .imgio import Circle, Line, encode_png, load_image
from .matcher import good_matches, lowe_similarity
from .scalespace import PyramidParams

logger = logging.getLogger("dentid")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARTIAL = 2
EXIT_REJECTED = 3

IMAGE_SUFFIXES = (".png", ".pgm")

# flag / config-file key -> (RunConfig attribute path, converter)
_OPTIONS = {
    "octaves": ("params.num_octaves", int),
    "intervals": ("params.s", int),
    "base-sigma": ("params.base_sigma", float),
    "contrast": ("params.contrast_threshold", float),
    "edge-r": ("params.edge_r", float),
    "ratio": ("params.ratio_threshold", float),
    "matcher": ("params.matcher", str),
    "root-kernel": ("params.root_kernel", None),
    "max-keypoints": ("params.max_keypoints", int),
    "gate": ("gates.mode", str),
    "quantile": ("gates.quantile", float),
    "abs-floor": ("gates.abs_floor", float),
    "format": ("fmt", str),
}


@dataclass(frozen=True)
class RunConfig:
    params: PyramidParams = field(default_factory=PyramidParams)
    gates: Gates = field(default_factory=Gates)
    fmt: str = "json"


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_config_file(path) -> dict[str, str]:
    """Flat ``key=value`` lines; ``#`` starts a comment. Keys use flag spelling."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in _OPTIONS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def build_config(overrides: dict[str, object]) -> RunConfig:
    """Apply string or typed overrides (flag spelling) on top of the defaults."""
    params: dict[str, object] = {}
    gates: dict[str, object] = {}
    fmt = "json"
    for key, raw in overrides.items():
        target, conv = _OPTIONS[key]
        if raw is None:
            continue
        value = _parse_bool(raw) if target == "params.root_kernel" else conv(raw)
        if target == "fmt":
            if value not in ("json", "text"):
                raise ValueError("format must be 'json' or 'text'")
            fmt = value
        elif target.startswith("params."):
            params[target.split(".", 1)[1]] = value
        else:
            gates[target.split(".", 1)[1]] = value
    return RunConfig(PyramidParams(**params), Gates(**gates), fmt)


def _add_common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("pipeline options")
    g.add_argument("--config", help="flat key=value file; flags override it")
    g.add_argument("--octaves", type=int)
    g.add_argument("--intervals", type=int, help="intervals per octave (s)")
    g.add_argument("--base-sigma", type=float)
    g.add_argument("--contrast", type=float, help="contrast threshold on |D|")
    g.add_argument("--edge-r", type=float, help="edge eigenvalue-ratio bound")
    g.add_argument("--ratio", type=float, help="ratio-test threshold")
    g.add_argument("--matcher", choices=("brute", "approx"))
    g.add_argument("--gate", choices=("zscore", "absolute", "both"))
    g.add_argument("--quantile", type=float, help="normal-CDF level for the z gate")
    g.add_argument("--abs-floor", type=float, help="minimum raw score of the best entry")
    g.add_argument("--root-kernel", choices=("on", "off"))
    g.add_argument("--max-keypoints", type=int)
    g.add_argument("--format", choices=("json", "text"))


def config_from_args(args: argparse.Namespace) -> RunConfig:
    merged: dict[str, object] = {}
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for key in _OPTIONS:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            merged[key] = val
    return build_config(merged)


def _emit(payload: dict, fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "json":
        out.write(json.dumps(payload, sort_keys=True) + "\n")
        return
    for key in sorted(payload):
        value = payload[key]
        if isinstance(value, (list, dict)):
            value = json.dumps(value, sort_keys=True)
        out.write(f"{key}: {value}\n")


def _warn(msg: str) -> None:
    sys.stderr.write(f"warning: {msg}\n")


# --- commands ---------------------------------------------------------------------


def read_codes(path) -> dict[str, str]:
    codes = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            if len(row) < 2:
                raise ValueError(f"{path}: rows must be 'filename,code'")
            name, code = row[0].strip(), row[1].strip()
            if (name, code) == ("filename", "code"):
                continue
            codes[name] = code
    return codes


def cmd_index(image_dir, codes_file, out_path, config: RunConfig) -> int:
    image_dir = Path(image_dir)
    try:
        codes = read_codes(codes_file)
        if not image_dir.is_dir():
            raise NotADirectoryError(f"{image_dir} is not a directory")
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
    files = sorted(f for f in image_dir.iterdir() if f.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        _warn(f"no images in {image_dir}")
    items = []
    for f in files:
        if f.name not in codes:
            _warn(f"{f.name}: no code in {codes_file}, skipped")
            continue
        items.append((f, codes[f.name]))
    try:
        index = ingest(items, config.params)
        save_index(index, out_path)
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
    for w in index.warnings:
        _warn(w)
    for label, msg in index.errors:
        _warn(f"{label}: {msg}")
    logger.info("indexed %d images into %s", len(index), out_path)
    return EXIT_PARTIAL if index.errors else EXIT_OK


def cmd_identify(probe_path, index_path, config: RunConfig, out=None) -> int:
    try:
        index = load_index(index_path)
        probe = load_image(probe_path)
        report = identify(
            probe, index, config.gates, config.params, probe_digest=digest_bytes(Path(probe_path).read_bytes())
        )
    except (OSError, DecodeError, DimensionError, IndexFormatError, UsageError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
    _emit(report.to_dict(), config.fmt, out)
    return EXIT_OK if report.identified else EXIT_REJECTED


def _keypoint_overlays(kps, dx: int, color) -> list:
    ovs = []
    for k in kps:
        r = max(2, int(round(2 * k.sigma)))
        cx, cy = int(round(k.x)) + dx, int(round(k.y))
        ovs.append(Circle(cx, cy, r, color))
        tx = int(round(cx + r * math.cos(k.orientation)))
        ty = int(round(cy + r * math.sin(k.orientation)))
        ovs.append(Line(cx, cy, tx, ty, color))
    return ovs


def side_by_side(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    h = max(a.shape[0], b.shape[0])
    canvas = np.zeros((h, a.shape[1] + b.shape[1]))
    canvas[: a.shape[0], : a.shape[1]] = a
    canvas[: b.shape[0], a.shape[1] :] = b
    return canvas


def cmd_match(img_a, img_b, config: RunConfig, viz_out=None, out=None) -> int:
    try:
        a = load_image(img_a)
        b = load_image(img_b)
        kps_a, desc_a = describe(a, config.params)
        kps_b, desc_b = describe(b, config.params)
    except (OSError, DecodeError, DimensionError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
    score = lowe_similarity(desc_a, desc_b, config.params)
    payload = {
        "keypoints_a": len(kps_a),
        "keypoints_b": len(kps_b),
        "good_matches": score.good_matches,
        "lowe_score": score.value,
    }
    if viz_out:
        matches = good_matches(desc_a, desc_b, config.params)
        w = a.shape[1]
        ovs = _keypoint_overlays(kps_a, 0, (255, 64, 64)) + _keypoint_overlays(kps_b, w, (64, 128, 255))
        for mp in matches:
            ka, kb = kps_a[mp.query_idx], kps_b[mp.train_idx]
            ovs.append(Line(int(round(ka.x)), int(round(ka.y)), int(round(kb.x)) + w, int(round(kb.y)), (64, 255, 64)))
        try:
            encode_png(side_by_side(a, b), ovs, viz_out)
        except OSError as exc:
            sys.stderr.write(f"error: {exc}\n")
            return EXIT_ERROR
    _emit(payload, config.fmt, out)
    return EXIT_OK


def read_probes(path) -> list[tuple[Path, str]]:
    base = Path(path).parent
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            if len(row) < 2:
                raise ValueError(f"{path}: rows must be 'filename,true_code'")
            name, code = row[0].strip(), row[1].strip()
            if name == "filename":
                continue
            rows.append((base / name, code))
    return rows


def cmd_eval(probes_csv, index_path, config: RunConfig, out=None) -> int:
    try:
        probes = read_probes(probes_csv)
        index = load_index(index_path)
        if len(index) == 0:
            raise UsageError("cannot evaluate against an empty gallery")
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
    ev = evaluate(((p, None if c == ABSENT else c) for p, c in probes), index, config.gates, config.params)
    for label, msg in ev.errors:
        _warn(f"{label}: {msg}")
    payload = ev.to_dict()
    payload["errors"] = [{"file": label, "message": msg} for label, msg in ev.errors]
    _emit(payload, config.fmt, out)
    return EXIT_OK


# --- entry point --------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dentid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build a gallery index from a directory of images")
    p.add_argument("image_dir")
    p.add_argument("codes_file", help="CSV of filename,code")
    p.add_argument("out_path")
    _add_common(p)

    p = sub.add_parser("identify", help="identify a probe image against an index")
    p.add_argument("probe")
    p.add_argument("index")
    _add_common(p)

    p = sub.add_parser("match", help="score two images against each other")
    p.add_argument("img_a")
    p.add_argument("img_b")
    p.add_argument("--viz", dest="viz_out", help="write a side-by-side PNG of the matches")
    _add_common(p)

    p = sub.add_parser("eval", help="precision/recall over a labelled probe list")
    p.add_argument("probes_csv", help="CSV of filename,true_code (or ABSENT)")
    p.add_argument("index")
    _add_common(p)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = config_from_args(args)
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
    if args.command == "index":
        return cmd_index(args.image_dir, args.codes_file, args.out_path, config)
    if args.command == "identify":
        return cmd_identify(args.probe, args.index, config)
    if args.command == "match":
        return cmd_match(args.img_a, args.img_b, config, args.viz_out)
    return cmd_eval(args.probes_csv, args.index, config)


if __name__ == "__main__":
    sys.exit(main())
