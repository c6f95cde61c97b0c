"""On-disk formats.

Gaussians and ground-truth points are ASCII point lists with 17 significant
digits so a save/load round trip is exact. Cameras, curves, configs and metric
reports are JSON documents (Python's float repr round-trips exactly). Edge
maps are binary 16-bit PGM.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .curves import CurveNetwork
from .geometry import Camera
from .metrics import MetricReport
from .render import SphericalGaussianSet

GAUSSIAN_MAGIC = "# splatcurves gaussians v1"
POINTS_MAGIC = "# splatcurves points v1"
FMT = "%.17g"


class FormatError(ValueError):
    pass


def _write_text(path, text: str):
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def dump_json(obj, path):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


# -- Gaussians -------------------------------------------------------------


def save_gaussians(path, gset: SphericalGaussianSet, meta: dict | None = None):
    """Header lines ``# key value`` then one ``x y z opacity color`` row per Gaussian.

    ``meta`` values are stored as JSON on their header line (used by
    checkpoints for the iteration counter, phase and training config).
    """
    lines = [GAUSSIAN_MAGIC, f"# radius {FMT % gset.radius}", f"# count {len(gset)}"]
    for k, v in sorted((meta or {}).items()):
        if not k.isidentifier():
            raise ValueError(f"bad metadata key {k!r}")
        lines.append(f"# {k} {json.dumps(v, sort_keys=True)}")
    rows = np.column_stack([gset.centers, gset.opacities, gset.colors])
    body = "".join(" ".join(FMT % x for x in r) + "\n" for r in rows)
    _write_text(path, "\n".join(lines) + "\n" + body)


def load_gaussians(path, with_meta: bool = False):
    radius, count, meta, rows = None, None, {}, []
    with open(path, encoding="utf-8") as f:
        first = f.readline().rstrip("\n")
        if first != GAUSSIAN_MAGIC:
            raise FormatError(f"{path}: not a Gaussian file")
        for line in f:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(" ")
                if key == "radius":
                    radius = float(val)
                elif key == "count":
                    count = int(val)
                else:
                    meta[key] = json.loads(val)
            elif line.strip():
                rows.append([float(x) for x in line.split()])
    if radius is None or count is None:
        raise FormatError(f"{path}: missing radius/count header")
    arr = np.array(rows, dtype=np.float64).reshape(-1, 5)
    if len(arr) != count:
        raise FormatError(f"{path}: header says {count} Gaussians, found {len(arr)}")
    gset = SphericalGaussianSet(arr[:, :3], arr[:, 3], arr[:, 4], radius)
    return (gset, meta) if with_meta else gset


# -- point lists -----------------------------------------------------------


def save_points(path, points: np.ndarray):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    body = "".join(" ".join(FMT % x for x in p) + "\n" for p in points)
    _write_text(path, f"{POINTS_MAGIC}\n# count {len(points)}\n" + body)


def load_points(path) -> np.ndarray:
    with open(path, encoding="utf-8") as f:
        if f.readline().rstrip("\n") != POINTS_MAGIC:
            raise FormatError(f"{path}: not a point list")
        rows = [[float(x) for x in line.split()] for line in f if line.strip() and not line.startswith("#")]
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


# -- cameras ---------------------------------------------------------------


def cameras_to_doc(cameras: list[Camera]) -> dict:
    return {"views": [
        {"width": c.width, "height": c.height, "fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy,
         "world_to_camera": np.asarray(c.world_to_camera).reshape(-1).tolist()}
        for c in cameras
    ]}


def cameras_from_doc(doc: dict) -> list[Camera]:
    try:
        return [Camera(v["fx"], v["fy"], v["cx"], v["cy"], int(v["width"]), int(v["height"]),
                       np.array(v["world_to_camera"], dtype=np.float64).reshape(4, 4))
                for v in doc["views"]]
    except (KeyError, TypeError) as e:
        raise FormatError(f"malformed camera document: {e}") from e


def save_cameras(path, cameras):
    dump_json(cameras_to_doc(cameras), path)


def load_cameras(path) -> list[Camera]:
    return cameras_from_doc(load_json(path))


# -- curves ----------------------------------------------------------------


def curves_to_doc(curves: CurveNetwork) -> dict:
    return {"curves": [{"control_points": c.control_points.tolist(), "weights": c.weights.tolist()}
                       for c in curves]}


def curves_from_doc(doc: dict) -> CurveNetwork:
    try:
        items = doc["curves"]
        return CurveNetwork.from_arrays([c["control_points"] for c in items], [c["weights"] for c in items])
    except (KeyError, TypeError) as e:
        raise FormatError(f"malformed curve document: {e}") from e


def save_curves(path, curves: CurveNetwork):
    dump_json(curves_to_doc(curves), path)


def load_curves(path) -> CurveNetwork:
    return curves_from_doc(load_json(path))


# -- metric reports --------------------------------------------------------


def save_report(path, report: MetricReport):
    dump_json(report.to_dict(), path)


def load_report(path) -> MetricReport:
    return MetricReport(**load_json(path))


# -- images ----------------------------------------------------------------


def save_pgm(path, image: np.ndarray, maxval: int = 65535):
    """Binary PGM of an image in [0, 1]; 16-bit big-endian when ``maxval`` > 255."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if img.ndim != 2:
        raise ValueError("PGM images are single channel")
    q = np.rint(img * maxval)
    data = q.astype(">u2" if maxval > 255 else "u1").tobytes()
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        f.write(data)


def load_pgm(path) -> np.ndarray:
    """Read a binary PGM as float64 in [0, 1]."""
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(raw):
            raise FormatError(f"{path}: truncated PGM header")
        if raw[pos:pos + 1] == b"#":
            pos = raw.find(b"\n", pos) + 1 or len(raw)
            continue
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: only binary PGM (P5) is supported")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as e:
        raise FormatError(f"{path}: bad PGM header") from e
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: bad PGM header")
    dtype = ">u2" if maxval > 255 else "u1"
    n = w * h * np.dtype(dtype).itemsize
    if len(raw) - pos < n:
        raise FormatError(f"{path}: truncated raster")
    data = np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos)
    return data.reshape(h, w).astype(np.float64) / maxval


# -- training log ----------------------------------------------------------


def save_train_log(path, log_):
    """Tab-separated table, one row per iteration, columns as in ``TrainLog.COLUMNS``."""
    lines = ["\t".join(log_.COLUMNS)]
    for row in log_.rows:
        lines.append("\t".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    _write_text(path, "\n".join(lines) + "\n")


def load_train_log(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        out = []
        for line in f:
            vals = line.rstrip("\n").split("\t")
            out.append({k: _number(v) for k, v in zip(header, vals)})
    return out


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)
