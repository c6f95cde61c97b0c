"""Command-line driver: ``splatcurves {synth,train,extract,eval,pipeline}``.

Every stage reads and writes a fixed layout under the output directory::

    scene/    cameras.json  edges/view_NNN.pgm  gt_points.txt  model.json
    train/    checkpoint_phase1.txt  gaussians.txt  train_log.tsv
    extract/  curves.json
    eval/     report.json  summary.tsv  contact_sheet.pgm

Exit status: 0 success, 2 bad configuration, 3 degenerate data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .curves import ExtractConfig, TooFewGaussiansError, extract_curves
from .metrics import DEFAULT_SPACING, DEFAULT_THRESHOLD, VOXEL_RES, compute_metrics
from .render import render
from .scene import MODEL_KINDS, make_scene
from .train import DegenerateDataError, TrainConfig, train

log = logging.getLogger("splatcurves")

WORKERS_ENV = "SPLATCURVES_WORKERS"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


class StageError(RuntimeError):
    """A stage could not find the artefacts it consumes."""

    def __init__(self, stage: str, msg: str):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


SCENE_DEFAULTS = dict(kind="cube", params={}, n_views=30, resolution=256, line_width_px=1.5,
                      hidden_line_removal=True)
EVAL_DEFAULTS = dict(threshold=DEFAULT_THRESHOLD, sample_spacing=DEFAULT_SPACING, squared_cd=False,
                     voxel_res=VOXEL_RES)


@dataclass
class PipelineConfig:
    scene: dict = field(default_factory=lambda: dict(SCENE_DEFAULTS))
    train: TrainConfig = field(default_factory=TrainConfig)
    extract: ExtractConfig = field(default_factory=ExtractConfig)
    eval: dict = field(default_factory=lambda: dict(EVAL_DEFAULTS))
    out: str = "run"
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None, out: str | None = None) -> "PipelineConfig":
        unknown = set(d) - {"scene", "train", "extract", "eval", "out", "seed"}
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        try:
            scene = dict(d.get("scene", {}))
            if "data" in scene:
                data = scene["data"]
                for key in ("cameras", "edge_maps"):
                    if key not in data:
                        raise ConfigError(f"scene.data needs '{key}'")
                paths = [data["cameras"], *data["edge_maps"]] + ([data["gt_points"]] if "gt_points" in data else [])
                missing = [p for p in paths if not Path(p).exists()]
                if missing:
                    raise ConfigError(f"scene.data paths do not exist: {missing}")
            else:
                extra = set(scene) - set(SCENE_DEFAULTS)
                if extra:
                    raise ConfigError(f"unknown scene keys: {sorted(extra)}")
                scene = {**SCENE_DEFAULTS, **scene}
                if scene["kind"] not in MODEL_KINDS:
                    raise ConfigError(f"unknown scene kind {scene['kind']!r}; expected one of {MODEL_KINDS}")
            ev = dict(d.get("eval", {}))
            extra = set(ev) - set(EVAL_DEFAULTS)
            if extra:
                raise ConfigError(f"unknown eval keys: {sorted(extra)}")
            s = int(d.get("seed", 0) if seed is None else seed)
            # the top-level seed is authoritative for every stochastic stage
            tr = TrainConfig.from_dict({**d.get("train", {}), "seed": s})
            ex = ExtractConfig.from_dict({**d.get("extract", {}), "seed": s})
        except ConfigError:
            raise
        except (ValueError, TypeError) as e:
            raise ConfigError(str(e)) from e
        return cls(scene, tr, ex, {**EVAL_DEFAULTS, **ev}, str(out or d.get("out", "run")), s)

    def to_dict(self) -> dict:
        return dict(scene=self.scene, train=self.train.to_dict(), extract=self.extract.to_dict(),
                    eval=self.eval, out=self.out, seed=self.seed)


def load_config(path: str | None, seed: int | None = None, out: str | None = None) -> PipelineConfig:
    doc = {}
    if path is not None:
        try:
            doc = io.load_json(path)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    return PipelineConfig.from_dict(doc, seed, out)


def workers_from_env() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as e:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from e
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be at least 1")
    return n


def _dirs(cfg: PipelineConfig) -> dict:
    root = Path(cfg.out)
    return {k: root / k for k in ("scene", "train", "extract", "eval")}


def _edge_paths(scene_dir: Path, n: int) -> list[Path]:
    return [scene_dir / "edges" / f"view_{i:03d}.pgm" for i in range(n)]


# -- stages ----------------------------------------------------------------


def cmd_synth(cfg: PipelineConfig):
    if "data" in cfg.scene:
        raise ConfigError("synth needs a synthetic scene description, not scene.data")
    sc = cfg.scene
    try:
        bundle = make_scene(sc["kind"], n_views=sc["n_views"], resolution=sc["resolution"],
                            line_width_px=sc["line_width_px"], hidden_line_removal=sc["hidden_line_removal"],
                            **sc["params"])
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid scene settings: {e}") from e
    d = _dirs(cfg)["scene"]
    (d / "edges").mkdir(parents=True, exist_ok=True)
    io.save_cameras(d / "cameras.json", bundle.cameras)
    for path, em in zip(_edge_paths(d, len(bundle.edge_maps)), bundle.edge_maps):
        io.save_pgm(path, em)
    io.save_points(d / "gt_points.txt", bundle.gt_points)
    io.dump_json(bundle.meta, d / "model.json")
    print(f"synth: {len(bundle.cameras)} views, {len(bundle.gt_points)} GT points -> {d}")
    return bundle


def load_views(cfg: PipelineConfig):
    """(cameras, edge maps) from scene.data or from the synth stage's output."""
    if "data" in cfg.scene:
        data = cfg.scene["data"]
        cams = io.load_cameras(data["cameras"])
        paths = [Path(p) for p in data["edge_maps"]]
    else:
        d = _dirs(cfg)["scene"]
        if not (d / "cameras.json").exists():
            raise StageError("train", f"no cameras at {d / 'cameras.json'}; run synth first")
        cams = io.load_cameras(d / "cameras.json")
        paths = _edge_paths(d, len(cams))
    if len(paths) != len(cams):
        raise StageError("train", f"{len(cams)} cameras but {len(paths)} edge maps")
    maps = []
    for cam, p in zip(cams, paths):
        if not p.exists():
            raise StageError("train", f"missing edge map {p}")
        em = io.load_pgm(p)
        if em.shape != (cam.height, cam.width):
            raise StageError("train", f"{p} is {em.shape}, camera expects {(cam.height, cam.width)}")
        maps.append(em)
    return cams, maps


def _check_finite(gset, stage):
    if not (np.all(np.isfinite(gset.centers)) and np.all(np.isfinite(gset.opacities))
            and np.all(np.isfinite(gset.colors))):
        raise NumericalError(f"[{stage}] non-finite Gaussian parameters")


def cmd_train(cfg: PipelineConfig, resume: str | None = None):
    cams, maps = load_views(cfg)
    d = _dirs(cfg)["train"]
    d.mkdir(parents=True, exist_ok=True)
    init, start_phase = None, 1
    if resume is not None:
        init, meta = io.load_gaussians(resume, with_meta=True)
        if meta.get("phase") != 1:
            raise ConfigError(f"{resume} is not a phase-1 checkpoint")
        if TrainConfig.from_dict(meta["config"]) != cfg.train:
            raise ConfigError("checkpoint was written with a different training config")
        start_phase = 2

    def on_phase(phase, gset):
        _check_finite(gset, "train")
        if phase == 1:
            meta = dict(phase=1, iteration=cfg.train.phase_iters[0], config=cfg.train.to_dict())
            io.save_gaussians(d / "checkpoint_phase1.txt", gset, meta)

    t0 = time.perf_counter()
    gset, tlog = train(list(zip(cams, maps)), cfg.train, init=init, start_phase=start_phase, progress=on_phase)
    io.save_gaussians(d / "gaussians.txt", gset,
                      dict(phase=2, iteration=cfg.train.total_iters, config=cfg.train.to_dict()))
    io.save_train_log(d / "train_log.tsv", tlog)
    print(f"train: {len(gset)} Gaussians in {time.perf_counter() - t0:.1f}s -> {d}")
    return gset, tlog


def cmd_extract(cfg: PipelineConfig):
    src = _dirs(cfg)["train"] / "gaussians.txt"
    if not src.exists():
        raise StageError("extract", f"no Gaussians at {src}; run train first")
    gset = io.load_gaussians(src)
    res = extract_curves(gset, cfg.extract, workers_from_env())
    d = _dirs(cfg)["extract"]
    d.mkdir(parents=True, exist_ok=True)
    io.save_curves(d / "curves.json", res.curves)
    obj = res.trace.objective
    print(f"extract: {len(res.lines)} segments -> {len(res.curves)} curves, "
          f"objective {obj[0]:.4e} -> {obj[-1]:.4e} ({res.trace.rejected} steps rejected) -> {d}")
    return res


def contact_sheet(cams, maps, gset, cols: int = 6) -> np.ndarray:
    """Tiles of [GT edge map | rendered Gaussians] per view."""
    tiles = [np.hstack([em, render(gset, cam)]) for cam, em in zip(cams, maps)]
    h, w = tiles[0].shape
    rows = -(-len(tiles) // cols)
    sheet = np.zeros((rows * (h + 2), cols * (w + 2)))
    for k, tile in enumerate(tiles):
        r, c = divmod(k, cols)
        sheet[r * (h + 2):r * (h + 2) + h, c * (w + 2):c * (w + 2) + w] = tile
    return sheet


def cmd_eval(cfg: PipelineConfig, sheet: bool = True):
    dirs = _dirs(cfg)
    curves_path = dirs["extract"] / "curves.json"
    if not curves_path.exists():
        raise StageError("eval", f"no curves at {curves_path}; run extract first")
    gt_path = Path(cfg.scene["data"]["gt_points"]) if "data" in cfg.scene and "gt_points" in cfg.scene["data"] \
        else dirs["scene"] / "gt_points.txt"
    if not gt_path.exists():
        raise StageError("eval", f"no ground-truth points at {gt_path}")
    curves = io.load_curves(curves_path)
    if len(curves) == 0:
        raise DegenerateDataError("[eval] the curve document is empty")
    ev = cfg.eval
    report = compute_metrics(curves, io.load_points(gt_path), ev["threshold"], ev["sample_spacing"],
                             ev["squared_cd"], ev["voxel_res"])
    d = dirs["eval"]
    d.mkdir(parents=True, exist_ok=True)
    io.save_report(d / "report.json", report)
    (d / "summary.tsv").write_text("\t".join(report.SUMMARY_FIELDS) + "\n" + report.summary_line() + "\n")
    g_path = dirs["train"] / "gaussians.txt"
    if sheet and g_path.exists():
        cams, maps = load_views(cfg)
        io.save_pgm(d / "contact_sheet.pgm", contact_sheet(cams, maps, io.load_gaussians(g_path)))
    print(f"eval: CD {report.chamfer:.4f}  P {report.precision:.4f}  R {report.recall:.4f}  "
          f"F {report.fscore:.4f}  IoU {report.iou:.4f} -> {d}")
    return report


def cmd_pipeline(cfg: PipelineConfig):
    if "data" not in cfg.scene:
        cmd_synth(cfg)
    cmd_train(cfg)
    cmd_extract(cfg)
    return cmd_eval(cfg)


# -- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="splatcurves", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="render a synthetic scene")
    t = sub.add_parser("train", parents=[common], help="fit Gaussians to the edge maps")
    t.add_argument("--resume", help="phase-1 checkpoint to continue from")
    sub.add_parser("extract", parents=[common], help="fit curves to trained Gaussians")
    e = sub.add_parser("eval", parents=[common], help="score curves against GT points")
    e.add_argument("--no-sheet", action="store_true", help="skip the contact sheet")
    sub.add_parser("pipeline", parents=[common], help="synth, train, extract, eval")
    sub.add_parser("dump-config", parents=[common], help="print the effective config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("numba").setLevel(logging.WARNING)
    try:
        cfg = load_config(args.config, args.seed, args.out)
        if args.command == "synth":
            cmd_synth(cfg)
        elif args.command == "train":
            cmd_train(cfg, args.resume)
        elif args.command == "extract":
            cmd_extract(cfg)
        elif args.command == "eval":
            cmd_eval(cfg, sheet=not args.no_sheet)
        elif args.command == "pipeline":
            cmd_pipeline(cfg)
        else:
            print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    except (ConfigError, StageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateDataError, TooFewGaussiansError, io.FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
