"""Synthetic cube from edge maps to curves: synth, train, extract, eval.

Uses the desk-scale settings (30 views at 256x256, 30^3 initial grid,
1000 + 1000 iterations). Takes about three minutes on a laptop CPU; set
SPLATCURVES_WORKERS to run the line searches on several threads.

    python demos/cube_pipeline.py [output_dir]
"""

import json
import sys
from pathlib import Path

import numpy as np

from splatcurves import io
from splatcurves.cli import main

out = Path(sys.argv[1] if len(sys.argv) > 1 else "cube_demo")
out.mkdir(parents=True, exist_ok=True)
config = {
    "scene": {"kind": "cube", "n_views": 30, "resolution": 256},
    "train": {"grid_resolution": 30, "phase_iters": [1000, 1000], "densify_interval": 100,
              "opacity_reset_interval": 500},
    "seed": 0,
    "out": str(out),
}
(out / "config.json").write_text(json.dumps(config, indent=2))
status = main(["pipeline", "--config", str(out / "config.json")])
if status:
    sys.exit(status)

counts = np.array([r["count"] for r in io.load_train_log(out / "train" / "train_log.tsv")])
print("\nGaussian count every 100 iterations:")
print(" ".join(str(c) for c in counts[99::100]))
curves = io.load_curves(out / "extract" / "curves.json")
lengths = [np.linalg.norm(np.diff(c(np.linspace(0, 1, 200)), axis=0), axis=1).sum() for c in curves]
print(f"{len(curves)} curves, lengths {np.round(sorted(lengths), 3)}")
print(f"contact sheet (GT | render per view): {out / 'eval' / 'contact_sheet.pgm'}")
